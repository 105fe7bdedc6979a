#include "aoilab/laa.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace aoilab::laa {

Eigen::Index EstimatorInput::size() const {
  return prev_estimate.size() + latest_measurement.size() + (with_age ? 2 : 0);
}

Eigen::VectorXd EstimatorInput::flatten() const {
  Eigen::VectorXd v(size());
  v << prev_estimate, latest_measurement;
  if (with_age) {
    v(v.size() - 2) = age_y;
    v(v.size() - 1) = age_u;
  }
  return v;
}

int input_size(SystemKind system, bool with_age) {
  return dynamics::estimated_dim(system) + dynamics::measurement_dim(system) + (with_age ? 2 : 0);
}

EstimatorInput build_input(const network::Receiver& rx, const Eigen::VectorXd& prev_estimate,
                           SystemKind system, ControlMode control_mode,
                           const std::optional<dynamics::MeasVec>& true_controls,
                           AgeMode age_mode) {
  const int n_e = dynamics::estimated_dim(system);
  const int n_m = dynamics::measurement_dim(system);
  const int n_u = dynamics::control_dim(system);
  if (prev_estimate.size() != n_e) throw nn::DimensionError("build_input: bad previous estimate");
  if (rx.tracker().last_value.size() != n_m) {
    throw nn::DimensionError("build_input: receiver holds the wrong measurement length");
  }

  EstimatorInput in;
  in.prev_estimate = prev_estimate;
  in.latest_measurement = rx.tracker().last_value;
  in.with_age = age_mode != AgeMode::none;
  in.age_y = rx.age(age_mode);
  if (control_mode == ControlMode::known) {
    if (!true_controls || true_controls->size() != n_u) {
      throw std::invalid_argument("build_input: known-control mode needs the true controls");
    }
    in.latest_measurement.tail(n_u) = *true_controls;
    in.age_u = 0.0;
  } else {
    in.age_u = in.age_y;
  }
  return in;
}

Scaling Scaling::defaults(SystemKind system, bool with_age, const dynamics::PlantParams& plant) {
  Scaling s;
  const double age_scale = 100.0;
  if (system == SystemKind::linear) {
    const double pos = plant.linear.position_limit;
    const double vel = plant.linear.velocity_limit;
    const double acc = plant.linear.control_limit;
    s.output.resize(4);
    s.output << pos, pos, vel, vel;
    Eigen::VectorXd meas(6);
    meas << pos, pos, vel, vel, acc, acc;
    s.input.resize(input_size(system, with_age));
    s.input.head(10) << s.output, meas;
  } else {
    const double pi = std::numbers::pi;
    const double vel = plant.cartpole.velocity_limit;
    s.output.resize(3);
    s.output << pi, 10.0, vel;
    Eigen::VectorXd meas(4);
    meas << pi, 10.0, vel, plant.cartpole.force_mag;
    s.input.resize(input_size(system, with_age));
    s.input.head(7) << s.output, meas;
  }
  if (with_age) s.input.tail(2).setConstant(age_scale);
  return s;
}

nn::StackShape ModelSpec::shape() const {
  return {input_size(system, with_age), n_h, n_fc, dynamics::estimated_dim(system)};
}

LaaModel::LaaModel(const ModelSpec& spec, nn::StackParams params, Scaling scaling)
    : spec_(spec), params_(std::move(params)), scaling_(std::move(scaling)) {
  if (!(params_.shape() == spec_.shape())) throw nn::DimensionError("LaaModel: shape mismatch");
  if (scaling_.input.size() != spec_.shape().n_x || scaling_.output.size() != spec_.shape().n_o) {
    throw nn::DimensionError("LaaModel: scaling length mismatch");
  }
  if ((scaling_.input.array() <= 0.0).any() || (scaling_.output.array() <= 0.0).any()) {
    throw std::invalid_argument("LaaModel: scales must be positive");
  }
  reset_state();
}

LaaModel LaaModel::initialized(const ModelSpec& spec, std::uint64_t seed,
                               const dynamics::PlantParams& plant) {
  Rng rng = make_stream(seed, streams::kInit);
  return LaaModel(spec, nn::init_params(spec.shape(), rng),
                  Scaling::defaults(spec.system, spec.with_age, plant));
}

LaaModel LaaModel::zeros(const ModelSpec& spec, const dynamics::PlantParams& plant) {
  return LaaModel(spec, nn::StackParams::zeros(spec.shape()),
                  Scaling::defaults(spec.system, spec.with_age, plant));
}

void LaaModel::reset_state() { state_ = nn::LstmState::zeros(spec_.n_h, 1); }

Eigen::VectorXd LaaModel::scale_input(const EstimatorInput& input) const {
  if (input.size() != scaling_.input.size()) {
    throw nn::DimensionError("LaaModel: input length does not match the model");
  }
  return input.flatten().cwiseQuotient(scaling_.input);
}

Eigen::VectorXd LaaModel::estimate_scaled(const Eigen::VectorXd& features) {
  state_ = nn::lstm_forward(params_.lstm, nn::Batch(features), state_);
  const nn::Batch hidden = nn::fc_forward(params_.fc1, state_.h, true);
  const nn::Batch out = nn::fc_forward(params_.fc2, hidden, false);
  return scaling_.output.cwiseProduct(out.col(0));
}

Eigen::VectorXd LaaModel::estimate(const EstimatorInput& input) {
  return estimate_scaled(scale_input(input));
}

double loss(const std::vector<Eigen::VectorXd>& predictions,
            const std::vector<Eigen::VectorXd>& ground_truths) {
  if (predictions.empty()) throw std::invalid_argument("loss: empty input");
  if (predictions.size() != ground_truths.size()) {
    throw std::invalid_argument("loss: sequences are not aligned");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != ground_truths[i].size()) {
      throw nn::DimensionError("loss: vector length mismatch");
    }
    sum += (ground_truths[i] - predictions[i]).squaredNorm();
  }
  return sum / static_cast<double>(predictions.size());
}

LaaEstimator::LaaEstimator(LaaModel model, ControlMode control_mode, AgeMode age_mode)
    : model_(std::move(model)),
      control_mode_(control_mode),
      age_mode_(age_mode),
      rx_(dynamics::measurement_dim(model_.spec().system)) {
  if ((age_mode_ == AgeMode::none) == model_.spec().with_age) {
    throw std::invalid_argument("LaaEstimator: age mode does not match the model's inputs");
  }
  reset();
}

void LaaEstimator::reset() {
  model_.reset_state();
  rx_ = network::Receiver(dynamics::measurement_dim(model_.spec().system));
  prev_ = Eigen::VectorXd::Zero(dynamics::estimated_dim(model_.spec().system));
}

Eigen::VectorXd LaaEstimator::step(const network::Observation& obs) {
  rx_.observe(obs.t, obs.delivered, obs.noisy_age);
  const EstimatorInput in = build_input(rx_, prev_, model_.spec().system, control_mode_,
                                         obs.true_controls, age_mode_);
  prev_ = model_.estimate(in);
  return prev_;
}

network::RmseReport evaluate(const LaaModel& model, const network::EvalProtocol& protocol,
                             AgeMode age_mode) {
  if (model.spec().system != protocol.system) {
    throw std::invalid_argument("evaluate: model was trained for a different system");
  }
  LaaEstimator est(model, protocol.control_mode, age_mode);
  return network::evaluate_estimator(est, protocol);
}

}  // namespace aoilab::laa
