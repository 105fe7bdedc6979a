#include <stdexcept>

#include "aoilab/baselines.hpp"

namespace aoilab::baselines {

void MeasurementBuffer::add(std::int64_t gen_slot, LoggedMeasurement m) {
  log_[gen_slot].push_back(std::move(m));
  ++count_;
}

const std::vector<LoggedMeasurement>* MeasurementBuffer::at(std::int64_t slot) const {
  const auto it = log_.find(slot);
  return it == log_.end() ? nullptr : &it->second;
}

std::optional<Eigen::VectorXd> MeasurementBuffer::held_control(std::int64_t slot) const {
  auto it = log_.upper_bound(slot);
  if (it == log_.begin()) return std::nullopt;
  --it;
  return it->second.back().controls;
}

RewindingFilter::RewindingFilter(std::shared_ptr<const FilterModel> model, SystemKind system,
                                 ControlMode control_mode, AgeMode age_mode, KalmanBelief initial,
                                 std::int64_t checkpoint_stride)
    : model_(std::move(model)),
      system_(system),
      control_mode_(control_mode),
      age_mode_(age_mode),
      initial_(std::move(initial)),
      stride_(checkpoint_stride) {
  if (!model_) throw std::invalid_argument("RewindingFilter: null model");
  if (stride_ < 1) throw std::invalid_argument("RewindingFilter: checkpoint stride must be >= 1");
  if (age_mode_ == AgeMode::none) throw std::invalid_argument("RewindingFilter: filters need ages");
  if (model_->state_dim() != dynamics::estimated_dim(system_) ||
      model_->control_dim() != dynamics::control_dim(system_)) {
    throw std::invalid_argument("RewindingFilter: model does not fit the system");
  }
  const int n = model_->state_dim();
  if (initial_.mean.size() != n || initial_.cov.rows() != n || initial_.cov.cols() != n) {
    throw std::invalid_argument("RewindingFilter: initial belief has the wrong size");
  }
  initial_.slot = 1;
  reset();
}

void RewindingFilter::reset() {
  buffer_ = MeasurementBuffer{};
  true_controls_.clear();
  checkpoints_.clear();
  innovations_.clear();
  diag_ = FilterDiagnostics{};
  current_ = KalmanBelief{};
}

Eigen::VectorXd RewindingFilter::control_for(std::int64_t slot) const {
  if (control_mode_ == ControlMode::known) return true_controls_.at(static_cast<std::size_t>(slot - 1));
  if (auto u = buffer_.held_control(slot)) return *u;
  return Eigen::VectorXd::Zero(model_->control_dim());
}

void RewindingFilter::checkpoint(const KalmanBelief& prior) {
  if ((prior.slot - 1) % stride_ == 0) checkpoints_[prior.slot] = prior;
}

void RewindingFilter::apply_measurements(KalmanBelief& b) {
  const auto* logged = buffer_.at(b.slot);
  if (logged == nullptr) return;
  for (const LoggedMeasurement& m : *logged) innovations_[b.slot] = model_->update(b, m.z, diag_);
}

void RewindingFilter::replay_from(std::int64_t slot, std::int64_t t) {
  auto it = checkpoints_.upper_bound(slot);
  --it;  // slot 1 is always checkpointed
  KalmanBelief b = it->second;
  apply_measurements(b);
  while (b.slot < t) {
    model_->predict(b, control_for(b.slot), diag_);
    checkpoint(b);
    apply_measurements(b);
  }
  current_ = std::move(b);
}

Eigen::VectorXd RewindingFilter::step(const network::Observation& obs) {
  const std::int64_t t = obs.t;
  if (t != current_.slot + 1) throw std::invalid_argument("RewindingFilter: slots must advance by 1");
  if (control_mode_ == ControlMode::known) {
    if (!obs.true_controls) throw std::invalid_argument("RewindingFilter: missing true controls");
    true_controls_.emplace_back(*obs.true_controls);
  }

  if (t == 1) {
    current_ = initial_;
  } else {
    model_->predict(current_, control_for(t - 1), diag_);
  }
  checkpoint(current_);

  if (obs.delivered != nullptr) {
    const int n = model_->state_dim();
    const auto& v = obs.delivered->payload.values;
    const std::int64_t gen =
        network::believed_gen_slot(*obs.delivered, t, obs.noisy_age, age_mode_);
    buffer_.add(gen, {v.head(n), v.tail(model_->control_dim())});
    replay_from(gen, t);
  } else {
    apply_measurements(current_);
  }
  return current_.mean;
}

}  // namespace aoilab::baselines
