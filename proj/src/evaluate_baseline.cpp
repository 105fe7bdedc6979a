#include <stdexcept>
#include <string>

#include "aoilab/baselines.hpp"

namespace aoilab::baselines {

std::string_view to_string(FilterKind kind) { return kind == FilterKind::tvkf ? "tvkf" : "ukf"; }

FilterKind parse_filter(std::string_view name) {
  if (name == "tvkf") return FilterKind::tvkf;
  if (name == "ukf") return FilterKind::ukf;
  throw std::invalid_argument("unknown filter '" + std::string(name) + "'");
}

std::unique_ptr<RewindingFilter> make_filter(FilterKind kind, SystemKind system,
                                             const dynamics::PlantParams& plant,
                                             ControlMode control_mode, AgeMode age_mode) {
  std::shared_ptr<const FilterModel> model;
  TvkfConfig tc;
  tc.dt = plant.linear.dt;
  tc.q = plant.linear.noise_var;
  if (kind == FilterKind::tvkf) {
    if (system != SystemKind::linear) throw std::invalid_argument("tvkf needs the linear system");
    model = std::make_shared<LinearGaussianModel>(tc);
  } else if (system == SystemKind::linear) {
    model = linear_ukf_model(tc);
  } else {
    model = cartpole_ukf_model(plant.cartpole, control_mode);
  }
  const int n = model->state_dim();
  // The cartpole's initial state is drawn uniformly; its variance seeds P0.
  // A unit P0 there lets the unscented prediction run away before the first
  // packet arrives.
  const double spread = plant.cartpole.initial_spread;
  const double p0 = system == SystemKind::linear ? tc.p0 : spread * spread / 3.0;
  KalmanBelief init{Eigen::VectorXd::Zero(n), p0 * Eigen::MatrixXd::Identity(n, n), 1};
  return std::make_unique<RewindingFilter>(model, system, control_mode, age_mode, init);
}

network::RmseReport baseline_evaluate(FilterKind kind, const network::EvalProtocol& protocol,
                                      AgeMode age_mode) {
  auto filter = make_filter(kind, protocol.system, protocol.plant, protocol.control_mode, age_mode);
  return network::evaluate_estimator(*filter, protocol);
}

}  // namespace aoilab::baselines
