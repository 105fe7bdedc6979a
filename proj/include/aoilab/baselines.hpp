#ifndef AOILAB_BASELINES_HPP
#define AOILAB_BASELINES_HPP

// Model-based reference estimators. Both filters share one rewind-and-replay
// driver: received measurements are logged by generation slot, and a delivery
// rolls the belief back to its generation slot, applies the update there and
// predicts forward again to the current slot.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "aoilab/episode.hpp"

namespace aoilab::baselines {

using dynamics::SystemKind;
using network::AgeMode;
using network::ControlMode;

struct KalmanBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::int64_t slot = 0;
};

double asymmetry(const Eigen::MatrixXd& p);
double min_eigenvalue(const Eigen::MatrixXd& p);

struct FilterDiagnostics {
  std::int64_t regularized_innovations = 0;  // S needed 1e-9 I added
  std::int64_t clipped_covariances = 0;      // square root needed eigenvalue clipping
  std::int64_t capped_covariances = 0;       // predicted covariance hit the ceiling
};

struct Innovation {
  Eigen::VectorXd nu;
  Eigen::MatrixXd s;
};

/// Predict and update steps of one filter. The state is the estimated
/// subvector of the measurement; u is the control held over the step.
class FilterModel {
 public:
  virtual ~FilterModel() = default;
  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  /// Belief at slot s to belief at s+1 under control u(s).
  virtual void predict(KalmanBelief& b, const Eigen::VectorXd& u, FilterDiagnostics& d) const = 0;
  virtual Innovation update(KalmanBelief& b, const Eigen::VectorXd& z,
                            FilterDiagnostics& d) const = 0;
};

// ---------------------------------------------------------------------------
// Time-varying Kalman filter for the linear vehicle

struct TvkfConfig {
  double dt = 0.1;
  double q = 0.2;     // Q = q I
  double r = 1e-6;    // R = r I
  double p0 = 1.0;    // P0 = p0 I
};

class LinearGaussianModel final : public FilterModel {
 public:
  explicit LinearGaussianModel(const TvkfConfig& cfg = {});
  int state_dim() const override { return 4; }
  int control_dim() const override { return 2; }
  void predict(KalmanBelief& b, const Eigen::VectorXd& u, FilterDiagnostics& d) const override;
  /// Joseph-form covariance update.
  Innovation update(KalmanBelief& b, const Eigen::VectorXd& z, FilterDiagnostics& d) const override;

 private:
  Eigen::Matrix4d a_;
  Eigen::Matrix<double, 4, 2> b_;
  Eigen::Matrix4d q_;
  Eigen::Matrix4d r_;
};

// ---------------------------------------------------------------------------
// Unscented Kalman filter

struct UkfConfig {
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa = 0.0;
  Eigen::MatrixXd q;  // process noise
  Eigen::MatrixXd r;  // measurement noise
  // Eigenvalue ceiling for the predicted covariance. Without it a long gap
  // lets the unscented second-order term feed on itself through the
  // cartpole's theta_dot^2 coupling.
  double max_variance = std::numeric_limits<double>::infinity();

  void validate(int n) const;
};

struct SigmaWeights {
  double lambda = 0.0;
  Eigen::VectorXd mean;  // 2n+1
  Eigen::VectorXd cov;   // 2n+1
};
SigmaWeights sigma_weights(int n, const UkfConfig& cfg);

/// Noise-free transition on the filter state.
using Transition = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

/// Unscented predict through `f`; the measurement is the state itself.
class UnscentedModel final : public FilterModel {
 public:
  UnscentedModel(int n, int n_u, Transition f, UkfConfig cfg);
  int state_dim() const override { return n_; }
  int control_dim() const override { return n_u_; }
  void predict(KalmanBelief& b, const Eigen::VectorXd& u, FilterDiagnostics& d) const override;
  Innovation update(KalmanBelief& b, const Eigen::VectorXd& z, FilterDiagnostics& d) const override;

  const SigmaWeights& weights() const { return w_; }

 private:
  Eigen::MatrixXd sigma_points(const KalmanBelief& b, FilterDiagnostics& d) const;

  int n_;
  int n_u_;
  Transition f_;
  UkfConfig cfg_;
  SigmaWeights w_;
};

/// UKF on the linear vehicle (same model as the TVKF).
std::shared_ptr<UnscentedModel> linear_ukf_model(const TvkfConfig& cfg = {});

/// UKF on the cartpole with state [theta, theta_dot, x_dot] and the force as
/// input. Under networked control the held force may be wrong, which adds
/// 2 force_mag^2 J J^T to Q, J the force Jacobian of the step at theta = 0.
std::shared_ptr<UnscentedModel> cartpole_ukf_model(const dynamics::CartpoleParams& params,
                                                   ControlMode control_mode,
                                                   double q_floor = 1e-8, double r = 1e-6,
                                                   double max_variance = 100.0);

// ---------------------------------------------------------------------------
// Rewind-and-replay driver

struct LoggedMeasurement {
  Eigen::VectorXd z;         // observed state entries
  Eigen::VectorXd controls;  // controls carried by the packet
};

/// Received measurements keyed by (believed) generation slot, the true
/// controls when known, and belief checkpoints.
class MeasurementBuffer {
 public:
  void add(std::int64_t gen_slot, LoggedMeasurement m);
  const std::vector<LoggedMeasurement>* at(std::int64_t slot) const;
  /// Controls of the latest-generated packet at or before `slot`.
  std::optional<Eigen::VectorXd> held_control(std::int64_t slot) const;
  std::size_t size() const { return count_; }

 private:
  std::map<std::int64_t, std::vector<LoggedMeasurement>> log_;
  std::size_t count_ = 0;
};

class RewindingFilter final : public network::StreamingEstimator {
 public:
  RewindingFilter(std::shared_ptr<const FilterModel> model, SystemKind system,
                  ControlMode control_mode, AgeMode age_mode, KalmanBelief initial,
                  std::int64_t checkpoint_stride = 1);

  void reset() override;
  Eigen::VectorXd step(const network::Observation& obs) override;

  const KalmanBelief& belief() const { return current_; }
  const FilterDiagnostics& diagnostics() const { return diag_; }
  /// Latest innovation of each generation slot that received an update.
  const std::map<std::int64_t, Innovation>& innovations() const { return innovations_; }
  const MeasurementBuffer& buffer() const { return buffer_; }

 private:
  Eigen::VectorXd control_for(std::int64_t slot) const;
  void checkpoint(const KalmanBelief& prior);
  void apply_measurements(KalmanBelief& b);
  void replay_from(std::int64_t slot, std::int64_t t);

  std::shared_ptr<const FilterModel> model_;
  SystemKind system_;
  ControlMode control_mode_;
  AgeMode age_mode_;
  KalmanBelief initial_;
  std::int64_t stride_;

  MeasurementBuffer buffer_;
  std::vector<Eigen::VectorXd> true_controls_;  // index slot - 1
  std::map<std::int64_t, KalmanBelief> checkpoints_;  // priors
  KalmanBelief current_;
  FilterDiagnostics diag_;
  std::map<std::int64_t, Innovation> innovations_;
};

enum class FilterKind { tvkf, ukf };
std::string_view to_string(FilterKind kind);
FilterKind parse_filter(std::string_view name);

/// Filter with the default configuration for `system`.
std::unique_ptr<RewindingFilter> make_filter(FilterKind kind, SystemKind system,
                                             const dynamics::PlantParams& plant,
                                             ControlMode control_mode, AgeMode age_mode);

network::RmseReport baseline_evaluate(FilterKind kind, const network::EvalProtocol& protocol,
                                      AgeMode age_mode);

}  // namespace aoilab::baselines

#endif  // AOILAB_BASELINES_HPP
