#ifndef AOILAB_LAA_HPP
#define AOILAB_LAA_HPP

// The learned estimator: input assembly, the LSTM -> FC1 -> FC2 model, the
// replay memory and the training loop.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aoilab/episode.hpp"
#include "aoilab/nn.hpp"

namespace aoilab::laa {

using dynamics::SystemKind;
using network::AgeMode;
using network::ControlMode;

/// I(t) = [yhat(t-1), ytilde(t), age_y, age_u]. Without ages the two trailing
/// entries are dropped.
struct EstimatorInput {
  Eigen::VectorXd prev_estimate;
  Eigen::VectorXd latest_measurement;
  double age_y = 0.0;
  double age_u = 0.0;
  bool with_age = true;

  Eigen::Index size() const;
  Eigen::VectorXd flatten() const;
};

int input_size(SystemKind system, bool with_age);

/// Assembles I(t) from what the receiver holds. In known-control mode the
/// control entries of the measurement are replaced by `true_controls` and
/// age_u is 0; in networked mode age_u equals age_y.
EstimatorInput build_input(const network::Receiver& rx, const Eigen::VectorXd& prev_estimate,
                           SystemKind system, ControlMode control_mode,
                           const std::optional<dynamics::MeasVec>& true_controls,
                           AgeMode age_mode);

/// Feature scales: the network sees input ./ input and its raw output is
/// multiplied by output.
struct Scaling {
  Eigen::VectorXd input;
  Eigen::VectorXd output;

  static Scaling defaults(SystemKind system, bool with_age,
                          const dynamics::PlantParams& plant = {});
};

struct ModelSpec {
  SystemKind system = SystemKind::linear;
  bool with_age = true;
  int n_h = 64;
  int n_fc = 64;

  nn::StackShape shape() const;
};

class LaaModel {
 public:
  LaaModel() = default;
  LaaModel(const ModelSpec& spec, nn::StackParams params, Scaling scaling);
  static LaaModel initialized(const ModelSpec& spec, std::uint64_t seed,
                              const dynamics::PlantParams& plant = {});
  static LaaModel zeros(const ModelSpec& spec, const dynamics::PlantParams& plant = {});

  /// One estimation step; advances the recurrent state.
  Eigen::VectorXd estimate(const EstimatorInput& input);
  Eigen::VectorXd estimate_scaled(const Eigen::VectorXd& features);

  Eigen::VectorXd scale_input(const EstimatorInput& input) const;
  void reset_state();
  const nn::LstmState& state() const { return state_; }
  void set_state(const nn::LstmState& s) { state_ = s; }

  const ModelSpec& spec() const { return spec_; }
  const Scaling& scaling() const { return scaling_; }
  nn::StackParams& params() { return params_; }
  const nn::StackParams& params() const { return params_; }

 private:
  ModelSpec spec_;
  nn::StackParams params_;
  Scaling scaling_;
  nn::LstmState state_;
};

/// mean over pairs of ||y - yhat||^2.
double loss(const std::vector<Eigen::VectorXd>& predictions,
            const std::vector<Eigen::VectorXd>& ground_truths);

// ---------------------------------------------------------------------------
// Replay memory

struct Experience {
  Eigen::VectorXd features;  // scaled I(t)
  Eigen::VectorXd target;    // estimated subvector of y(t)
  std::uint64_t episode_id = 0;
  std::int64_t slot = 0;
};

/// Fixed-capacity FIFO ring of experiences.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(Experience e);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return ring_.size(); }
  std::uint64_t insertions() const { return inserted_; }

  /// Experience with global insertion number n (must still be stored).
  const Experience& by_insertion(std::uint64_t n) const;
  bool holds(std::uint64_t n) const;
  std::uint64_t oldest() const { return inserted_ - size_; }

  /// k distinct insertion numbers drawn uniformly from the stored ones.
  std::vector<std::uint64_t> sample(std::size_t k, Rng& rng) const;

  /// Insertion numbers of a window of up to `length` consecutive slots of the
  /// same episode ending at `n`, oldest first.
  std::vector<std::uint64_t> window(std::uint64_t n, std::size_t length) const;

 private:
  std::vector<Experience> ring_;
  std::size_t size_ = 0;
  std::uint64_t inserted_ = 0;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::int64_t episodes = 30;  // M
  std::int64_t horizon = 2000;  // T
  std::size_t batch_size = 256;  // K
  double lr = 1e-4;
  double weight_decay = 1e-3;
  std::size_t replay_capacity = 100000;
  std::size_t bptt_window = 32;
  std::int64_t update_period = 4;
  bool single_precision = true;  // mini-batch kernel in float
  std::uint64_t seed = 0;
  int n_h = 64;

  void validate() const;
};

struct TrainSetup {
  SystemKind system = SystemKind::linear;
  dynamics::PlantParams plant;
  network::QueueConfig network;  // used when !time_varying
  bool time_varying = false;
  ControlMode control_mode = ControlMode::networked;
  bool with_age = true;
};

struct TrainResult {
  LaaModel model;
  std::vector<double> losses;  // one per gradient update
  std::int64_t skipped_updates = 0;
  std::vector<network::QueueConfig> episode_networks;
};

/// Master seed of the training trajectories; kept apart from evaluation seeds.
std::uint64_t training_trace_seed(std::uint64_t seed);

TrainResult train(const TrainConfig& cfg, const TrainSetup& setup);

/// Mean of the first and last tenth of a loss trace.
struct LossProgress {
  double first_decile = 0.0;
  double last_decile = 0.0;
  double ratio() const { return last_decile / first_decile; }
};
LossProgress loss_progress(const std::vector<double>& losses);

// ---------------------------------------------------------------------------
// Evaluation

/// Runs a frozen model over a trace slot by slot, feeding back its estimate.
class LaaEstimator final : public network::StreamingEstimator {
 public:
  LaaEstimator(LaaModel model, ControlMode control_mode, AgeMode age_mode);

  void reset() override;
  Eigen::VectorXd step(const network::Observation& obs) override;

 private:
  LaaModel model_;
  ControlMode control_mode_;
  AgeMode age_mode_;
  network::Receiver rx_;
  Eigen::VectorXd prev_;
};

network::RmseReport evaluate(const LaaModel& model, const network::EvalProtocol& protocol,
                             AgeMode age_mode);

// ---------------------------------------------------------------------------
// Persistence: nn checkpoint plus a JSON sidecar at <path>.json

struct ModelMetadata {
  ModelSpec spec;
  ControlMode control_mode = ControlMode::networked;
  bool time_varying = false;
  network::QueueConfig network;
  TrainConfig train;
  dynamics::PlantParams plant;
};

void save_model(const std::filesystem::path& path, const LaaModel& model,
                const ModelMetadata& meta);

struct LoadedModel {
  LaaModel model;
  ModelMetadata meta;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace aoilab::laa

#endif  // AOILAB_LAA_HPP
