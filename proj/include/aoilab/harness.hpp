#ifndef AOILAB_HARNESS_HPP
#define AOILAB_HARNESS_HPP

// Experiment orchestration: configs, the evaluation grid, the age sweep and
// cross-network testing, all emitting CSV.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aoilab/baselines.hpp"
#include "aoilab/laa.hpp"

namespace aoilab::harness {

using dynamics::SystemKind;
using network::AgeMode;
using network::ControlMode;
using network::QueueConfig;

inline constexpr const char* kVersion = "aoilab-1.0.0";
inline constexpr const char* kCsvSchema = "rmse-v1";

enum class Estimator { laa, tvkf, ukf };
std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view name);

struct EvalSize {
  std::int64_t episodes = 20;
  std::int64_t horizon = 2000;
};

struct ExperimentConfig {
  SystemKind system = SystemKind::linear;
  dynamics::PlantParams plant;
  QueueConfig network;        // evaluation setting; also the training one unless time_varying
  bool time_varying = false;  // LAA trained over time-varying networks
  ControlMode control_mode = ControlMode::networked;
  AgeMode age_mode = AgeMode::true_age;
  laa::TrainConfig train;
  EvalSize eval;
  std::vector<Estimator> estimators{Estimator::laa};
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on combinations the estimators cannot run.
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j, const ExperimentConfig& base);
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// 16 hex digits identifying the resolved config.
  std::string fingerprint() const;
  /// Key of the LAA model this config trains; equal keys share a model.
  std::string training_key() const;
  /// Master seed of the evaluation traces, shared by every estimator.
  std::uint64_t eval_seed() const;
};

/// Desk-scale training and evaluation sizes, or the full-scale preset when `paper_scale`.
laa::TrainConfig default_train(bool paper_scale);
EvalSize default_eval(bool paper_scale);

/// The six fixed network settings of the standard evaluation grid.
std::vector<QueueConfig> standard_settings();

/// `base` at each of the standard settings.
std::vector<ExperimentConfig> standard_grid(const ExperimentConfig& base);

struct ResultRecord {
  ExperimentConfig config;
  Estimator estimator = Estimator::laa;
  network::RmseReport rmse;
  double wall_s = 0.0;
  std::string fingerprint;
};

std::vector<std::string> csv_header();
void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const ResultRecord& r);
void write_csv(std::ostream& os, const std::vector<ResultRecord>& rows);

struct GridOptions {
  std::optional<std::filesystem::path> checkpoint_dir;  // reuse or store models
  unsigned threads = 1;
  bool record_wall_time = true;
  bool verbose = false;
};

/// Trains (or loads) every LAA model, then evaluates each (config, estimator)
/// on the config's shared traces. Rows come back in config order.
std::vector<ResultRecord> run_grid(const std::vector<ExperimentConfig>& configs,
                                   const GridOptions& opts = {});

/// Trains the LAA model for `cfg`.
laa::TrainResult train_for(const ExperimentConfig& cfg);
laa::ModelMetadata metadata_for(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------

struct AgeSweepRow {
  double q = 0.0;
  double p = 0.0;
  std::int64_t horizon = 0;
  std::uint64_t seed = 0;
  double mean_age = 0.0;
  bool stable = true;
};

std::vector<AgeSweepRow> age_sweep(double q, const std::vector<double>& p_grid,
                                   std::int64_t horizon, const std::vector<std::uint64_t>& seeds);
void write_age_csv(std::ostream& os, const std::vector<AgeSweepRow>& rows);

// ---------------------------------------------------------------------------

/// Evaluates a trained model at each of `settings`. The config supplies the
/// modes, the evaluation size and the seed; its network is replaced per row.
std::vector<ResultRecord> cross_test(const laa::LoadedModel& model,
                                     const std::vector<QueueConfig>& settings,
                                     const ExperimentConfig& base, const GridOptions& opts = {});

struct RatioRow {
  double p = 0.0;
  double q = 0.0;
  double rmse_fixed = 0.0;
  double rmse_time_varying = 0.0;
  double ratio() const { return rmse_fixed / rmse_time_varying; }
};

/// Pairs fixed-trained and time-varying-trained LAA rows at equal (p, q).
std::vector<RatioRow> ratio_table(const std::vector<ResultRecord>& rows);
void write_ratio_csv(std::ostream& os, const std::vector<RatioRow>& rows);

/// Directory for outputs: $AOILAB_OUT_DIR or ./results.
std::filesystem::path output_dir();

}  // namespace aoilab::harness

#endif  // AOILAB_HARNESS_HPP
