#ifndef AOILAB_EPISODE_HPP
#define AOILAB_EPISODE_HPP

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "aoilab/dynamics.hpp"
#include "aoilab/network.hpp"

namespace aoilab::network {

/// How the estimator learns which control the plant applied.
enum class ControlMode { known, networked };
/// Which age figures reach the estimator.
enum class AgeMode { true_age, noisy, none };

std::string_view to_string(ControlMode mode);
std::string_view to_string(AgeMode mode);
ControlMode parse_control_mode(std::string_view name);
AgeMode parse_age_mode(std::string_view name);

struct EpisodeSpec {
  dynamics::SystemKind system = dynamics::SystemKind::linear;
  dynamics::PlantParams plant;
  QueueConfig network;
  std::int64_t horizon = 2000;
  std::uint64_t seed = 0;
  std::uint64_t episode = 0;
};

/// Everything that happened in one slot, as seen by an omniscient observer.
struct SlotRecord {
  Measurement truth;               // y(t), generated in slot t
  std::optional<Packet> delivered;  // packet completing service in slot t
  double noisy_age = 0.0;          // noisy estimate of the delivered packet's age
};

/// One simulated episode. Every estimator evaluated on the same spec consumes
/// the same trace, which is what makes their errors comparable.
struct EpisodeTrace {
  dynamics::SystemKind system = dynamics::SystemKind::linear;
  QueueConfig network;
  std::vector<SlotRecord> slots;  // slots[t - 1] describes slot t

  std::int64_t horizon() const { return static_cast<std::int64_t>(slots.size()); }
  const SlotRecord& at(std::int64_t t) const { return slots[static_cast<std::size_t>(t - 1)]; }
  std::uint64_t hash() const;
};

/// Runs plant, source and queue for spec.horizon slots. In slot t the plant
/// draws u(t), the source emits y(t), the queue advances, and the plant steps
/// to x(t+1).
EpisodeTrace simulate_episode(const EpisodeSpec& spec);

/// The estimator end of the channel: age tracking plus the age figure an
/// estimator is shown under each AgeMode.
class Receiver {
 public:
  explicit Receiver(int meas_dim, std::int64_t initial_age = 1);

  /// Consumes slot t of a trace; returns true when a fresher packet arrived.
  bool observe(std::int64_t t, const SlotRecord& rec);
  bool observe(std::int64_t t, const Packet* delivered, double noisy_age);

  const AgeTracker& tracker() const { return tracker_; }
  /// Age under `mode` at the last observed slot (0 for AgeMode::none).
  double age(AgeMode mode) const;

 private:
  AgeTracker tracker_;
  // Estimator's belief about the latest packet's generation time under noisy
  // ages; the noise is drawn once per packet and then held.
  double believed_gen_ = 0.0;
};

/// What an estimator may see in slot t. Ground truth stays with the driver.
struct Observation {
  std::int64_t t = 0;
  const Packet* delivered = nullptr;
  double noisy_age = 0.0;
  std::optional<dynamics::MeasVec> true_controls;  // set only under ControlMode::known
};

Observation observe(std::int64_t t, const SlotRecord& rec, dynamics::SystemKind system,
                    ControlMode control_mode);

/// An estimator run slot by slot over an episode.
class StreamingEstimator {
 public:
  virtual ~StreamingEstimator() = default;
  virtual void reset() = 0;
  /// Estimate of the leading estimated_dim(system) entries of y(t).
  virtual Eigen::VectorXd step(const Observation& obs) = 0;
};

struct RmseReport {
  std::vector<double> per_component;
  double total = 0.0;
  std::int64_t samples = 0;
  std::vector<std::uint64_t> trace_hashes;
};

/// Streaming sums for the root mean squared residual.
class RmseAccumulator {
 public:
  explicit RmseAccumulator(int dim) : sums_(Eigen::VectorXd::Zero(dim)) {}
  void add(const Eigen::VectorXd& residual);
  RmseReport report() const;

 private:
  Eigen::VectorXd sums_;
  std::int64_t n_ = 0;
};

struct EvalProtocol {
  dynamics::SystemKind system = dynamics::SystemKind::linear;
  dynamics::PlantParams plant;
  QueueConfig network;
  std::int64_t episodes = 20;
  std::int64_t horizon = 2000;
  ControlMode control_mode = ControlMode::networked;
  std::uint64_t seed = 0;
};

/// Runs `est` over the protocol's episodes (trace e uses episode index e of
/// the protocol seed); RMSE pools every slot of every episode.
RmseReport evaluate_estimator(StreamingEstimator& est, const EvalProtocol& protocol);

/// Generation slot an estimator attributes to `pkt` received in slot t.
/// Under noisy ages the noisy age is rounded to a whole slot.
std::int64_t believed_gen_slot(const Packet& pkt, std::int64_t t, double noisy_age, AgeMode mode);

}  // namespace aoilab::network

#endif  // AOILAB_EPISODE_HPP
