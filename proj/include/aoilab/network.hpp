#ifndef AOILAB_NETWORK_HPP
#define AOILAB_NETWORK_HPP

#include <cstdint>
#include <deque>
#include <optional>

#include "aoilab/dynamics.hpp"
#include "aoilab/rng.hpp"

namespace aoilab::network {

using dynamics::Measurement;

/// Bernoulli(p) admissions into a FCFS single-server queue with geometric(q)
/// service. p/q is the utilisation; the queue is stable only for p < q.
struct QueueConfig {
  double p = 0.1;
  double q = 0.3;

  /// Throws std::invalid_argument unless 0 < p <= 1 and 0 < q <= 1.
  void validate() const;
  bool stable() const { return p < q; }
  double utilization() const { return p / q; }
};

struct Packet {
  Measurement payload;
  std::int64_t gen_slot = 0;
  std::int64_t admit_slot = 0;
};

struct QueueState {
  std::deque<Packet> waiting;
  std::optional<Packet> in_service;
  std::int64_t slot = 0;
  std::int64_t admitted = 0;
  std::int64_t delivered = 0;

  std::int64_t occupancy() const {
    return static_cast<std::int64_t>(waiting.size()) + (in_service ? 1 : 0);
  }
};

/// Independent coin streams for admissions and service completions.
struct NetworkRng {
  Rng admission;
  Rng service;

  static NetworkRng from_seed(std::uint64_t master, std::uint64_t episode = 0);
};

/// Advances the queue by one slot.
///
/// Both coins are drawn every slot (admission first, then service), whether or
/// not they are consumed, so the coin sequences depend only on the seed. The
/// packet in service (if it entered service in an earlier slot) completes with
/// probability q; the head of the waiting line then enters service. A new
/// measurement is admitted with probability p after the service phase, so a
/// packet admitted in slot t completes no earlier than slot t+1.
std::optional<Packet> queue_step(QueueState& qs, const std::optional<Measurement>& new_measurement,
                                 const QueueConfig& cfg, NetworkRng& rng);

/// Freshness bookkeeping for a single measurement stream.
struct AgeTracker {
  std::int64_t latest_gen = 0;  // 0 until the first reception
  std::int64_t delta = 1;
  dynamics::MeasVec last_value;
  std::int64_t last_t = 0;

  /// Age 1 and a zero measurement before anything is received.
  static AgeTracker initial(int meas_dim, std::int64_t initial_age = 1);
  bool has_received() const { return latest_gen > 0; }
};

/// Returns true when `delivered` was fresher than anything seen so far and
/// was therefore taken as the new latest measurement.
bool update_age(AgeTracker& tracker, std::int64_t t, const Packet* delivered);

struct AgeStats {
  double mean_age = 0.0;
  std::int64_t slots_counted = 0;
  std::int64_t deliveries = 0;
};

/// Time-average age of a source offering a fresh measurement every slot.
/// Slots before the first reception are excluded from the average.
AgeStats average_age(const QueueConfig& cfg, std::int64_t horizon, NetworkRng& rng);

/// log10 q ~ U(-2, 0), log10 p ~ U(-3, log10 q).
QueueConfig sample_time_varying(Rng& rng);

/// U * true_age + N with U ~ U(0, 2), N ~ N(0, (0.1 true_age)^2), floored at 0.
double noisy_age(double true_age, Rng& rng);

}  // namespace aoilab::network

#endif  // AOILAB_NETWORK_HPP
