#include "aoilab/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aoilab::network {

void QueueConfig::validate() const {
  if (!(p > 0.0 && p <= 1.0) || !(q > 0.0 && q <= 1.0)) {
    throw std::invalid_argument("QueueConfig: require 0 < p <= 1 and 0 < q <= 1");
  }
}

NetworkRng NetworkRng::from_seed(std::uint64_t master, std::uint64_t episode) {
  return {make_stream(master, streams::kAdmission, episode),
          make_stream(master, streams::kService, episode)};
}

std::optional<Packet> queue_step(QueueState& qs, const std::optional<Measurement>& new_measurement,
                                 const QueueConfig& cfg, NetworkRng& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const double admit_coin = coin(rng.admission);
  const double service_coin = coin(rng.service);
  const std::int64_t t = ++qs.slot;

  std::optional<Packet> delivered;
  if (qs.in_service && service_coin < cfg.q) {
    delivered = std::move(qs.in_service);
    qs.in_service.reset();
    ++qs.delivered;
    if (!qs.waiting.empty()) {
      qs.in_service = std::move(qs.waiting.front());
      qs.waiting.pop_front();
    }
  }

  if (new_measurement && admit_coin < cfg.p) {
    Packet pkt{*new_measurement, new_measurement->gen_slot, t};
    ++qs.admitted;
    if (!qs.in_service) {
      qs.in_service = std::move(pkt);
    } else {
      qs.waiting.push_back(std::move(pkt));
    }
  }
  return delivered;
}

AgeTracker AgeTracker::initial(int meas_dim, std::int64_t initial_age) {
  AgeTracker tr;
  tr.delta = initial_age;
  tr.last_value = dynamics::MeasVec::Zero(meas_dim);
  return tr;
}

bool update_age(AgeTracker& tracker, std::int64_t t, const Packet* delivered) {
  if (t <= tracker.last_t) throw std::invalid_argument("update_age: slots must increase");
  const std::int64_t elapsed = t - tracker.last_t;
  tracker.last_t = t;
  if (delivered != nullptr && delivered->gen_slot > tracker.latest_gen) {
    tracker.latest_gen = delivered->gen_slot;
    tracker.delta = t - delivered->gen_slot;
    tracker.last_value = delivered->payload.values;
    return true;
  }
  tracker.delta += elapsed;
  return false;
}

AgeStats average_age(const QueueConfig& cfg, std::int64_t horizon, NetworkRng& rng) {
  QueueState qs;
  AgeTracker tracker = AgeTracker::initial(0);
  AgeStats stats;
  double sum = 0.0;
  Measurement m;
  for (std::int64_t t = 1; t <= horizon; ++t) {
    m.gen_slot = t;
    const auto delivered = queue_step(qs, m, cfg, rng);
    update_age(tracker, t, delivered ? &*delivered : nullptr);
    if (delivered) ++stats.deliveries;
    if (tracker.has_received()) {
      sum += static_cast<double>(tracker.delta);
      ++stats.slots_counted;
    }
  }
  stats.mean_age = stats.slots_counted > 0 ? sum / static_cast<double>(stats.slots_counted)
                                           : static_cast<double>(tracker.delta);
  return stats;
}

QueueConfig sample_time_varying(Rng& rng) {
  for (;;) {
    std::uniform_real_distribution<double> log_q(-2.0, 0.0);
    const double lq = log_q(rng);
    std::uniform_real_distribution<double> log_p(-3.0, lq);
    const double lp = log_p(rng);
    QueueConfig cfg{std::pow(10.0, lp), std::pow(10.0, lq)};
    if (cfg.p < cfg.q) return cfg;
  }
}

double noisy_age(double true_age, Rng& rng) {
  if (true_age < 0.0) throw std::invalid_argument("noisy_age: negative age");
  std::uniform_real_distribution<double> scale(0.0, 2.0);
  const double u = scale(rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double n = 0.1 * true_age * gauss(rng);
  return std::max(0.0, u * true_age + n);
}

}  // namespace aoilab::network
