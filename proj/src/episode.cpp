#include "aoilab/episode.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace aoilab::network {

std::string_view to_string(ControlMode mode) {
  return mode == ControlMode::known ? "known" : "networked";
}

std::string_view to_string(AgeMode mode) {
  switch (mode) {
    case AgeMode::true_age: return "true";
    case AgeMode::noisy: return "noisy";
    case AgeMode::none: return "none";
  }
  return "?";
}

ControlMode parse_control_mode(std::string_view name) {
  if (name == "known") return ControlMode::known;
  if (name == "networked") return ControlMode::networked;
  throw std::invalid_argument("unknown control mode '" + std::string(name) + "'");
}

AgeMode parse_age_mode(std::string_view name) {
  if (name == "true") return AgeMode::true_age;
  if (name == "noisy") return AgeMode::noisy;
  if (name == "none") return AgeMode::none;
  throw std::invalid_argument("unknown age mode '" + std::string(name) + "'");
}

namespace {

class Fnv1a {
 public:
  template <typename T>
  void add(const T& value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (unsigned char b : bytes) {
      h_ ^= b;
      h_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace

std::uint64_t EpisodeTrace::hash() const {
  Fnv1a h;
  h.add(static_cast<int>(system));
  h.add(network.p);
  h.add(network.q);
  for (const auto& rec : slots) {
    h.add(rec.truth.gen_slot);
    for (Eigen::Index i = 0; i < rec.truth.values.size(); ++i) h.add(rec.truth.values(i));
    h.add(rec.delivered.has_value());
    if (rec.delivered) {
      h.add(rec.delivered->gen_slot);
      h.add(rec.noisy_age);
    }
  }
  return h.value();
}

EpisodeTrace simulate_episode(const EpisodeSpec& spec) {
  spec.network.validate();
  if (spec.horizon < 1) throw std::invalid_argument("simulate_episode: horizon must be >= 1");

  Rng init_rng = make_stream(spec.seed, streams::kInitialState, spec.episode);
  Rng control_rng = make_stream(spec.seed, streams::kControls, spec.episode);
  Rng noise_rng = make_stream(spec.seed, streams::kProcessNoise, spec.episode);
  Rng age_rng = make_stream(spec.seed, streams::kNoisyAge, spec.episode);
  NetworkRng net_rng = NetworkRng::from_seed(spec.seed, spec.episode);

  dynamics::Plant plant(spec.system, spec.plant, init_rng);
  QueueState qs;
  EpisodeTrace trace;
  trace.system = spec.system;
  trace.network = spec.network;
  trace.slots.reserve(static_cast<std::size_t>(spec.horizon));

  for (std::int64_t t = 1; t <= spec.horizon; ++t) {
    plant.choose_control(control_rng);
    SlotRecord rec;
    rec.truth = plant.measure(t);
    rec.delivered = queue_step(qs, rec.truth, spec.network, net_rng);
    if (rec.delivered) {
      rec.noisy_age = noisy_age(static_cast<double>(t - rec.delivered->gen_slot), age_rng);
    }
    plant.advance(noise_rng);
    trace.slots.push_back(std::move(rec));
  }
  return trace;
}

Receiver::Receiver(int meas_dim, std::int64_t initial_age)
    : tracker_(AgeTracker::initial(meas_dim, initial_age)) {}

bool Receiver::observe(std::int64_t t, const SlotRecord& rec) {
  return observe(t, rec.delivered ? &*rec.delivered : nullptr, rec.noisy_age);
}

bool Receiver::observe(std::int64_t t, const Packet* delivered, double noisy) {
  const bool fresh = update_age(tracker_, t, delivered);
  if (fresh) believed_gen_ = static_cast<double>(t) - noisy;
  return fresh;
}

double Receiver::age(AgeMode mode) const {
  switch (mode) {
    case AgeMode::true_age: return static_cast<double>(tracker_.delta);
    case AgeMode::noisy:
      if (!tracker_.has_received()) return static_cast<double>(tracker_.delta);
      return std::max(0.0, static_cast<double>(tracker_.last_t) - believed_gen_);
    case AgeMode::none: return 0.0;
  }
  return 0.0;
}

Observation observe(std::int64_t t, const SlotRecord& rec, dynamics::SystemKind system,
                    ControlMode control_mode) {
  Observation obs;
  obs.t = t;
  if (rec.delivered) {
    obs.delivered = &*rec.delivered;
    obs.noisy_age = rec.noisy_age;
  }
  if (control_mode == ControlMode::known) {
    const int nu = dynamics::control_dim(system);
    obs.true_controls = rec.truth.values.tail(nu);
  }
  return obs;
}

void RmseAccumulator::add(const Eigen::VectorXd& residual) {
  if (residual.size() != sums_.size()) throw std::invalid_argument("RmseAccumulator: bad length");
  sums_ += residual.array().square().matrix();
  ++n_;
}

RmseReport RmseAccumulator::report() const {
  RmseReport r;
  r.samples = n_;
  const double n = n_ > 0 ? static_cast<double>(n_) : 1.0;
  for (Eigen::Index i = 0; i < sums_.size(); ++i) r.per_component.push_back(std::sqrt(sums_(i) / n));
  r.total = std::sqrt(sums_.sum() / n);
  return r;
}

RmseReport evaluate_estimator(StreamingEstimator& est, const EvalProtocol& protocol) {
  const int n_e = dynamics::estimated_dim(protocol.system);
  RmseAccumulator acc(n_e);
  std::vector<std::uint64_t> hashes;
  for (std::int64_t e = 0; e < protocol.episodes; ++e) {
    EpisodeSpec spec{protocol.system, protocol.plant, protocol.network, protocol.horizon,
                     protocol.seed, static_cast<std::uint64_t>(e)};
    const EpisodeTrace trace = simulate_episode(spec);
    hashes.push_back(trace.hash());
    est.reset();
    for (std::int64_t t = 1; t <= trace.horizon(); ++t) {
      const SlotRecord& rec = trace.at(t);
      const Eigen::VectorXd estimate =
          est.step(observe(t, rec, protocol.system, protocol.control_mode));
      acc.add(rec.truth.values.head(n_e) - estimate);
    }
  }
  RmseReport report = acc.report();
  report.trace_hashes = std::move(hashes);
  return report;
}

std::int64_t believed_gen_slot(const Packet& pkt, std::int64_t t, double noisy, AgeMode mode) {
  if (mode != AgeMode::noisy) return pkt.gen_slot;
  const auto age = static_cast<std::int64_t>(std::llround(std::max(0.0, noisy)));
  return std::clamp<std::int64_t>(t - age, 1, t);
}

}  // namespace aoilab::network
