#include <cmath>
#include <stdexcept>

#include "aoilab/laa.hpp"
#include "aoilab/objective.hpp"

namespace aoilab::laa {

void TrainConfig::validate() const {
  if (episodes < 1 || horizon < 1 || batch_size < 1 || replay_capacity < 1 || bptt_window < 1 ||
      update_period < 1 || n_h < 1) {
    throw std::invalid_argument("TrainConfig: sizes must be positive");
  }
  if (!(lr > 0.0) || weight_decay < 0.0) throw std::invalid_argument("TrainConfig: bad optimiser");
  if (static_cast<std::int64_t>(bptt_window) > horizon) {
    throw std::invalid_argument("TrainConfig: bptt_window exceeds the episode length");
  }
}

std::uint64_t training_trace_seed(std::uint64_t seed) { return stream_seed(seed, "laa.train"); }

namespace {

// A mini-batch of end-aligned windows: column j holds the window of sample j,
// padded with masked steps at the front when the window is short.
template <class S>
nn::SequenceProblemT<S> make_batch(const ReplayMemory& memory,
                                   const std::vector<std::uint64_t>& picks, std::size_t window,
                                   const Eigen::VectorXd& output_scale) {
  const Eigen::Index batch = static_cast<Eigen::Index>(picks.size());
  const Eigen::Index n_x = memory.by_insertion(picks.front()).features.size();
  const Eigen::Index n_o = memory.by_insertion(picks.front()).target.size();

  nn::SequenceProblemT<S> prob;
  prob.xs.assign(window, nn::BatchT<S>::Zero(n_x, batch));
  prob.masks.assign(window, nn::MaskT<S>::Zero(batch));
  prob.emit.assign(window, 0);
  prob.emit.back() = 1;
  prob.targets.assign(1, nn::BatchT<S>(n_o, batch));
  prob.output_scale = output_scale.cast<S>();

  for (Eigen::Index j = 0; j < batch; ++j) {
    const auto idx = memory.window(picks[static_cast<std::size_t>(j)], window);
    const std::size_t pad = window - idx.size();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      prob.xs[pad + k].col(j) = memory.by_insertion(idx[k]).features.cast<S>();
      prob.masks[pad + k](j) = S(1);
    }
    prob.targets[0].col(j) = memory.by_insertion(idx.back()).target.cast<S>();
  }
  return prob;
}

// Loss and gradient of one mini-batch. Single precision runs the kernel on a
// float copy of the parameters; the optimiser state stays in double.
double batch_gradient(const nn::StackParams& params, const ReplayMemory& memory,
                      const std::vector<std::uint64_t>& picks, const TrainConfig& cfg,
                      const Eigen::VectorXd& output_scale, nn::StackParams& grads) {
  if (!cfg.single_precision) {
    return nn::sequence_loss(params, make_batch<double>(memory, picks, cfg.bptt_window, output_scale),
                             &grads);
  }
  nn::StackParamsT<float> g32;
  const double l =
      nn::sequence_loss(params.cast<float>(),
                        make_batch<float>(memory, picks, cfg.bptt_window, output_scale), &g32);
  grads = g32.cast<double>();
  return l;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const TrainSetup& setup) {
  cfg.validate();
  if (!setup.time_varying) setup.network.validate();

  const ModelSpec spec{setup.system, setup.with_age, cfg.n_h, 64};
  TrainResult result;
  result.model = LaaModel::initialized(spec, cfg.seed, setup.plant);
  LaaModel& model = result.model;

  ReplayMemory memory(cfg.replay_capacity);
  Rng replay_rng = make_stream(cfg.seed, streams::kReplay);
  nn::AdamState opt(nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const AgeMode age_mode = setup.with_age ? AgeMode::true_age : AgeMode::none;
  const int n_e = dynamics::estimated_dim(setup.system);
  const int n_m = dynamics::measurement_dim(setup.system);
  const int n_u = dynamics::control_dim(setup.system);
  const std::uint64_t trace_seed = training_trace_seed(cfg.seed);

  std::int64_t slots_seen = 0;
  for (std::int64_t e = 0; e < cfg.episodes; ++e) {
    network::QueueConfig net = setup.network;
    if (setup.time_varying) {
      Rng tv = make_stream(cfg.seed, streams::kTimeVarying, static_cast<std::uint64_t>(e));
      net = network::sample_time_varying(tv);
    }
    result.episode_networks.push_back(net);

    const network::EpisodeSpec ep{setup.system, setup.plant, net, cfg.horizon, trace_seed,
                                  static_cast<std::uint64_t>(e)};
    const network::EpisodeTrace trace = network::simulate_episode(ep);

    network::Receiver rx(n_m);
    model.reset_state();
    Eigen::VectorXd prev = Eigen::VectorXd::Zero(n_e);
    for (std::int64_t t = 1; t <= cfg.horizon; ++t) {
      const network::SlotRecord& rec = trace.at(t);
      rx.observe(t, rec);
      std::optional<dynamics::MeasVec> controls;
      if (setup.control_mode == ControlMode::known) controls = rec.truth.values.tail(n_u);
      const EstimatorInput in =
          build_input(rx, prev, setup.system, setup.control_mode, controls, age_mode);
      const Eigen::VectorXd features = model.scale_input(in);
      prev = model.estimate_scaled(features);
      memory.push({features, rec.truth.values.head(n_e), static_cast<std::uint64_t>(e), t});

      if (++slots_seen % cfg.update_period != 0) continue;
      if (memory.size() < cfg.batch_size) {
        ++result.skipped_updates;
        continue;
      }
      const auto picks = memory.sample(cfg.batch_size, replay_rng);
      nn::StackParams grads;
      const double l =
          batch_gradient(model.params(), memory, picks, cfg, model.scaling().output, grads);
      if (!std::isfinite(l)) throw std::runtime_error("train: loss diverged");
      result.losses.push_back(l);
      nn::adam_step(model.params(), grads, opt);
    }
  }
  model.reset_state();
  return result;
}

LossProgress loss_progress(const std::vector<double>& losses) {
  if (losses.size() < 10) throw std::invalid_argument("loss_progress: need at least 10 updates");
  const std::size_t d = losses.size() / 10;
  LossProgress p;
  for (std::size_t i = 0; i < d; ++i) {
    p.first_decile += losses[i];
    p.last_decile += losses[losses.size() - d + i];
  }
  p.first_decile /= static_cast<double>(d);
  p.last_decile /= static_cast<double>(d);
  return p;
}

}  // namespace aoilab::laa
