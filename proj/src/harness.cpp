#include "aoilab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace aoilab::harness {

using nlohmann::json;

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::laa: return "laa";
    case Estimator::tvkf: return "tvkf";
    case Estimator::ukf: return "ukf";
  }
  return "?";
}

Estimator parse_estimator(std::string_view name) {
  if (name == "laa") return Estimator::laa;
  if (name == "tvkf") return Estimator::tvkf;
  if (name == "ukf") return Estimator::ukf;
  throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool has(const std::vector<Estimator>& v, Estimator e) {
  return std::find(v.begin(), v.end(), e) != v.end();
}

json plant_json(const dynamics::PlantParams& p) {
  const auto& l = p.linear;
  const auto& c = p.cartpole;
  return {{"linear",
           {{"dt", l.dt},
            {"noise_var", l.noise_var},
            {"position_limit", l.position_limit},
            {"velocity_limit", l.velocity_limit},
            {"control_limit", l.control_limit},
            {"clamp", l.clamp}}},
          {"cartpole",
           {{"l", c.l},
            {"mc", c.mc},
            {"mp", c.mp},
            {"g", c.g},
            {"force_mag", c.force_mag},
            {"dt", c.dt},
            {"velocity_limit", c.velocity_limit},
            {"initial_spread", c.initial_spread}}}};
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

dynamics::PlantParams plant_from(const json& j, dynamics::PlantParams p) {
  if (j.contains("linear")) {
    const json& l = j.at("linear");
    read_opt(l, "dt", p.linear.dt);
    read_opt(l, "noise_var", p.linear.noise_var);
    read_opt(l, "position_limit", p.linear.position_limit);
    read_opt(l, "velocity_limit", p.linear.velocity_limit);
    read_opt(l, "control_limit", p.linear.control_limit);
    read_opt(l, "clamp", p.linear.clamp);
  }
  if (j.contains("cartpole")) {
    const json& c = j.at("cartpole");
    read_opt(c, "l", p.cartpole.l);
    read_opt(c, "mc", p.cartpole.mc);
    read_opt(c, "mp", p.cartpole.mp);
    read_opt(c, "g", p.cartpole.g);
    read_opt(c, "force_mag", p.cartpole.force_mag);
    read_opt(c, "dt", p.cartpole.dt);
    read_opt(c, "velocity_limit", p.cartpole.velocity_limit);
    read_opt(c, "initial_spread", p.cartpole.initial_spread);
  }
  return p;
}

json train_json(const laa::TrainConfig& t) {
  return {{"episodes", t.episodes},         {"horizon", t.horizon},
          {"batch_size", t.batch_size},     {"lr", t.lr},
          {"weight_decay", t.weight_decay}, {"replay_capacity", t.replay_capacity},
          {"bptt_window", t.bptt_window},   {"update_period", t.update_period},
          {"single_precision", t.single_precision}, {"n_h", t.n_h}};
}

// Runs fn(0..n-1) on up to `threads` workers; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  network.validate();
  if (estimators.empty()) throw std::invalid_argument("config: no estimators");
  if (has(estimators, Estimator::tvkf) && system != SystemKind::linear) {
    throw std::invalid_argument("config: tvkf runs only on the linear system");
  }
  if (age_mode == AgeMode::none &&
      (has(estimators, Estimator::tvkf) || has(estimators, Estimator::ukf))) {
    throw std::invalid_argument("config: age mode 'none' applies to laa only");
  }
  if (time_varying && !has(estimators, Estimator::laa)) {
    throw std::invalid_argument("config: time-varying training needs the laa estimator");
  }
  if (eval.episodes < 1 || eval.horizon < 1) throw std::invalid_argument("config: bad eval size");
  if (has(estimators, Estimator::laa)) train.validate();
  if (system == SystemKind::cartpole) plant.cartpole.validate();
}

json ExperimentConfig::to_json() const {
  json est = json::array();
  for (Estimator e : estimators) est.push_back(std::string(harness::to_string(e)));
  return {{"system", std::string(dynamics::to_string(system))},
          {"plant", plant_json(plant)},
          {"p", network.p},
          {"q", network.q},
          {"time_varying", time_varying},
          {"control_mode", std::string(network::to_string(control_mode))},
          {"age_mode", std::string(network::to_string(age_mode))},
          {"train", train_json(train)},
          {"eval", {{"episodes", eval.episodes}, {"horizon", eval.horizon}}},
          {"estimators", est},
          {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  try {
    if (j.contains("system")) c.system = dynamics::parse_system(j.at("system").get<std::string>());
    if (j.contains("plant")) c.plant = plant_from(j.at("plant"), c.plant);
    read_opt(j, "p", c.network.p);
    read_opt(j, "q", c.network.q);
    read_opt(j, "time_varying", c.time_varying);
    if (j.contains("control_mode")) {
      c.control_mode = network::parse_control_mode(j.at("control_mode").get<std::string>());
    }
    if (j.contains("age_mode")) c.age_mode = network::parse_age_mode(j.at("age_mode").get<std::string>());
    if (j.contains("train")) {
      const json& t = j.at("train");
      read_opt(t, "episodes", c.train.episodes);
      read_opt(t, "horizon", c.train.horizon);
      read_opt(t, "batch_size", c.train.batch_size);
      read_opt(t, "lr", c.train.lr);
      read_opt(t, "weight_decay", c.train.weight_decay);
      read_opt(t, "replay_capacity", c.train.replay_capacity);
      read_opt(t, "bptt_window", c.train.bptt_window);
      read_opt(t, "update_period", c.train.update_period);
      read_opt(t, "single_precision", c.train.single_precision);
      read_opt(t, "n_h", c.train.n_h);
    }
    if (j.contains("eval")) {
      read_opt(j.at("eval"), "episodes", c.eval.episodes);
      read_opt(j.at("eval"), "horizon", c.eval.horizon);
    }
    if (j.contains("estimators")) {
      c.estimators.clear();
      for (const auto& e : j.at("estimators")) c.estimators.push_back(parse_estimator(e.get<std::string>()));
    }
    read_opt(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) { return from_json(j, ExperimentConfig{}); }

std::string ExperimentConfig::fingerprint() const { return hex64(detail::fnv1a(to_json().dump())); }

std::string ExperimentConfig::training_key() const {
  json k = {{"system", std::string(dynamics::to_string(system))},
            {"plant", plant_json(plant)},
            {"time_varying", time_varying},
            {"control_mode", std::string(network::to_string(control_mode))},
            {"with_age", age_mode != AgeMode::none},
            {"train", train_json(train)},
            {"seed", seed}};
  if (!time_varying) {
    k["p"] = network.p;
    k["q"] = network.q;
  }
  return hex64(detail::fnv1a(k.dump()));
}

std::uint64_t ExperimentConfig::eval_seed() const { return stream_seed(seed, "harness.eval"); }

laa::TrainConfig default_train(bool paper_scale) {
  laa::TrainConfig t;
  if (paper_scale) {
    t.episodes = 200;
    t.horizon = 40000;
    t.replay_capacity = 2000000;
  }
  return t;
}

EvalSize default_eval(bool paper_scale) {
  return paper_scale ? EvalSize{200, 40000} : EvalSize{20, 2000};
}

std::vector<QueueConfig> standard_settings() {
  return {{0.01, 0.3}, {0.1, 0.3}, {0.297, 0.3}, {0.01, 0.5}, {0.3, 0.5}, {0.499, 0.5}};
}

std::vector<ExperimentConfig> standard_grid(const ExperimentConfig& base) {
  std::vector<ExperimentConfig> out;
  for (const QueueConfig& s : standard_settings()) {
    ExperimentConfig c = base;
    c.network = s;
    out.push_back(c);
  }
  return out;
}

laa::ModelMetadata metadata_for(const ExperimentConfig& cfg) {
  laa::ModelMetadata m;
  m.spec = {cfg.system, cfg.age_mode != AgeMode::none, cfg.train.n_h, 64};
  m.control_mode = cfg.control_mode;
  m.time_varying = cfg.time_varying;
  m.network = cfg.network;
  m.train = cfg.train;
  m.train.seed = cfg.seed;
  m.plant = cfg.plant;
  return m;
}

laa::TrainResult train_for(const ExperimentConfig& cfg) {
  laa::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  laa::TrainSetup setup;
  setup.system = cfg.system;
  setup.plant = cfg.plant;
  setup.network = cfg.network;
  setup.time_varying = cfg.time_varying;
  setup.control_mode = cfg.control_mode;
  setup.with_age = cfg.age_mode != AgeMode::none;
  return laa::train(tc, setup);
}

namespace {

void check_compatible(const laa::LoadedModel& m, const ExperimentConfig& cfg) {
  if (m.meta.spec.system != cfg.system) {
    throw std::runtime_error("checkpoint was trained on the " +
                             std::string(dynamics::to_string(m.meta.spec.system)) +
                             " system, config asks for " +
                             std::string(dynamics::to_string(cfg.system)));
  }
  if (m.meta.spec.with_age != (cfg.age_mode != AgeMode::none)) {
    throw std::runtime_error("checkpoint age inputs do not match age mode " +
                             std::string(network::to_string(cfg.age_mode)));
  }
  if (m.meta.control_mode != cfg.control_mode) {
    throw std::runtime_error("checkpoint was trained with " +
                             std::string(network::to_string(m.meta.control_mode)) +
                             " controls, config asks for " +
                             std::string(network::to_string(cfg.control_mode)));
  }
}

network::EvalProtocol protocol_for(const ExperimentConfig& cfg) {
  network::EvalProtocol p;
  p.system = cfg.system;
  p.plant = cfg.plant;
  p.network = cfg.network;
  p.episodes = cfg.eval.episodes;
  p.horizon = cfg.eval.horizon;
  p.control_mode = cfg.control_mode;
  p.seed = cfg.eval_seed();
  return p;
}

network::RmseReport evaluate_cell(const ExperimentConfig& cfg, Estimator e,
                                  const laa::LaaModel* model) {
  const network::EvalProtocol protocol = protocol_for(cfg);
  if (e == Estimator::laa) return laa::evaluate(*model, protocol, cfg.age_mode);
  const auto kind = e == Estimator::tvkf ? baselines::FilterKind::tvkf : baselines::FilterKind::ukf;
  return baselines::baseline_evaluate(kind, protocol, cfg.age_mode);
}

}  // namespace

std::vector<ResultRecord> run_grid(const std::vector<ExperimentConfig>& configs,
                                   const GridOptions& opts) {
  for (const auto& c : configs) c.validate();

  // Models, one per distinct training key.
  std::vector<std::string> keys;
  std::map<std::string, const ExperimentConfig*> key_cfg;
  for (const auto& c : configs) {
    if (!has(c.estimators, Estimator::laa)) continue;
    const std::string k = c.training_key();
    if (key_cfg.emplace(k, &c).second) keys.push_back(k);
  }
  std::vector<laa::LaaModel> models(keys.size());
  parallel_for(keys.size(), opts.threads, [&](std::size_t i) {
    const ExperimentConfig& c = *key_cfg.at(keys[i]);
    std::optional<std::filesystem::path> path;
    if (opts.checkpoint_dir) path = *opts.checkpoint_dir / (keys[i] + ".ckpt");
    if (path && std::filesystem::exists(*path)) {
      laa::LoadedModel loaded = laa::load_model(*path);
      check_compatible(loaded, c);
      models[i] = std::move(loaded.model);
      return;
    }
    if (opts.verbose) std::fprintf(stderr, "training %s (%s)\n", keys[i].c_str(), c.fingerprint().c_str());
    laa::TrainResult r = train_for(c);
    if (path) {
      std::filesystem::create_directories(*opts.checkpoint_dir);
      laa::save_model(*path, r.model, metadata_for(c));
    }
    models[i] = std::move(r.model);
  });
  std::map<std::string, const laa::LaaModel*> by_key;
  for (std::size_t i = 0; i < keys.size(); ++i) by_key[keys[i]] = &models[i];

  struct Cell {
    std::size_t config;
    Estimator estimator;
  };
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (Estimator e : configs[i].estimators) cells.push_back({i, e});
  }
  std::vector<ResultRecord> rows(cells.size());
  parallel_for(cells.size(), opts.threads, [&](std::size_t i) {
    const ExperimentConfig& c = configs[cells[i].config];
    const laa::LaaModel* model =
        cells[i].estimator == Estimator::laa ? by_key.at(c.training_key()) : nullptr;
    const auto t0 = std::chrono::steady_clock::now();
    ResultRecord r;
    r.config = c;
    r.estimator = cells[i].estimator;
    r.rmse = evaluate_cell(c, cells[i].estimator, model);
    r.wall_s = opts.record_wall_time ? seconds_since(t0) : 0.0;
    r.fingerprint = c.fingerprint();
    rows[i] = std::move(r);
  });

  // Estimators of one config must have seen the same traces.
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (cells[i].config == cells[i - 1].config &&
        rows[i].rmse.trace_hashes != rows[i - 1].rmse.trace_hashes) {
      throw std::logic_error("run_grid: estimators saw different traces");
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<AgeSweepRow> age_sweep(double q, const std::vector<double>& p_grid,
                                   std::int64_t horizon, const std::vector<std::uint64_t>& seeds) {
  std::vector<AgeSweepRow> rows;
  for (double p : p_grid) {
    const QueueConfig cfg{p, q};
    cfg.validate();
    for (std::uint64_t seed : seeds) {
      network::NetworkRng rng = network::NetworkRng::from_seed(seed);
      const network::AgeStats st = network::average_age(cfg, horizon, rng);
      rows.push_back({q, p, horizon, seed, st.mean_age, cfg.stable()});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<ResultRecord> cross_test(const laa::LoadedModel& model,
                                     const std::vector<QueueConfig>& settings,
                                     const ExperimentConfig& base, const GridOptions& opts) {
  ExperimentConfig proto = base;
  proto.estimators = {Estimator::laa};
  proto.time_varying = model.meta.time_varying;
  proto.train = model.meta.train;
  proto.plant = model.meta.plant;
  check_compatible(model, proto);

  std::vector<ResultRecord> rows(settings.size());
  parallel_for(settings.size(), opts.threads, [&](std::size_t i) {
    ExperimentConfig c = proto;
    c.network = settings[i];
    c.validate();
    const auto t0 = std::chrono::steady_clock::now();
    ResultRecord r;
    r.config = c;
    r.estimator = Estimator::laa;
    r.rmse = evaluate_cell(c, Estimator::laa, &model.model);
    r.wall_s = opts.record_wall_time ? seconds_since(t0) : 0.0;
    r.fingerprint = c.fingerprint();
    rows[i] = std::move(r);
  });
  return rows;
}

std::vector<RatioRow> ratio_table(const std::vector<ResultRecord>& rows) {
  std::map<std::pair<double, double>, RatioRow> acc;
  std::map<std::pair<double, double>, int> seen;
  for (const auto& r : rows) {
    if (r.estimator != Estimator::laa) continue;
    const auto key = std::make_pair(r.config.network.p, r.config.network.q);
    RatioRow& row = acc[key];
    row.p = key.first;
    row.q = key.second;
    (r.config.time_varying ? row.rmse_time_varying : row.rmse_fixed) = r.rmse.total;
    seen[key] |= r.config.time_varying ? 2 : 1;
  }
  std::vector<RatioRow> out;
  for (const auto& [key, row] : acc) {
    if (seen[key] == 3) out.push_back(row);
  }
  return out;
}

std::filesystem::path output_dir() {
  if (const char* env = std::getenv("AOILAB_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "results";
}

}  // namespace aoilab::harness
