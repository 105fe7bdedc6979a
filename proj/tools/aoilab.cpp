// Command-line front end: train, eval, grid, age-sweep, cross-test, gradcheck.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aoilab/harness.hpp"
#include "aoilab/objective.hpp"

namespace fs = std::filesystem;
using namespace aoilab;
using harness::Estimator;
using harness::ExperimentConfig;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::string> system, age, controls;
  std::optional<double> p, q;
  bool time_varying = false;
  std::optional<std::int64_t> episodes, horizon, train_episodes, train_horizon;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> estimators;
  bool paper_scale = false;
  bool double_precision = false;
  std::string out;
  std::string checkpoint;
  std::optional<std::string> checkpoint_dir;
  unsigned threads = 1;
  bool no_wall_time = false;
  bool verbose = false;
};

void add_common(CLI::App* app, Common& c, bool sizes_are_training) {
  app->add_option("--config", c.config_path, "JSON experiment config; flags override it");
  app->add_option("--system", c.system, "linear | cartpole");
  app->add_option("--p", c.p, "admission probability");
  app->add_option("--q", c.q, "service success probability");
  app->add_flag("--time-varying", c.time_varying, "train over a fresh random network per episode");
  app->add_option("--age", c.age, "true | noisy | none");
  app->add_option("--controls", c.controls, "known | networked");
  const char* what = sizes_are_training ? "training" : "evaluation";
  app->add_option("--episodes", c.episodes, std::string(what) + " episodes");
  app->add_option("--horizon", c.horizon, std::string(what) + " slots per episode");
  if (!sizes_are_training) {
    app->add_option("--train-episodes", c.train_episodes, "training episodes");
    app->add_option("--train-horizon", c.train_horizon, "training slots per episode");
  }
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--estimators", c.estimators, "comma list of laa, tvkf, ukf");
  app->add_flag("--paper-scale", c.paper_scale, "full-size training and evaluation (very slow)");
  app->add_flag("--double", c.double_precision, "train the mini-batch kernel in double precision");
  app->add_option("--out", c.out, "output CSV");
  app->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  app->add_flag("--no-wall-time", c.no_wall_time, "write wall_s as 0 so reruns are byte-identical");
  app->add_flag("-v,--verbose", c.verbose);
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& x : split(s)) out.push_back(std::stod(x));
  return out;
}

/// "p:q,p:q,..."
std::vector<network::QueueConfig> parse_settings(const std::string& s) {
  std::vector<network::QueueConfig> out;
  for (const auto& item : split(s)) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) throw std::invalid_argument("setting '" + item + "' is not p:q");
    out.push_back({std::stod(parts[0]), std::stod(parts[1])});
  }
  return out;
}

ExperimentConfig resolve(const Common& c, bool sizes_are_training) {
  ExperimentConfig cfg;
  cfg.train = harness::default_train(c.paper_scale);
  cfg.eval = harness::default_eval(c.paper_scale);
  if (c.paper_scale) {
    std::fprintf(stderr,
                 "warning: --paper-scale trains on 200 x 40000 slots and evaluates 200 x 40000;"
                 " expect days of CPU time per model\n");
  }
  if (!c.config_path.empty()) {
    std::ifstream is(c.config_path);
    if (!is) throw std::runtime_error("cannot read " + c.config_path);
    cfg = ExperimentConfig::from_json(nlohmann::json::parse(is), cfg);
  }
  if (c.system) cfg.system = dynamics::parse_system(*c.system);
  if (c.p) cfg.network.p = *c.p;
  if (c.q) cfg.network.q = *c.q;
  if (c.time_varying) cfg.time_varying = true;
  if (c.age) cfg.age_mode = network::parse_age_mode(*c.age);
  if (c.controls) cfg.control_mode = network::parse_control_mode(*c.controls);
  if (sizes_are_training) {
    if (c.episodes) cfg.train.episodes = *c.episodes;
    if (c.horizon) cfg.train.horizon = *c.horizon;
  } else {
    if (c.episodes) cfg.eval.episodes = *c.episodes;
    if (c.horizon) cfg.eval.horizon = *c.horizon;
    if (c.train_episodes) cfg.train.episodes = *c.train_episodes;
    if (c.train_horizon) cfg.train.horizon = *c.train_horizon;
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.double_precision) cfg.train.single_precision = false;
  if (c.estimators) {
    cfg.estimators.clear();
    for (const auto& e : split(*c.estimators)) cfg.estimators.push_back(harness::parse_estimator(e));
  }
  return cfg;
}

harness::GridOptions grid_options(const Common& c) {
  harness::GridOptions o;
  if (c.checkpoint_dir) o.checkpoint_dir = fs::path(*c.checkpoint_dir);
  o.threads = c.threads;
  o.record_wall_time = !c.no_wall_time;
  o.verbose = c.verbose;
  return o;
}

fs::path out_path(const Common& c, const std::string& fallback) {
  fs::path p = c.out.empty() ? harness::output_dir() / fallback : fs::path(c.out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

template <typename Fn>
void write_file(const fs::path& path, Fn fn) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  fn(os);
  std::fprintf(stderr, "wrote %s\n", path.string().c_str());
}

void print_rows(const std::vector<harness::ResultRecord>& rows) {
  for (const auto& r : rows) {
    std::printf("%-8s %-5s p=%-6g q=%-6g %-10s %-5s rmse=%.6g\n",
                std::string(dynamics::to_string(r.config.system)).c_str(),
                std::string(harness::to_string(r.estimator)).c_str(), r.config.network.p,
                r.config.network.q, std::string(network::to_string(r.config.control_mode)).c_str(),
                std::string(network::to_string(r.config.age_mode)).c_str(), r.rmse.total);
  }
}

// ---------------------------------------------------------------------------

int cmd_train(const Common& c) {
  ExperimentConfig cfg = resolve(c, true);
  cfg.estimators = {Estimator::laa};
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const laa::TrainResult r = harness::train_for(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path ckpt = c.checkpoint.empty() ? harness::output_dir() / (cfg.training_key() + ".ckpt")
                                             : fs::path(c.checkpoint);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  laa::save_model(ckpt, r.model, harness::metadata_for(cfg));
  std::fprintf(stderr, "wrote %s\n", ckpt.string().c_str());

  write_file(out_path(c, "loss_" + cfg.training_key() + ".csv"), [&](std::ostream& os) {
    os << "update,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < r.losses.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.10g\n", i, r.losses[i]);
      os << buf;
    }
  });
  std::printf("updates %zu (skipped %lld) in %.1f s\n", r.losses.size(),
              static_cast<long long>(r.skipped_updates), secs);
  if (r.losses.size() >= 10) {
    const auto prog = laa::loss_progress(r.losses);
    std::printf("loss first decile %.6g, last decile %.6g, ratio %.4f\n", prog.first_decile,
                prog.last_decile, prog.ratio());
  }
  return 0;
}

int cmd_eval(const Common& c) {
  ExperimentConfig cfg = resolve(c, false);
  const bool wants_laa =
      std::find(cfg.estimators.begin(), cfg.estimators.end(), Estimator::laa) != cfg.estimators.end();
  std::vector<harness::ResultRecord> rows;
  if (wants_laa && !c.checkpoint.empty()) {
    // The checkpoint supplies the model; baselines still run on the same traces.
    const laa::LoadedModel model = laa::load_model(c.checkpoint);
    rows = harness::cross_test(model, {cfg.network}, cfg, grid_options(c));
    ExperimentConfig rest = rows.front().config;
    rest.estimators.clear();
    for (Estimator e : cfg.estimators) {
      if (e != Estimator::laa) rest.estimators.push_back(e);
    }
    if (!rest.estimators.empty()) {
      for (auto& r : harness::run_grid({rest}, grid_options(c))) {
        if (r.rmse.trace_hashes != rows.front().rmse.trace_hashes) {
          throw std::logic_error("eval: estimators saw different traces");
        }
        rows.push_back(std::move(r));
      }
    }
  } else {
    rows = harness::run_grid({cfg}, grid_options(c));
  }
  write_file(out_path(c, "eval.csv"), [&](std::ostream& os) { harness::write_csv(os, rows); });
  print_rows(rows);
  return 0;
}

int cmd_grid(const Common& c, const std::string& settings, const std::string& ages) {
  const ExperimentConfig base = resolve(c, false);
  const auto nets = settings.empty() ? harness::standard_settings() : parse_settings(settings);
  std::vector<ExperimentConfig> configs;
  const auto age_list = ages.empty() ? std::vector<std::string>{std::string(
                                           network::to_string(base.age_mode))}
                                     : split(ages);
  for (const auto& net : nets) {
    for (const auto& a : age_list) {
      ExperimentConfig cfg = base;
      cfg.network = net;
      cfg.age_mode = network::parse_age_mode(a);
      if (cfg.age_mode == network::AgeMode::none) cfg.estimators = {Estimator::laa};
      configs.push_back(cfg);
    }
  }
  const auto rows = harness::run_grid(configs, grid_options(c));
  write_file(out_path(c, "grid.csv"), [&](std::ostream& os) { harness::write_csv(os, rows); });
  print_rows(rows);
  return 0;
}

int cmd_age_sweep(const Common& c, const std::string& p_grid, const std::string& seeds) {
  const double q = c.q.value_or(0.3);
  std::vector<double> ps;
  if (p_grid.empty()) {
    // 0.01 up to just below q.
    for (double p = 0.01; p < q - 1e-12; p += 0.01) ps.push_back(p);
    ps.push_back(q - 0.003);
  } else {
    ps = parse_doubles(p_grid);
  }
  std::vector<std::uint64_t> seed_list;
  for (const auto& s : split(seeds.empty() ? "1,2,3,4,5" : seeds)) seed_list.push_back(std::stoull(s));
  const std::int64_t horizon = c.horizon.value_or(1000000);
  for (double p : ps) {
    if (p >= q) std::fprintf(stderr, "warning: p=%g >= q=%g is unstable\n", p, q);
  }
  const auto rows = harness::age_sweep(q, ps, horizon, seed_list);
  write_file(out_path(c, "age_sweep.csv"), [&](std::ostream& os) { harness::write_age_csv(os, rows); });
  return 0;
}

int cmd_cross_test(const Common& c, const std::string& settings, const std::string& ratio_out) {
  if (c.checkpoint.empty()) throw std::invalid_argument("cross-test needs --checkpoint");
  const laa::LoadedModel model = laa::load_model(c.checkpoint);
  ExperimentConfig base = resolve(c, false);
  base.system = model.meta.spec.system;
  base.control_mode = model.meta.control_mode;
  if (!model.meta.spec.with_age) base.age_mode = network::AgeMode::none;
  auto nets = harness::standard_settings();
  nets.push_back({0.003, 0.007});
  if (!settings.empty()) nets = parse_settings(settings);

  auto rows = harness::cross_test(model, nets, base, grid_options(c));
  write_file(out_path(c, "cross_test.csv"), [&](std::ostream& os) { harness::write_csv(os, rows); });
  print_rows(rows);

  if (!ratio_out.empty()) {
    // Fixed-network models for the same settings, trained with the same recipe.
    std::vector<ExperimentConfig> fixed;
    for (const auto& r : rows) {
      ExperimentConfig f = r.config;
      f.time_varying = false;
      fixed.push_back(f);
    }
    auto fixed_rows = harness::run_grid(fixed, grid_options(c));
    rows.insert(rows.end(), fixed_rows.begin(), fixed_rows.end());
    const auto table = harness::ratio_table(rows);
    write_file(ratio_out, [&](std::ostream& os) { harness::write_ratio_csv(os, table); });
    for (const auto& t : table) {
      std::printf("p=%-6g q=%-6g fixed=%.6g time_varying=%.6g ratio=%.4f\n", t.p, t.q,
                  t.rmse_fixed, t.rmse_time_varying, t.ratio());
    }
  }
  return 0;
}

int cmd_gradcheck(std::size_t configs, std::uint64_t seed, double tol) {
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  for (std::size_t i = 0; i < configs; ++i) {
    const nn::GradCheckCase gc = nn::random_gradcheck_case(seed, i);
    const nn::GradCheckResult r = nn::check_gradients(gc.params, gc.problem);
    checked += r.checked;
    skipped += r.skipped_kinks;
    if (r.max_rel_error > worst) worst = r.max_rel_error;
    std::printf("case %zu n_x=%d: max rel error %.3g (%s[%zu])\n", i, gc.params.lstm.n_x,
                r.max_rel_error, r.worst_tensor.c_str(), r.worst_index);
  }
  std::printf("%zu cases, %zu entries checked, %zu skipped at ReLU kinks, max rel error %.3g\n",
              configs, checked, skipped, worst);
  return worst < tol ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Age-of-information estimation lab"};
  app.require_subcommand(1);

  Common train_c, eval_c, grid_c, sweep_c, cross_c;
  std::string grid_settings, grid_ages, p_grid, sweep_seeds, cross_settings, ratio_out;
  std::size_t gc_configs = 100;
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;

  auto* train = app.add_subcommand("train", "train an LAA model and save a checkpoint");
  add_common(train, train_c, true);
  train->add_option("--checkpoint", train_c.checkpoint, "checkpoint path to write");

  auto* eval = app.add_subcommand("eval", "evaluate estimators at one network setting");
  add_common(eval, eval_c, false);
  eval->add_option("--checkpoint", eval_c.checkpoint, "trained LAA checkpoint");
  eval->add_option("--checkpoint-dir", eval_c.checkpoint_dir, "reuse or store trained models");

  auto* grid = app.add_subcommand("grid", "run the experiment grid");
  add_common(grid, grid_c, false);
  grid->add_option("--checkpoint-dir", grid_c.checkpoint_dir, "reuse or store trained models");
  grid->add_option("--settings", grid_settings, "p:q list (default: the six standard settings)");
  grid->add_option("--ages", grid_ages, "comma list of age modes, e.g. true,none");

  auto* sweep = app.add_subcommand("age-sweep", "mean age against admission probability");
  sweep->add_option("--q", sweep_c.q, "service probability (default 0.3)");
  sweep->add_option("--p-grid", p_grid, "comma list of p values");
  sweep->add_option("--horizon", sweep_c.horizon, "slots per run (default 1e6)");
  sweep->add_option("--seeds", sweep_seeds, "comma list of seeds (default 1..5)");
  sweep->add_option("--out", sweep_c.out, "output CSV");

  auto* cross = app.add_subcommand("cross-test", "evaluate one checkpoint across settings");
  add_common(cross, cross_c, false);
  cross->add_option("--checkpoint", cross_c.checkpoint, "trained LAA checkpoint")->required();
  cross->add_option("--checkpoint-dir", cross_c.checkpoint_dir, "reuse or store fixed models");
  cross->add_option("--settings", cross_settings, "p:q list");
  cross->add_option("--ratio-out", ratio_out, "also train fixed models and write RMSE ratios");

  auto* gc = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  gc->add_option("--configs", gc_configs, "random configurations");
  gc->add_option("--seed", gc_seed, "seed");
  gc->add_option("--tol", gc_tol, "maximum relative error");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_c);
    if (*eval) return cmd_eval(eval_c);
    if (*grid) return cmd_grid(grid_c, grid_settings, grid_ages);
    if (*sweep) return cmd_age_sweep(sweep_c, p_grid, sweep_seeds);
    if (*cross) return cmd_cross_test(cross_c, cross_settings, ratio_out);
    if (*gc) return cmd_gradcheck(gc_configs, gc_seed, gc_tol);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
