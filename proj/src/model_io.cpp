#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "aoilab/checkpoint.hpp"
#include "aoilab/laa.hpp"

namespace aoilab::laa {

namespace {

using nlohmann::json;

std::filesystem::path sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_model(const std::filesystem::path& path, const LaaModel& model,
                const ModelMetadata& meta) {
  nn::save_checkpoint(path, model.params(), meta.train.seed);
  const TrainConfig& tc = meta.train;
  const auto& lin = meta.plant.linear;
  const auto& cp = meta.plant.cartpole;
  json j = {
      {"format", "aoilab-model 1"},
      {"system", std::string(dynamics::to_string(model.spec().system))},
      {"with_age", model.spec().with_age},
      {"n_h", model.spec().n_h},
      {"n_fc", model.spec().n_fc},
      {"control_mode", std::string(network::to_string(meta.control_mode))},
      {"time_varying", meta.time_varying},
      {"p", meta.network.p},
      {"q", meta.network.q},
      {"input_scale", to_vec(model.scaling().input)},
      {"output_scale", to_vec(model.scaling().output)},
      {"train",
       {{"episodes", tc.episodes},
        {"horizon", tc.horizon},
        {"batch_size", tc.batch_size},
        {"lr", tc.lr},
        {"weight_decay", tc.weight_decay},
        {"replay_capacity", tc.replay_capacity},
        {"bptt_window", tc.bptt_window},
        {"update_period", tc.update_period},
        {"single_precision", tc.single_precision},
        {"seed", tc.seed}}},
      {"plant",
       {{"linear",
         {{"dt", lin.dt},
          {"noise_var", lin.noise_var},
          {"position_limit", lin.position_limit},
          {"velocity_limit", lin.velocity_limit},
          {"control_limit", lin.control_limit},
          {"clamp", lin.clamp}}},
        {"cartpole",
         {{"l", cp.l},
          {"mc", cp.mc},
          {"mp", cp.mp},
          {"g", cp.g},
          {"force_mag", cp.force_mag},
          {"dt", cp.dt},
          {"velocity_limit", cp.velocity_limit},
          {"initial_spread", cp.initial_spread}}}}},
  };
  std::ofstream os(sidecar(path));
  if (!os) throw std::runtime_error("cannot write " + sidecar(path).string());
  os << j.dump(2) << '\n';
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream is(sidecar(path));
  if (!is) throw std::runtime_error("missing model metadata " + sidecar(path).string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("bad model metadata: " + std::string(e.what()));
  }
  if (j.value("format", "") != "aoilab-model 1") {
    throw std::runtime_error("unsupported model metadata format");
  }

  LoadedModel out;
  ModelMetadata& m = out.meta;
  try {
    m.spec.system = dynamics::parse_system(j.at("system").get<std::string>());
    m.spec.with_age = j.at("with_age").get<bool>();
    m.spec.n_h = j.at("n_h").get<int>();
    m.spec.n_fc = j.at("n_fc").get<int>();
    m.control_mode = network::parse_control_mode(j.at("control_mode").get<std::string>());
    m.time_varying = j.at("time_varying").get<bool>();
    m.network = {j.at("p").get<double>(), j.at("q").get<double>()};
    const json& t = j.at("train");
    m.train.episodes = t.at("episodes");
    m.train.horizon = t.at("horizon");
    m.train.batch_size = t.at("batch_size");
    m.train.lr = t.at("lr");
    m.train.weight_decay = t.at("weight_decay");
    m.train.replay_capacity = t.at("replay_capacity");
    m.train.bptt_window = t.at("bptt_window");
    m.train.update_period = t.at("update_period");
    m.train.single_precision = t.value("single_precision", true);
    m.train.seed = t.at("seed");
    m.train.n_h = m.spec.n_h;
    const json& lin = j.at("plant").at("linear");
    m.plant.linear = {lin.at("dt"), lin.at("noise_var"), lin.at("position_limit"),
                      lin.at("velocity_limit"), lin.at("control_limit"), lin.at("clamp")};
    const json& cp = j.at("plant").at("cartpole");
    m.plant.cartpole = {cp.at("l"), cp.at("mc"), cp.at("mp"), cp.at("g"),
                        cp.at("force_mag"), cp.at("dt"), cp.at("velocity_limit"),
                        cp.at("initial_spread")};
  } catch (const json::exception& e) {
    throw std::runtime_error("bad model metadata: " + std::string(e.what()));
  }

  nn::Checkpoint ck = nn::load_checkpoint(path);
  if (!(ck.params.shape() == m.spec.shape())) {
    throw std::runtime_error("checkpoint shape does not match its metadata");
  }
  Scaling sc{from_vec(j.at("input_scale").get<std::vector<double>>()),
             from_vec(j.at("output_scale").get<std::vector<double>>())};
  out.model = LaaModel(m.spec, std::move(ck.params), std::move(sc));
  return out;
}

}  // namespace aoilab::laa
