#include <cstdio>
#include <ostream>
#include <string>

#include "aoilab/harness.hpp"

namespace aoilab::harness {

namespace {

constexpr int kMaxComponents = 4;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::vector<std::string> csv_header() {
  std::vector<std::string> h = {"system",       "estimator", "p",        "q",
                                "network_mode", "control_mode", "age_mode", "seed",
                                "episodes",     "horizon",   "rmse_total"};
  for (int i = 0; i < kMaxComponents; ++i) h.push_back("rmse_c" + std::to_string(i));
  for (const char* c : {"wall_s", "config_fingerprint", "version"}) h.emplace_back(c);
  return h;
}

void write_csv_header(std::ostream& os) {
  const auto h = csv_header();
  for (std::size_t i = 0; i < h.size(); ++i) os << (i ? "," : "") << h[i];
  os << '\n';
}

void write_csv_row(std::ostream& os, const ResultRecord& r) {
  const ExperimentConfig& c = r.config;
  os << dynamics::to_string(c.system) << ',' << to_string(r.estimator) << ',' << num(c.network.p)
     << ',' << num(c.network.q) << ','
     << (r.estimator == Estimator::laa && c.time_varying ? "time_varying" : "fixed") << ','
     << network::to_string(c.control_mode) << ',' << network::to_string(c.age_mode) << ','
     << c.seed << ',' << c.eval.episodes << ',' << c.eval.horizon << ',' << num(r.rmse.total);
  for (int i = 0; i < kMaxComponents; ++i) {
    os << ',';
    if (i < static_cast<int>(r.rmse.per_component.size())) os << num(r.rmse.per_component[i]);
  }
  os << ',' << num(r.wall_s) << ',' << r.fingerprint << ',' << kVersion << '/' << kCsvSchema
     << '\n';
}

void write_csv(std::ostream& os, const std::vector<ResultRecord>& rows) {
  write_csv_header(os);
  for (const auto& r : rows) write_csv_row(os, r);
}

void write_age_csv(std::ostream& os, const std::vector<AgeSweepRow>& rows) {
  os << "q,p,horizon,seed,mean_age,stable\n";
  for (const auto& r : rows) {
    os << num(r.q) << ',' << num(r.p) << ',' << r.horizon << ',' << r.seed << ','
       << num(r.mean_age) << ',' << (r.stable ? 1 : 0) << '\n';
  }
}

void write_ratio_csv(std::ostream& os, const std::vector<RatioRow>& rows) {
  os << "p,q,rmse_fixed,rmse_time_varying,ratio\n";
  for (const auto& r : rows) {
    os << num(r.p) << ',' << num(r.q) << ',' << num(r.rmse_fixed) << ','
       << num(r.rmse_time_varying) << ',' << num(r.ratio()) << '\n';
  }
}

}  // namespace aoilab::harness
