#include "aoilab/checkpoint.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <ios>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace aoilab::nn {

namespace {

constexpr const char* kMagic = "aoilab-checkpoint";
constexpr int kVersion = 1;

void expect(std::istream& is, const std::string& token) {
  std::string got;
  if (!(is >> got) || got != token) {
    throw CheckpointError("checkpoint: expected '" + token + "', got '" + got + "'");
  }
}

double parse_double(const std::string& token) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (errno != 0 || end == token.c_str() || *end != '\0') {
    throw CheckpointError("checkpoint: bad value '" + token + "'");
  }
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const StackParams& params, std::uint64_t seed) {
  const StackShape s = params.shape();
  os << kMagic << ' ' << kVersion << '\n'
     << "gate_order i f g o\n"
     << "shape " << s.n_x << ' ' << s.n_h << ' ' << s.n_fc << ' ' << s.n_o << '\n'
     << "seed " << seed << '\n';
  os << std::hexfloat;
  StackParams view = params;
  for (const Tensor& t : view.tensors()) {
    os << "tensor " << t.name << ' ' << std::dec << t.rows << ' ' << t.cols << '\n'
       << std::hexfloat;
    for (Eigen::Index r = 0; r < t.rows; ++r) {
      for (Eigen::Index c = 0; c < t.cols; ++c) {
        os << (c == 0 ? "" : " ") << t.data[static_cast<std::size_t>(r * t.cols + c)];
      }
      os << '\n';
    }
  }
  os << std::defaultfloat << "end\n";
}

Checkpoint read_checkpoint(std::istream& is) {
  expect(is, kMagic);
  int version = 0;
  if (!(is >> version) || version != kVersion) {
    throw CheckpointError("checkpoint: unsupported version");
  }
  expect(is, "gate_order");
  for (const char* gate : {"i", "f", "g", "o"}) expect(is, gate);

  StackShape shape;
  expect(is, "shape");
  if (!(is >> shape.n_x >> shape.n_h >> shape.n_fc >> shape.n_o)) {
    throw CheckpointError("checkpoint: bad shape line");
  }
  if (shape.n_x <= 0 || shape.n_h <= 0 || shape.n_fc <= 0 || shape.n_o <= 0) {
    throw CheckpointError("checkpoint: non-positive layer size");
  }
  Checkpoint ck;
  expect(is, "seed");
  if (!(is >> ck.seed)) throw CheckpointError("checkpoint: bad seed");

  ck.params = StackParams::zeros(shape);
  for (Tensor& t : ck.params.tensors()) {
    expect(is, "tensor");
    expect(is, t.name);
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(is >> rows >> cols) || rows != t.rows || cols != t.cols) {
      throw CheckpointError("checkpoint: tensor " + t.name + " has unexpected dimensions");
    }
    std::string token;
    for (double& v : t.data) {
      if (!(is >> token)) throw CheckpointError("checkpoint: truncated tensor " + t.name);
      v = parse_double(token);
    }
  }
  expect(is, "end");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const StackParams& params,
                     std::uint64_t seed) {
  std::ofstream os(path);
  if (!os) throw CheckpointError("cannot write checkpoint " + path.string());
  write_checkpoint(os, params, seed);
  if (!os) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace aoilab::nn
