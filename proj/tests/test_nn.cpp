#include <doctest.h>

#include <cmath>
#include <sstream>

#include "aoilab/checkpoint.hpp"
#include "aoilab/nn.hpp"
#include "aoilab/objective.hpp"

using namespace aoilab;
using namespace aoilab::nn;

namespace {

DenseMatrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  DenseMatrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

DenseVector random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  return random_matrix(n, 1, rng, scale).col(0);
}

LstmParams random_lstm(int n_x, int n_h, Rng& rng, double scale = 0.5) {
  LstmParams p = LstmParams::zeros(n_x, n_h);
  p.w_ih = random_matrix(4 * n_h, n_x, rng, scale);
  p.w_hh = random_matrix(4 * n_h, n_h, rng, scale);
  p.b_ih = random_vector(4 * n_h, rng, scale);
  p.b_hh = random_vector(4 * n_h, rng, scale);
  return p;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Straight-line evaluation of one LSTM step for a single column.
void reference_lstm(const LstmParams& p, const std::vector<double>& x, const std::vector<double>& h,
                    const std::vector<double>& c, std::vector<double>& h_out,
                    std::vector<double>& c_out) {
  const int n_h = p.n_h;
  auto pre = [&](int gate, int unit) {
    const int row = gate * n_h + unit;
    double s = p.b_ih(row) + p.b_hh(row);
    for (int k = 0; k < p.n_x; ++k) s += p.w_ih(row, k) * x[static_cast<std::size_t>(k)];
    for (int k = 0; k < n_h; ++k) s += p.w_hh(row, k) * h[static_cast<std::size_t>(k)];
    return s;
  };
  h_out.assign(static_cast<std::size_t>(n_h), 0.0);
  c_out.assign(static_cast<std::size_t>(n_h), 0.0);
  for (int j = 0; j < n_h; ++j) {
    const double in = logistic(pre(0, j));
    const double forget = logistic(pre(1, j));
    const double cell = std::tanh(pre(2, j));
    const double out = logistic(pre(3, j));
    const auto u = static_cast<std::size_t>(j);
    c_out[u] = forget * c[u] + in * cell;
    h_out[u] = out * std::tanh(c_out[u]);
  }
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

template <class T>
SequenceProblemT<T> cast_problem(const SequenceProblem& p) {
  SequenceProblemT<T> out;
  for (const auto& x : p.xs) out.xs.push_back(x.cast<T>());
  for (const auto& m : p.masks) out.masks.push_back(m.cast<T>());
  out.emit = p.emit;
  for (const auto& y : p.targets) out.targets.push_back(y.cast<T>());
  out.output_scale = p.output_scale.cast<T>();
  return out;
}

}  // namespace

TEST_CASE("lstm_forward: zero parameters give zero state") {
  const LstmParams p = LstmParams::zeros(3, 5);
  Rng rng(1);
  TapeCache tape;
  const auto s = lstm_forward(p, Batch(random_matrix(3, 2, rng)), LstmState::zeros(5, 2), &tape);
  CHECK(s.h.isZero(0.0));
  CHECK(s.c.isZero(0.0));
  REQUIRE(tape.size() == 1);
  CHECK((tape.steps[0].gates.topRows(5).array() == 0.5).all());
  CHECK((tape.steps[0].gates.middleRows(10, 5).array() == 0.0).all());
}

TEST_CASE("lstm_forward: zero input, state and biases give zero output for any weights") {
  Rng rng(2);
  LstmParams p = random_lstm(4, 6, rng, 3.0);
  p.b_ih.setZero();
  p.b_hh.setZero();
  const auto s = lstm_forward(p, Batch(Batch::Zero(4, 3)), LstmState::zeros(6, 3));
  CHECK(s.h.isZero(0.0));
  CHECK(s.c.isZero(0.0));
}

TEST_CASE("lstm_forward: matches a straight-line reference") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const int n_x = 2 + trial, n_h = 3 + 2 * trial;
    const LstmParams p = random_lstm(n_x, n_h, rng);
    const Batch x = random_matrix(n_x, 3, rng);
    LstmState s0 = LstmState::zeros(n_h, 3);
    s0.h = random_matrix(n_h, 3, rng, 0.9);
    s0.c = random_matrix(n_h, 3, rng, 2.0);
    const auto s1 = lstm_forward(p, x, s0);
    double worst = 0;
    for (int col = 0; col < 3; ++col) {
      std::vector<double> xv(x.col(col).data(), x.col(col).data() + n_x);
      std::vector<double> hv(s0.h.col(col).data(), s0.h.col(col).data() + n_h);
      std::vector<double> cv(s0.c.col(col).data(), s0.c.col(col).data() + n_h);
      std::vector<double> h_ref, c_ref;
      reference_lstm(p, xv, hv, cv, h_ref, c_ref);
      for (int j = 0; j < n_h; ++j) {
        worst = std::max(worst, rel(s1.h(j, col), h_ref[static_cast<std::size_t>(j)]));
        worst = std::max(worst, rel(s1.c(j, col), c_ref[static_cast<std::size_t>(j)]));
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("lstm_forward: masked columns are reset and |h| stays within 1") {
  Rng rng(4);
  const LstmParams p = random_lstm(3, 8, rng, 5.0);
  LstmState s = LstmState::zeros(8, 4);
  s.h = random_matrix(8, 4, rng, 0.9);
  s.c = random_matrix(8, 4, rng, 5.0);
  Mask mask(4);
  mask << 1, 0, 1, 0;
  const auto out = lstm_forward(p, Batch(random_matrix(3, 4, rng, 10.0)), s, static_cast<TapeCache*>(nullptr), &mask);
  CHECK(out.h.col(1).isZero(0.0));
  CHECK(out.c.col(3).isZero(0.0));
  CHECK(out.h.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(out.c.allFinite());
}

TEST_CASE("lstm_forward and fc_forward: shape mismatches are rejected") {
  const LstmParams p = LstmParams::zeros(3, 4);
  CHECK_THROWS_AS(lstm_forward(p, Batch(Batch::Zero(2, 1)), LstmState::zeros(4)), DimensionError);
  CHECK_THROWS_AS(lstm_forward(p, Batch(Batch::Zero(3, 2)), LstmState::zeros(4, 1)), DimensionError);
  const FcParams f = FcParams::zeros(3, 2);
  CHECK_THROWS_AS(fc_forward(f, Batch(Batch::Zero(4, 1)), false), DimensionError);
}

TEST_CASE("fc_forward: identity, ReLU clipping and a naive loop") {
  FcParams id = FcParams::zeros(2, 2);
  id.w.setIdentity();
  Batch x(2, 1);
  x << -1, 2;
  CHECK(fc_forward(id, x, false) == x);
  const Batch r = fc_forward(id, x, true);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(1, 0) == 2.0);

  Rng rng(5);
  FcParams f = FcParams::zeros(7, 5);
  f.w = random_matrix(5, 7, rng);
  f.b = random_vector(5, rng);
  const Batch in = random_matrix(7, 3, rng);
  const Batch out = fc_forward(f, in, false);
  double worst = 0;
  for (int col = 0; col < 3; ++col) {
    for (int i = 0; i < 5; ++i) {
      double s = f.b(i);
      for (int k = 0; k < 7; ++k) s += f.w(i, k) * in(k, col);
      worst = std::max(worst, rel(out(i, col), s));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("fc_backward: single linear layer has the closed-form gradient") {
  Rng rng(6);
  FcParams f = FcParams::zeros(4, 3);
  f.w = random_matrix(3, 4, rng);
  const Batch x = random_matrix(4, 1, rng);
  const Batch y = random_matrix(3, 1, rng);
  const Batch pre = fc_forward(f, x, false);
  const Batch d_out = pre - y;  // dL/d(Wx) for L = 0.5 ||Wx - y||^2
  FcParams g = FcParams::zeros(4, 3);
  const Batch dx = fc_backward(f, x, pre, false, d_out, g);
  const DenseMatrix expect = (pre - y) * x.transpose();
  CHECK((g.w - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((g.b - (pre - y).col(0)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((dx - f.w.transpose() * (pre - y)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("backward: zero loss gradient gives zero parameter gradients") {
  const GradCheckCase gc = random_gradcheck_case(3, 0);
  StackTape tape;
  const auto outs = stack_forward(gc.params, gc.problem.xs, gc.problem.masks, gc.problem.emit,
                                  LstmState::zeros(gc.params.lstm.n_h, gc.problem.xs[0].cols()),
                                  &tape);
  std::vector<Batch> zeros;
  for (const auto& o : outs) zeros.push_back(Batch::Zero(o.rows(), o.cols()));
  StackParams grads = StackParams::zeros(gc.params.shape());
  backward(gc.params, tape, zeros, grads);
  for (const auto& t : grads.tensors())
    for (double v : t.data) REQUIRE(v == 0.0);
}

TEST_CASE("backward: analytic gradients agree with central differences") {
  for (std::size_t index = 0; index < 4; ++index) {
    const GradCheckCase gc = random_gradcheck_case(11, index);
    const GradCheckResult r = check_gradients(gc.params, gc.problem, 1e-5);
    CAPTURE(index);
    CAPTURE(r.worst_tensor);
    CHECK(r.checked == gc.params.parameter_count() - r.skipped_kinks);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("sequence_loss: single precision gradient follows the double one") {
  const GradCheckCase gc = random_gradcheck_case(5, 1);
  StackParams g64 = StackParams::zeros(gc.params.shape());
  const double l64 = sequence_loss(gc.params, gc.problem, &g64);
  StackParamsT<float> g32 = StackParamsT<float>::zeros(gc.params.shape());
  const auto p32 = gc.params.cast<float>();
  const double l32 = sequence_loss(p32, cast_problem<float>(gc.problem), &g32);
  CHECK(l32 == doctest::Approx(l64).epsilon(1e-4));
  const StackParams back = g32.cast<double>();
  StackParams a = g64, b = back;
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  double scale = 0, diff = 0;
  for (std::size_t k = 0; k < ta.size(); ++k) {
    for (std::size_t i = 0; i < ta[k].data.size(); ++i) {
      scale = std::max(scale, std::abs(ta[k].data[i]));
      diff = std::max(diff, std::abs(ta[k].data[i] - tb[k].data[i]));
    }
  }
  CHECK(diff < 1e-3 * scale);
}

TEST_CASE("stack_forward: bitwise deterministic") {
  const GradCheckCase gc = random_gradcheck_case(7, 2);
  const auto init = LstmState::zeros(gc.params.lstm.n_h, gc.problem.xs[0].cols());
  const auto a = stack_forward(gc.params, gc.problem.xs, gc.problem.masks, gc.problem.emit, init,
                               static_cast<StackTape*>(nullptr));
  const auto b = stack_forward(gc.params, gc.problem.xs, gc.problem.masks, gc.problem.emit, init,
                               static_cast<StackTape*>(nullptr));
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
}

TEST_CASE("adam_step: zero gradient without decay is a fixed point") {
  Rng rng(8);
  StackParams p = init_params({3, 4, 4, 2}, rng);
  const StackParams before = p;
  StackParams g = StackParams::zeros(p.shape());
  AdamState opt({1e-2, 0.9, 0.999, 1e-8, 0.0});
  for (int k = 0; k < 3; ++k) adam_step(p, g, opt);
  CHECK(p.lstm.w_ih == before.lstm.w_ih);
  CHECK(p.fc2.b == before.fc2.b);
  CHECK(opt.step_count == 3);
}

TEST_CASE("adam_step: first step moves against the gradient sign") {
  Rng rng(9);
  StackParams p = init_params({3, 4, 4, 2}, rng);
  const StackParams before = p;
  StackParams g = init_params({3, 4, 4, 2}, rng);
  AdamState opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
  adam_step(p, g, opt);
  auto tp = p.tensors();
  StackParams b = before;
  auto tb = b.tensors();
  auto tg = g.tensors();
  bool ok = true;
  for (std::size_t k = 0; k < tp.size(); ++k) {
    for (std::size_t i = 0; i < tp[k].data.size(); ++i) {
      const double step = tp[k].data[i] - tb[k].data[i];
      const double gi = tg[k].data[i];
      if (gi != 0.0) ok = ok && (step > 0) == (gi < 0);
      ok = ok && std::abs(std::abs(step) - 1e-3) < 1e-6;
    }
  }
  CHECK(ok);
}

TEST_CASE("adam_step: three-step scalar trace matches the manual recursion") {
  std::vector<double> theta{0.5}, grad{1.0};
  const std::vector<Tensor> tp{{"theta", std::span<double>(theta), 1, 1}};
  const std::vector<Tensor> tg{{"theta", std::span<double>(grad), 1, 1}};
  AdamState opt({0.1, 0.9, 0.999, 1e-8, 0.0});
  double m = 0, v = 0, ref = 0.5;
  for (int t = 1; t <= 3; ++t) {
    m = 0.9 * m + 0.1 * 1.0;
    v = 0.999 * v + 0.001 * 1.0;
    const double m_hat = m / (1 - std::pow(0.9, t));
    const double v_hat = v / (1 - std::pow(0.999, t));
    ref -= 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
    adam_step(tp, tg, opt);
    CHECK(theta[0] == doctest::Approx(ref).epsilon(1e-12));
  }
  CHECK(theta[0] == doctest::Approx(0.5 - 0.3).epsilon(1e-7));
  CHECK(opt.v[0] >= 0.0);
}

TEST_CASE("adam_step: L2 decay enters through the gradient") {
  std::vector<double> theta{2.0}, grad{0.0};
  const std::vector<Tensor> tp{{"theta", std::span<double>(theta), 1, 1}};
  const std::vector<Tensor> tg{{"theta", std::span<double>(grad), 1, 1}};
  AdamState opt({0.1, 0.9, 0.999, 1e-8, 1e-3});
  adam_step(tp, tg, opt);
  // Effective gradient 2e-3 > 0; the first Adam step has magnitude lr.
  CHECK(theta[0] == doctest::Approx(2.0 - 0.1).epsilon(1e-6));
  CHECK(grad[0] == 0.0);
}

TEST_CASE("op_count: formula values") {
  CHECK(op_count(12, 64, 4) == 28672);
  CHECK(op_count(9, 64, 3) == 27840);
  CHECK(op_count(1, 1, 1) == 23);
}

TEST_CASE("init_params: bounded, deterministic and centred") {
  const StackShape shape{12, 64, 64, 4};
  Rng a(42), b(42);
  StackParams pa = init_params(shape, a);
  StackParams pb = init_params(shape, b);
  const double bound = 1.0 / std::sqrt(64.0);
  double sum = 0;
  std::size_t n = 0;
  bool bounded = true, same = true;
  auto ta = pa.tensors();
  auto tb = pb.tensors();
  for (std::size_t k = 0; k < ta.size(); ++k) {
    for (std::size_t i = 0; i < ta[k].data.size(); ++i) {
      bounded = bounded && std::abs(ta[k].data[i]) <= bound;
      same = same && ta[k].data[i] == tb[k].data[i];
      sum += ta[k].data[i];
      ++n;
    }
  }
  CHECK(bounded);
  CHECK(same);
  REQUIRE(n > 20000);
  const double se = bound / std::sqrt(3.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sum / static_cast<double>(n)) < 3 * se);

  std::size_t m = 0;
  double s2 = 0;
  Rng c(43);
  while (m < 100000) {
    StackParams p = init_params(shape, c);
    for (const auto& t : p.tensors())
      for (double v : t.data) {
        if (m == 100000) break;
        s2 += v;
        ++m;
      }
  }
  CHECK(std::abs(s2 / 1e5) < 3 * bound / std::sqrt(3.0) / std::sqrt(1e5));
}

TEST_CASE("StackParams: parameter layout") {
  const StackShape shape{12, 64, 64, 4};
  StackParams p = StackParams::zeros(shape);
  CHECK(p.shape() == shape);
  const std::size_t expect = 4 * 64 * 12 + 4 * 64 * 64 + 2 * 4 * 64 + 64 * 64 + 64 + 4 * 64 + 4;
  CHECK(p.parameter_count() == expect);
  std::size_t total = 0;
  for (const auto& t : p.tensors()) {
    CHECK(static_cast<std::size_t>(t.rows * t.cols) == t.data.size());
    total += t.data.size();
  }
  CHECK(total == expect);
}

TEST_CASE("checkpoint: round trip is bit exact and malformed files are refused") {
  Rng rng(12);
  const StackParams p = init_params({9, 8, 6, 3}, rng);
  std::stringstream ss;
  write_checkpoint(ss, p, 77);
  const Checkpoint c = read_checkpoint(ss);
  CHECK(c.seed == 77);
  CHECK(c.params.shape() == p.shape());
  CHECK(c.params.lstm.w_hh == p.lstm.w_hh);
  CHECK(c.params.lstm.b_ih == p.lstm.b_ih);
  CHECK(c.params.fc1.w == p.fc1.w);
  CHECK(c.params.fc2.b == p.fc2.b);

  std::stringstream bad("not a checkpoint\n");
  CHECK_THROWS_AS(read_checkpoint(bad), CheckpointError);
  std::string text;
  {
    std::stringstream again;
    write_checkpoint(again, p, 77);
    text = again.str();
  }
  std::stringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(read_checkpoint(truncated), CheckpointError);
}
