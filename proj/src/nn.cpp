#include "aoilab/nn.hpp"

#include <cmath>
#include <numeric>

namespace aoilab::nn {

namespace {

// Both built on exp so Eigen vectorises them.
template <class S, class Derived>
BatchT<S> sigmoid(const Eigen::MatrixBase<Derived>& z) {
  return (S(1) + (-z.array()).exp()).inverse().matrix();
}

template <class S, class Derived>
BatchT<S> tanh_act(const Eigen::MatrixBase<Derived>& z) {
  return (S(2) * (S(1) + (S(-2) * z.array()).exp()).inverse() - S(1)).matrix();
}

void require(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

template <class S>
LstmParamsT<S> LstmParamsT<S>::zeros(int n_x, int n_h) {
  require(n_x > 0 && n_h > 0, "LstmParams: sizes must be positive");
  LstmParamsT p;
  p.n_x = n_x;
  p.n_h = n_h;
  p.w_ih = MatrixT<S>::Zero(4 * n_h, n_x);
  p.w_hh = MatrixT<S>::Zero(4 * n_h, n_h);
  p.b_ih = VectorT<S>::Zero(4 * n_h);
  p.b_hh = VectorT<S>::Zero(4 * n_h);
  return p;
}

template <class S>
FcParamsT<S> FcParamsT<S>::zeros(int n_in, int n_out) {
  require(n_in > 0 && n_out > 0, "FcParams: sizes must be positive");
  return {MatrixT<S>::Zero(n_out, n_in), VectorT<S>::Zero(n_out)};
}

template <class S>
LstmStateT<S> LstmStateT<S>::zeros(int n_h, Eigen::Index batch) {
  return {BatchT<S>::Zero(n_h, batch), BatchT<S>::Zero(n_h, batch)};
}

template <class S>
LstmStateT<S> lstm_forward(const LstmParamsT<S>& p, const BatchT<S>& x,
                           const LstmStateT<S>& state, TapeCacheT<S>* tape,
                           const MaskT<S>* mask) {
  const Eigen::Index nh = p.n_h;
  const Eigen::Index batch = x.cols();
  require(x.rows() == p.n_x, "lstm_forward: input length != n_x");
  require(state.h.rows() == nh && state.c.rows() == nh, "lstm_forward: state length != n_h");
  require(state.h.cols() == batch && state.c.cols() == batch, "lstm_forward: batch mismatch");
  require(mask == nullptr || mask->size() == batch, "lstm_forward: mask length != batch");

  // Pre-activations, then activated in place: sigmoid for i, f, o and tanh for g.
  BatchT<S> gates(4 * nh, batch);
  gates.noalias() = p.w_ih * x;
  gates.noalias() += p.w_hh * state.h;
  gates.colwise() += p.b_ih + p.b_hh;
  gates.topRows(2 * nh) = sigmoid<S>(gates.topRows(2 * nh));
  gates.middleRows(2 * nh, nh) = tanh_act<S>(gates.middleRows(2 * nh, nh));
  gates.bottomRows(nh) = sigmoid<S>(gates.bottomRows(nh));

  LstmStateT<S> out;
  out.c = (gates.middleRows(nh, nh).array() * state.c.array() +
           gates.topRows(nh).array() * gates.middleRows(2 * nh, nh).array())
              .matrix();
  BatchT<S> tanh_c = tanh_act<S>(out.c);
  out.h = (gates.bottomRows(nh).array() * tanh_c.array()).matrix();
  if (mask != nullptr) {
    out.c.array().rowwise() *= mask->array();
    out.h.array().rowwise() *= mask->array();
  }

  if (tape != nullptr) {
    LstmStepTapeT<S> step;
    step.x = x;
    step.h_prev = state.h;
    step.c_prev = state.c;
    step.gates = std::move(gates);
    step.tanh_c = std::move(tanh_c);
    if (mask != nullptr) step.mask = *mask;
    tape->steps.push_back(std::move(step));
  }
  return out;
}

template <class S>
BatchT<S> fc_forward(const FcParamsT<S>& params, const BatchT<S>& x, bool relu) {
  require(x.rows() == params.w.cols(), "fc_forward: input length != n_in");
  BatchT<S> y(params.w.rows(), x.cols());
  y.noalias() = params.w * x;
  y.colwise() += params.b;
  if (relu) y = y.cwiseMax(S(0));
  return y;
}

template <class S>
BatchT<S> fc_backward(const FcParamsT<S>& params, const BatchT<S>& x,
                      const BatchT<S>& pre_activation, bool relu, const BatchT<S>& d_out,
                      FcParamsT<S>& grads) {
  require(d_out.rows() == params.w.rows() && d_out.cols() == x.cols(),
          "fc_backward: gradient shape mismatch");
  BatchT<S> d_pre = d_out;
  if (relu) d_pre.array() *= (pre_activation.array() > S(0)).template cast<S>();
  grads.w.noalias() += d_pre * x.transpose();
  grads.b += d_pre.rowwise().sum();
  BatchT<S> d_in(params.w.cols(), x.cols());
  d_in.noalias() = params.w.transpose() * d_pre;
  return d_in;
}

// ---------------------------------------------------------------------------

template <class S>
StackParamsT<S> StackParamsT<S>::zeros(const StackShape& s) {
  return {LstmParamsT<S>::zeros(s.n_x, s.n_h), FcParamsT<S>::zeros(s.n_h, s.n_fc),
          FcParamsT<S>::zeros(s.n_fc, s.n_o)};
}

template <class S>
StackShape StackParamsT<S>::shape() const {
  return {lstm.n_x, lstm.n_h, fc1.n_out(), fc2.n_out()};
}

template <class S>
std::vector<TensorT<S>> StackParamsT<S>::tensors() {
  auto mat = [](std::string name, MatrixT<S>& m) {
    return TensorT<S>{std::move(name), {m.data(), static_cast<std::size_t>(m.size())}, m.rows(),
                      m.cols()};
  };
  auto vec = [](std::string name, VectorT<S>& v) {
    return TensorT<S>{std::move(name), {v.data(), static_cast<std::size_t>(v.size())}, v.size(),
                      1};
  };
  return {mat("lstm.w_ih", lstm.w_ih), mat("lstm.w_hh", lstm.w_hh), vec("lstm.b_ih", lstm.b_ih),
          vec("lstm.b_hh", lstm.b_hh), mat("fc1.w", fc1.w),           vec("fc1.b", fc1.b),
          mat("fc2.w", fc2.w),         vec("fc2.b", fc2.b)};
}

template <class S>
std::size_t StackParamsT<S>::parameter_count() const {
  return static_cast<std::size_t>(lstm.w_ih.size() + lstm.w_hh.size() + lstm.b_ih.size() +
                                  lstm.b_hh.size() + fc1.w.size() + fc1.b.size() + fc2.w.size() +
                                  fc2.b.size());
}

template <class S>
void StackParamsT<S>::set_zero() {
  for (auto& t : tensors()) std::fill(t.data.begin(), t.data.end(), S(0));
}

template <class S>
std::vector<BatchT<S>> stack_forward(const StackParamsT<S>& params,
                                     const std::vector<BatchT<S>>& xs,
                                     const std::vector<MaskT<S>>& masks,
                                     const std::vector<char>& emit, const LstmStateT<S>& initial,
                                     StackTapeT<S>* tape, LstmStateT<S>* final_state) {
  require(emit.size() == xs.size(), "stack_forward: emit flags must match sequence length");
  require(masks.empty() || masks.size() == xs.size(), "stack_forward: one mask per step");
  if (tape != nullptr) tape->clear();

  std::vector<BatchT<S>> outputs;
  LstmStateT<S> state = initial;
  TapeCacheT<S>* lstm_tape = tape != nullptr ? &tape->lstm : nullptr;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    state = lstm_forward(params.lstm, xs[k], state, lstm_tape, masks.empty() ? nullptr : &masks[k]);
    if (!emit[k]) continue;
    BatchT<S> pre(params.fc1.w.rows(), state.h.cols());
    pre.noalias() = params.fc1.w * state.h;
    pre.colwise() += params.fc1.b;
    BatchT<S> hidden = pre.cwiseMax(S(0));
    outputs.push_back(fc_forward(params.fc2, hidden, false));
    if (tape != nullptr) tape->outputs.push_back({k, state.h, std::move(pre), std::move(hidden)});
  }
  if (final_state != nullptr) *final_state = std::move(state);
  return outputs;
}

template <class S>
void backward(const StackParamsT<S>& params, const StackTapeT<S>& tape,
              const std::vector<BatchT<S>>& d_outputs, StackParamsT<S>& grads) {
  require(!tape.lstm.steps.empty(), "backward: empty tape");
  require(d_outputs.size() == tape.outputs.size(), "backward: one gradient per emitted step");
  require(grads.shape() == params.shape(), "backward: gradient shape mismatch");

  const LstmParamsT<S>& p = params.lstm;
  const Eigen::Index nh = p.n_h;
  const Eigen::Index batch = tape.lstm.steps.front().x.cols();
  BatchT<S> d_h = BatchT<S>::Zero(nh, batch);
  BatchT<S> d_c = BatchT<S>::Zero(nh, batch);
  BatchT<S> d_z(4 * nh, batch);

  std::ptrdiff_t out_idx = static_cast<std::ptrdiff_t>(tape.outputs.size()) - 1;
  for (std::ptrdiff_t k = static_cast<std::ptrdiff_t>(tape.lstm.steps.size()) - 1; k >= 0; --k) {
    const LstmStepTapeT<S>& st = tape.lstm.steps[static_cast<std::size_t>(k)];

    if (out_idx >= 0 && tape.outputs[static_cast<std::size_t>(out_idx)].step ==
                            static_cast<std::size_t>(k)) {
      const OutputTapeT<S>& ot = tape.outputs[static_cast<std::size_t>(out_idx)];
      const BatchT<S>& d_y = d_outputs[static_cast<std::size_t>(out_idx)];
      require(d_y.rows() == params.fc2.w.rows() && d_y.cols() == batch,
              "backward: output gradient shape mismatch");
      const BatchT<S> d_hidden =
          fc_backward(params.fc2, ot.fc1_out, ot.fc1_out, false, d_y, grads.fc2);
      d_h += fc_backward(params.fc1, ot.h, ot.fc1_pre, true, d_hidden, grads.fc1);
      --out_idx;
    }

    if (st.mask.size() > 0) {
      d_h.array().rowwise() *= st.mask.array();
      d_c.array().rowwise() *= st.mask.array();
    }

    // h = o * tanh(c), c = f * c_prev + i * g
    const auto i = st.gates.topRows(nh).array();
    const auto f = st.gates.middleRows(nh, nh).array();
    const auto g = st.gates.middleRows(2 * nh, nh).array();
    const auto o = st.gates.bottomRows(nh).array();
    d_c.array() += d_h.array() * o * (S(1) - st.tanh_c.array().square());
    d_z.topRows(nh).array() = d_c.array() * g * i * (S(1) - i);
    d_z.middleRows(nh, nh).array() = d_c.array() * st.c_prev.array() * f * (S(1) - f);
    d_z.middleRows(2 * nh, nh).array() = d_c.array() * i * (S(1) - g.square());
    d_z.bottomRows(nh).array() = d_h.array() * st.tanh_c.array() * o * (S(1) - o);

    grads.lstm.w_ih.noalias() += d_z * st.x.transpose();
    grads.lstm.w_hh.noalias() += d_z * st.h_prev.transpose();
    const VectorT<S> d_b = d_z.rowwise().sum();
    grads.lstm.b_ih += d_b;
    grads.lstm.b_hh += d_b;

    d_c.array() *= f;
    d_h.noalias() = p.w_hh.transpose() * d_z;
  }
}

#define AOILAB_NN_INSTANTIATE(S)                                                               \
  template struct LstmParamsT<S>;                                                              \
  template struct FcParamsT<S>;                                                                \
  template struct LstmStateT<S>;                                                               \
  template struct StackParamsT<S>;                                                             \
  template LstmStateT<S> lstm_forward(const LstmParamsT<S>&, const BatchT<S>&,                 \
                                      const LstmStateT<S>&, TapeCacheT<S>*, const MaskT<S>*);  \
  template BatchT<S> fc_forward(const FcParamsT<S>&, const BatchT<S>&, bool);                  \
  template BatchT<S> fc_backward(const FcParamsT<S>&, const BatchT<S>&, const BatchT<S>&,      \
                                 bool, const BatchT<S>&, FcParamsT<S>&);                       \
  template std::vector<BatchT<S>> stack_forward(                                               \
      const StackParamsT<S>&, const std::vector<BatchT<S>>&, const std::vector<MaskT<S>>&,     \
      const std::vector<char>&, const LstmStateT<S>&, StackTapeT<S>*, LstmStateT<S>*);         \
  template void backward(const StackParamsT<S>&, const StackTapeT<S>&,                         \
                         const std::vector<BatchT<S>>&, StackParamsT<S>&);

AOILAB_NN_INSTANTIATE(double)
AOILAB_NN_INSTANTIATE(float)

#undef AOILAB_NN_INSTANTIATE

// ---------------------------------------------------------------------------

void adam_step(std::span<const Tensor> params, std::span<const Tensor> grads, AdamState& opt) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: tensor count mismatch");
  std::size_t total = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].data.size() != grads[k].data.size()) {
      throw DimensionError("adam_step: tensor size mismatch for " + params[k].name);
    }
    total += params[k].data.size();
  }
  if (opt.m.empty()) {
    opt.m.assign(total, 0.0);
    opt.v.assign(total, 0.0);
  } else if (opt.m.size() != total) {
    throw DimensionError("adam_step: optimizer state does not match parameters");
  }

  const AdamConfig& c = opt.cfg;
  ++opt.step_count;
  const double t = static_cast<double>(opt.step_count);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);

  std::size_t offset = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::span<double> theta = params[k].data;
    std::span<double> grad = grads[k].data;
    for (std::size_t j = 0; j < theta.size(); ++j, ++offset) {
      const double g = grad[j] + c.weight_decay * theta[j];
      double& m = opt.m[offset];
      double& v = opt.v[offset];
      m = c.beta1 * m + (1.0 - c.beta1) * g;
      v = c.beta2 * v + (1.0 - c.beta2) * g * g;
      theta[j] -= c.lr * (m / bias1) / (std::sqrt(v / bias2) + c.eps);
    }
  }
}

void adam_step(StackParams& params, StackParams& grads, AdamState& opt) {
  const auto p = params.tensors();
  const auto g = grads.tensors();
  adam_step(std::span<const Tensor>(p), std::span<const Tensor>(g), opt);
}

std::int64_t op_count(std::int64_t n_x, std::int64_t n_h, std::int64_t n_o) {
  if (n_x <= 0 || n_h <= 0 || n_o <= 0) throw DimensionError("op_count: sizes must be positive");
  return 4 * (n_x * n_h + 2 * n_h + n_h * n_h) + 4 * n_h + 2 * n_h * n_h + n_h * n_o;
}

StackParams init_params(const StackShape& shape, Rng& rng) {
  StackParams params = StackParams::zeros(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.n_h));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& t : params.tensors()) {
    for (double& w : t.data) w = u(rng);
  }
  return params;
}

}  // namespace aoilab::nn
