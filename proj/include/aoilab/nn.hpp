#ifndef AOILAB_NN_HPP
#define AOILAB_NN_HPP

// Dense kernel for the estimator network: an LSTM cell followed by two fully
// connected layers, exact gradients by backpropagation through time, and Adam.
//
// Activations are batched column-wise: a Batch with B columns carries B
// independent sequences through the same step.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoilab/rng.hpp"

namespace aoilab::nn {

template <class S>
using MatrixT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using VectorT = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using BatchT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using MaskT = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using DenseMatrix = MatrixT<double>;
using DenseVector = VectorT<double>;
using Batch = BatchT<double>;
using Mask = MaskT<double>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A named view of one parameter tensor's contiguous storage.
template <class S>
struct TensorT {
  std::string name;
  std::span<S> data;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};
using Tensor = TensorT<double>;

/// LSTM weights. The four gates are stacked in the order
/// input (i), forget (f), cell (g), output (o); rows [k*n_h, (k+1)*n_h) of
/// every stacked tensor belong to gate k.
template <class S>
struct LstmParamsT {
  int n_x = 0;
  int n_h = 0;
  MatrixT<S> w_ih;  // 4 n_h x n_x
  MatrixT<S> w_hh;  // 4 n_h x n_h
  VectorT<S> b_ih;  // 4 n_h
  VectorT<S> b_hh;  // 4 n_h

  static LstmParamsT zeros(int n_x, int n_h);
};

template <class S>
struct FcParamsT {
  MatrixT<S> w;  // n_out x n_in
  VectorT<S> b;  // n_out

  static FcParamsT zeros(int n_in, int n_out);
  int n_in() const { return static_cast<int>(w.cols()); }
  int n_out() const { return static_cast<int>(w.rows()); }
};

template <class S>
struct LstmStateT {
  BatchT<S> h;  // n_h x B
  BatchT<S> c;  // n_h x B

  static LstmStateT zeros(int n_h, Eigen::Index batch = 1);
};

template <class S>
struct LstmStepTapeT {
  BatchT<S> x, h_prev, c_prev;
  BatchT<S> gates;  // activated gates, stacked i, f, g, o
  BatchT<S> tanh_c;
  MaskT<S> mask;  // empty when every column is live
};

/// Per-step activations recorded by the forward pass, enough for exact BPTT.
template <class S>
struct TapeCacheT {
  std::vector<LstmStepTapeT<S>> steps;
  void clear() { steps.clear(); }
  std::size_t size() const { return steps.size(); }
};

using LstmParams = LstmParamsT<double>;
using FcParams = FcParamsT<double>;
using LstmState = LstmStateT<double>;
using LstmStepTape = LstmStepTapeT<double>;
using TapeCache = TapeCacheT<double>;

/// One LSTM step for a batch. Columns whose mask entry is 0 have their h and
/// c forced to zero, which lets ragged sequences share a batch. Appends the
/// step's activations to `tape` when it is non-null.
template <class S>
LstmStateT<S> lstm_forward(const LstmParamsT<S>& params, const BatchT<S>& x,
                           const LstmStateT<S>& state, TapeCacheT<S>* tape = nullptr,
                           const MaskT<S>* mask = nullptr);

/// W x + b, optionally followed by ReLU.
template <class S>
BatchT<S> fc_forward(const FcParamsT<S>& params, const BatchT<S>& x, bool relu);

/// Gradients of a single fully connected layer given dL/d(output).
/// Returns dL/d(input) and accumulates into `grads`.
template <class S>
BatchT<S> fc_backward(const FcParamsT<S>& params, const BatchT<S>& x,
                      const BatchT<S>& pre_activation, bool relu, const BatchT<S>& d_out,
                      FcParamsT<S>& grads);

// ---------------------------------------------------------------------------
// LSTM -> FC1 (ReLU) -> FC2 stack

struct StackShape {
  int n_x = 12;
  int n_h = 64;
  int n_fc = 64;
  int n_o = 4;

  friend bool operator==(const StackShape&, const StackShape&) = default;
};

template <class S>
struct StackParamsT {
  LstmParamsT<S> lstm;
  FcParamsT<S> fc1;
  FcParamsT<S> fc2;

  static StackParamsT zeros(const StackShape& shape);
  StackShape shape() const;
  /// Every trainable tensor, in serialisation order.
  std::vector<TensorT<S>> tensors();
  std::size_t parameter_count() const;
  void set_zero();
  /// Copy converted to scalar type T.
  template <class T>
  StackParamsT<T> cast() const {
    return {{lstm.n_x, lstm.n_h, lstm.w_ih.template cast<T>(), lstm.w_hh.template cast<T>(),
             lstm.b_ih.template cast<T>(), lstm.b_hh.template cast<T>()},
            {fc1.w.template cast<T>(), fc1.b.template cast<T>()},
            {fc2.w.template cast<T>(), fc2.b.template cast<T>()}};
  }
};

template <class S>
struct OutputTapeT {
  std::size_t step = 0;
  BatchT<S> h, fc1_pre, fc1_out;
};

template <class S>
struct StackTapeT {
  TapeCacheT<S> lstm;
  std::vector<OutputTapeT<S>> outputs;
  void clear() {
    lstm.clear();
    outputs.clear();
  }
};

using StackParams = StackParamsT<double>;
using OutputTape = OutputTapeT<double>;
using StackTape = StackTapeT<double>;

/// Runs the stack over a sequence from `initial` state. `emit[k]` selects the
/// steps whose estimate is computed; one output Batch is returned per emitted
/// step, in order. `masks` may be empty or hold one mask per step.
template <class S>
std::vector<BatchT<S>> stack_forward(const StackParamsT<S>& params,
                                     const std::vector<BatchT<S>>& xs,
                                     const std::vector<MaskT<S>>& masks,
                                     const std::vector<char>& emit, const LstmStateT<S>& initial,
                                     StackTapeT<S>* tape, LstmStateT<S>* final_state = nullptr);

/// Exact BPTT. `d_outputs` holds dL/d(output) aligned with the emitted steps of
/// the forward pass that filled `tape`. Gradients accumulate into `grads`.
template <class S>
void backward(const StackParamsT<S>& params, const StackTapeT<S>& tape,
              const std::vector<BatchT<S>>& d_outputs, StackParamsT<S>& grads);

extern template struct LstmParamsT<double>;
extern template struct LstmParamsT<float>;
extern template struct FcParamsT<double>;
extern template struct FcParamsT<float>;
extern template struct LstmStateT<double>;
extern template struct LstmStateT<float>;
extern template struct StackParamsT<double>;
extern template struct StackParamsT<float>;

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step_count = 0;

  explicit AdamState(const AdamConfig& config = {}) : cfg(config) {}
};

/// Classic L2 decay: g <- g + weight_decay * theta, then the bias-corrected
/// Adam update. `params` and `grads` must have identical tensor layouts.
void adam_step(std::span<const Tensor> params, std::span<const Tensor> grads, AdamState& opt);
void adam_step(StackParams& params, StackParams& grads, AdamState& opt);

// ---------------------------------------------------------------------------

/// 4 (n_x n_h + 2 n_h + n_h^2) + 4 n_h + 2 n_h^2 + n_h n_o
std::int64_t op_count(std::int64_t n_x, std::int64_t n_h, std::int64_t n_o);

/// Every weight and bias ~ U(-1/sqrt(n_h), 1/sqrt(n_h)).
StackParams init_params(const StackShape& shape, Rng& rng);

}  // namespace aoilab::nn

#endif  // AOILAB_NN_HPP
