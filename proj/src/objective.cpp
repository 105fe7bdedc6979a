#include "aoilab/objective.hpp"

#include <algorithm>
#include <cmath>

namespace aoilab::nn {

namespace {

struct Evaluation {
  double loss = 0.0;
  std::vector<bool> relu_active;
};

template <class S>
Evaluation evaluate(const StackParamsT<S>& params, const SequenceProblemT<S>& problem,
                    StackParamsT<S>* grads) {
  const Eigen::Index batch = problem.xs.front().cols();
  StackTapeT<S> tape;
  const auto outputs = stack_forward(params, problem.xs, problem.masks, problem.emit,
                                     LstmStateT<S>::zeros(params.lstm.n_h, batch), &tape);
  if (outputs.size() != problem.targets.size()) {
    throw DimensionError("sequence_loss: one target per emitted step");
  }

  const Eigen::Index n_o = params.fc2.w.rows();
  const VectorT<S> scale =
      problem.output_scale.size() > 0 ? problem.output_scale : VectorT<S>::Ones(n_o);

  // Pairs that carry a loss: live columns of emitted steps.
  std::vector<MaskT<S>> live;
  double pairs = 0.0;
  for (const OutputTapeT<S>& ot : tape.outputs) {
    MaskT<S> m = problem.masks.empty() ? MaskT<S>::Ones(batch) : problem.masks[ot.step];
    pairs += m.sum();
    live.push_back(std::move(m));
  }
  if (pairs <= 0.0) throw DimensionError("sequence_loss: no live outputs");

  Evaluation ev;
  std::vector<BatchT<S>> d_outputs;
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    BatchT<S> resid = problem.targets[j] - scale.asDiagonal() * outputs[j];
    resid.array().rowwise() *= live[j].array();
    ev.loss += resid.template cast<double>().squaredNorm();
    d_outputs.push_back(scale.asDiagonal() * resid * static_cast<S>(-2.0 / pairs));
    for (Eigen::Index i = 0; i < tape.outputs[j].fc1_pre.size(); ++i) {
      ev.relu_active.push_back(tape.outputs[j].fc1_pre.data()[i] > S(0));
    }
  }
  ev.loss /= pairs;

  if (grads != nullptr) {
    *grads = StackParamsT<S>::zeros(params.shape());
    backward(params, tape, d_outputs, *grads);
  }
  return ev;
}

}  // namespace

template <class S>
double sequence_loss(const StackParamsT<S>& params, const SequenceProblemT<S>& problem,
                     StackParamsT<S>* grads) {
  if (problem.xs.empty()) throw DimensionError("sequence_loss: empty sequence");
  return evaluate(params, problem, grads).loss;
}

template double sequence_loss(const StackParamsT<double>&, const SequenceProblemT<double>&,
                              StackParamsT<double>*);
template double sequence_loss(const StackParamsT<float>&, const SequenceProblemT<float>&,
                              StackParamsT<float>*);

GradCheckResult check_gradients(const StackParams& params, const SequenceProblem& problem,
                                double step) {
  StackParams analytic;
  const Evaluation base = evaluate(params, problem, &analytic);
  const double floor = 1e-6 * std::max(1.0, std::abs(base.loss));

  GradCheckResult result;
  StackParams probe = params;
  auto probe_tensors = probe.tensors();
  auto grad_tensors = analytic.tensors();
  for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
    std::span<double> theta = probe_tensors[k].data;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double saved = theta[j];
      theta[j] = saved + step;
      const Evaluation plus = evaluate<double>(probe, problem, nullptr);
      theta[j] = saved - step;
      const Evaluation minus = evaluate<double>(probe, problem, nullptr);
      theta[j] = saved;

      if (plus.relu_active != base.relu_active || minus.relu_active != base.relu_active) {
        ++result.skipped_kinks;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * step);
      const double a = grad_tensors[k].data[j];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = probe_tensors[k].name;
        result.worst_index = j;
      }
    }
  }
  return result;
}

GradCheckCase random_gradcheck_case(std::uint64_t seed, std::size_t index) {
  Rng rng = make_stream(seed, "nn.gradcheck", index);
  const bool linear = index % 2 == 0;
  const StackShape shape{linear ? 12 : 9, 64, 64, linear ? 4 : 3};
  std::uniform_int_distribution<int> steps_d(2, 4), batch_d(1, 2);
  std::uniform_real_distribution<double> scale_d(0.5, 2.0);
  std::normal_distribution<double> normal;

  GradCheckCase c{init_params(shape, rng), {}};
  const int steps = steps_d(rng);
  const int batch = batch_d(rng);
  SequenceProblem& pr = c.problem;
  for (int k = 0; k < steps; ++k) {
    Batch x(shape.n_x, batch);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    pr.xs.push_back(std::move(x));
  }
  // Each column starts live at a random step, like a short replay window.
  pr.masks.assign(steps, Mask::Zero(batch));
  std::uniform_int_distribution<int> start_d(0, steps - 1);
  for (int j = 0; j < batch; ++j) {
    for (int k = start_d(rng); k < steps; ++k) pr.masks[k](j) = 1.0;
  }
  std::bernoulli_distribution emit_d(0.5);
  pr.emit.assign(steps, 0);
  for (int k = 0; k + 1 < steps; ++k) pr.emit[k] = emit_d(rng) ? 1 : 0;
  pr.emit.back() = 1;
  for (int k = 0; k < steps; ++k) {
    if (!pr.emit[k]) continue;
    Batch y(shape.n_o, batch);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);
    pr.targets.push_back(std::move(y));
  }
  pr.output_scale = DenseVector(shape.n_o);
  for (Eigen::Index i = 0; i < shape.n_o; ++i) pr.output_scale(i) = scale_d(rng);
  return c;
}

}  // namespace aoilab::nn
