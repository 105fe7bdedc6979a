#ifndef AOILAB_OBJECTIVE_HPP
#define AOILAB_OBJECTIVE_HPP

#include <string>
#include <vector>

#include "aoilab/nn.hpp"
#include "aoilab/rng.hpp"

namespace aoilab::nn {

/// A supervised sequence problem for the stack: loss is the mean over emitted
/// (step, column) pairs of || target - scale .* output ||^2.
template <class S>
struct SequenceProblemT {
  std::vector<BatchT<S>> xs;
  std::vector<MaskT<S>> masks;
  std::vector<char> emit;
  std::vector<BatchT<S>> targets;  // one per emitted step
  VectorT<S> output_scale;         // empty means unit scale
};
using SequenceProblem = SequenceProblemT<double>;

/// Loss of `problem` under `params`; fills `grads` (zeroed first) with the
/// analytic gradient when non-null.
template <class S>
double sequence_loss(const StackParamsT<S>& params, const SequenceProblemT<S>& problem,
                     StackParamsT<S>* grads = nullptr);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Compares the analytic gradient against central differences for every
/// parameter entry. relative error = |a - n| / max(|a|, |n|, floor) with
/// floor = 1e-6 * max(1, |loss|). Entries whose +/- step moves an FC1
/// pre-activation across the ReLU kink are skipped and counted.
GradCheckResult check_gradients(const StackParams& params, const SequenceProblem& problem,
                                double step = 1e-5);

struct GradCheckCase {
  StackParams params;
  SequenceProblem problem;
};

/// Random instance `index` of the LAA stack (n_h = n_fc = 64): even indices
/// use the linear sizes (12 -> 4), odd ones the cartpole sizes (9 -> 3).
/// Sequence length, batch, front padding, emitted steps and output scale are
/// drawn at random as well.
GradCheckCase random_gradcheck_case(std::uint64_t seed, std::size_t index);

}  // namespace aoilab::nn

#endif  // AOILAB_OBJECTIVE_HPP
