// Central finite-difference verification of the hand-written backward pass.

#ifndef BMAGUARD_MODEL_GRADCHECK_HPP_
#define BMAGUARD_MODEL_GRADCHECK_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bmaguard/model/train.hpp"

namespace bmaguard {

struct GradCheckOptions {
  std::size_t samples = 200;
  double step = 1e-3;
  std::uint64_t seed = 0;
  /// When non-empty, only tensors whose name starts with one of these are
  /// sampled (the others are treated as frozen).
  std::vector<std::string> prefixes;
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-7;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t checked = 0;
  /// Coordinates dropped because a ReLU kept flipping within the stencil.
  std::size_t skipped = 0;
  std::string worst_parameter;
  /// Along one random unit direction over all sampled tensors. No kink
  /// screening here, so expect a looser match.
  double directional_rel_error = 0;
};

/// Eval mode (dropout off), double precision, fourth-order central
/// differences. Embedding rows are sampled
/// from the tokens present in the batch.
GradCheckReport gradient_check(const DualBranchClassifier<double>& model, std::span<const TrainSample> batch,
                               std::span<const double> class_weights, const GradCheckOptions& options = {});

} // namespace bmaguard

#endif
