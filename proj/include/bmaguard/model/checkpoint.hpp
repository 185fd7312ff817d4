// Binary model checkpoints.
//
// Layout: "BMAGCKPT", u32 version, u32 scalar width (4 or 8), u32 config
// length + JSON config, u32 tensor count, then per tensor: u32 name length,
// name, u32 rows, u32 cols, row-major little-endian IEEE-754 values.

#ifndef BMAGUARD_MODEL_CHECKPOINT_HPP_
#define BMAGUARD_MODEL_CHECKPOINT_HPP_

#include <filesystem>

#include "bmaguard/model/classifier.hpp"

namespace bmaguard {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const DualBranchClassifier<S>& model);

/// Loads a checkpoint of either scalar width, converting to S.
template <typename S>
DualBranchClassifier<S> load_checkpoint(const std::filesystem::path& path);

} // namespace bmaguard

#endif
