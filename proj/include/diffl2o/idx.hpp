#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>

#include "diffl2o/optimizee.hpp"

namespace diffl2o {

// IDX files, as distributed with MNIST:
//
//   images  0x00000803  count  rows  cols  then count*rows*cols unsigned bytes
//   labels  0x00000801  count  then count unsigned bytes
//
// All header integers are 32-bit big-endian. Pixels are scaled by 1/255.
// Throws FormatError on a bad magic number, a count mismatch between the two
// files, or a truncated body.
ClassificationDataset load_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path,
                               std::optional<std::size_t> limit = std::nullopt);

}  // namespace diffl2o
