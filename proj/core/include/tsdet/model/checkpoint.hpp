#pragma once

#include <filesystem>

#include "tsdet/model/detector.hpp"

namespace tsdet {

// Binary checkpoint: a JSON header (variant, vocabulary, full model config,
// parameter index) followed by the raw little-endian parameter doubles.
// Enough to rebuild the model without the original config file; a save/load
// round trip preserves every parameter bit.
void save_checkpoint(const DetectionModel& model, const std::filesystem::path& path);
DetectionModel load_checkpoint(const std::filesystem::path& path);

}  // namespace tsdet
