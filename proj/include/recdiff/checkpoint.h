#pragma once

#include <filesystem>
#include <string>

#include "recdiff/model.h"

namespace recdiff {

struct Checkpoint {
  Model model;
  std::string vocab_digest;
};

/// Single-file archive: magic, JSON header (config snapshot, seeds, tensor
/// index, vocabulary digest, prototype metadata) and a little-endian
/// float64 payload holding every parameter, the semantic matrix and the
/// prototypes.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& vocab_digest);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace recdiff
