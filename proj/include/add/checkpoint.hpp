#pragma once

#include <stdexcept>
#include <string>

#include "add/config.hpp"
#include "add/harness.hpp"

namespace add {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat binary checkpoint: magic, version, role byte, embedded config
/// text, then a shape table of named row-major 64-bit tensors.
void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const StudentParams& student, ModelRole role);

struct LoadedCheckpoint {
  RunConfig cfg;
  StudentParams student;
  ModelRole role = ModelRole::Student;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace add
