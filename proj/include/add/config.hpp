#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "add/harness.hpp"
#include "add/losses.hpp"

namespace add {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full experiment configuration: flat key=value document with dotted
/// section keys, '#' comments, and ADD_-prefixed environment overrides.
struct RunConfig {
  DistillConfig distill;
  HarnessConfig harness;
  std::string out_dir = "out";

  void validate() const;
  bool operator==(const RunConfig& o) const;
};

/// Parses one document; unknown keys and malformed values raise
/// ConfigError naming the offending key.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::string& path);

/// Applies ADD_SECTION_KEY environment variables on top of cfg.
void apply_env_overrides(RunConfig& cfg);

std::string serialize_config(const RunConfig& cfg);

}  // namespace add
