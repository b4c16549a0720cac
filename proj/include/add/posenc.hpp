#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "add/tape.hpp"
#include "add/tensor.hpp"

namespace add {

struct DepthMap {
  std::size_t h = 0, w = 0;
  std::vector<double> d;            // meters, row-major
  std::vector<std::uint8_t> valid;  // same layout; 0 = no measurement
  double d_min = 0, d_max = 0;

  double at(std::size_t i, std::size_t j) const { return d[i * w + j]; }
};

struct PosEncParams {
  MlpParams encoder;   // 1 -> c_d channels, applied per pixel
  Tensor table;        // c_d x c_dim embedding dictionary
  MlpParams post;      // c_dim -> feature channel count
  std::size_t c_d = 64;
  std::size_t c_dim = 256;

  void validate() const;
};

/// Encoded depth feature: per-pixel MLP on depth (invalid pixels imputed
/// with d_min), bilinear-resized to the level extents. Shape h_k x w_k x c_d.
Tensor encode_depth(const DepthMap& d, const PosEncParams& params,
                    std::size_t h_k, std::size_t w_k);

IndexMap position_index(const Tensor& f_d);

/// Full positional-encoding pipeline; output shaped h_k x w_k x C, ready
/// for pointwise addition to flattened features.
Tensor build_3d_pe(const DepthMap& d, const PosEncParams& params,
                   std::size_t h_k, std::size_t w_k);

/// Tape variables for the differentiable part of the encoding (the index
/// path through the argmax is treated as constant).
struct PosEncVars {
  Tape::Id table = -1;
  std::vector<std::pair<Tape::Id, Tape::Id>> post_layers;
  std::vector<Activation> post_acts;
};

/// Returns a flattened (h_k*w_k) x C node.
Tape::Id build_3d_pe_on_tape(Tape& t, const DepthMap& d, const PosEncParams& params,
                             const PosEncVars& vars, std::size_t h_k, std::size_t w_k);

}  // namespace add
