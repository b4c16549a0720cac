#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "add/geometry.hpp"
#include "add/tape.hpp"
#include "add/tensor.hpp"

namespace add {

enum class Reduction { Raw, Normalized };

struct DistillConfig {
  double alpha_i = 1.0;  // feature foreground
  double beta_i = 0.1;   // feature background
  double alpha_v = 1.0;  // response foreground
  double beta_v = 0.5;   // response background
  double alpha = 1.0;    // feature loss mix
  double beta = 1.0;     // response loss mix; 0 when no encoder-decoder head
  int feature_levels = 3;
  int decoder_levels = 3;
  Reduction reduction = Reduction::Normalized;

  void validate() const;
};

struct LossReport {
  double l_feat = 0, l_ed = 0;
  double l_cls = 0, l_reg = 0, l_depth = 0;
  double total = 0;
};

/// Masked feature distillation summed over levels; features HxWxC, masks
/// broadcast across channels.
double feature_distill_loss(std::span<const Tensor> f3d, std::span<const Tensor> t,
                            std::span<const MaskMap> masks, const DistillConfig& cfg);

/// Masked response distillation summed over decoder levels; queries N_q x C_q.
double response_distill_loss(std::span<const Tensor> fa, std::span<const Tensor> t_v,
                             const std::vector<std::uint8_t>& m_f,
                             const DistillConfig& cfg);

LossReport total_loss(double l_cls, double l_reg, double l_depth, double l_feat,
                      double l_ed, const DistillConfig& cfg);

/// One level of the feature loss on the tape; f3d flattened P x C.
Tape::Id feature_term_on_tape(Tape& t, Tape::Id f3d, const Tensor& teacher_flat,
                              const MaskMap& mask, const DistillConfig& cfg);

Tape::Id response_term_on_tape(Tape& t, Tape::Id fa, const Tensor& t_v,
                               const std::vector<std::uint8_t>& m_f,
                               const DistillConfig& cfg);

}  // namespace add
