#include "add/losses.hpp"

#include <cmath>

namespace add {

void DistillConfig::validate() const {
  for (double w : {alpha_i, beta_i, alpha_v, beta_v, alpha, beta}) {
    if (w < 0.0 || !std::isfinite(w)) throw DomainError("distill weight must be >= 0");
  }
  if (feature_levels < 1 || decoder_levels < 1) {
    throw DomainError("level counts must be >= 1");
  }
}

namespace {
// fg/bg squared sums with the mask broadcast across the last extent.
void masked_sums(const Tensor& a, const Tensor& b, const std::uint8_t* mask,
                 std::size_t positions, std::size_t channels, double& fg, double& bg) {
  fg = 0.0;
  bg = 0.0;
  for (std::size_t p = 0; p < positions; ++p) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const double d = a[p * channels + c] - b[p * channels + c];
      acc += d * d;
    }
    if (mask[p]) {
      fg += acc;
    } else {
      bg += acc;
    }
  }
}
}  // namespace

double feature_distill_loss(std::span<const Tensor> f3d, std::span<const Tensor> t,
                            std::span<const MaskMap> masks, const DistillConfig& cfg) {
  cfg.validate();
  if (f3d.size() != t.size() || f3d.size() != masks.size()) {
    throw DimensionError("feature_distill_loss: level count mismatch");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < f3d.size(); ++k) {
    const Tensor& a = f3d[k];
    const Tensor& b = t[k];
    if (!a.same_shape(b) || a.rank() != 3) {
      throw DimensionError("feature_distill_loss: shape mismatch at level");
    }
    const MaskMap& m = masks[k];
    if (m.h != a.extent(0) || m.w != a.extent(1)) {
      throw DimensionError("feature_distill_loss: mask extents mismatch");
    }
    double fg, bg;
    masked_sums(a, b, m.m.data(), m.h * m.w, a.extent(2), fg, bg);
    const double norm =
        cfg.reduction == Reduction::Normalized ? static_cast<double>(a.size()) : 1.0;
    total += (cfg.alpha_i * fg + cfg.beta_i * bg) / norm;
  }
  return total;
}

double response_distill_loss(std::span<const Tensor> fa, std::span<const Tensor> t_v,
                             const std::vector<std::uint8_t>& m_f,
                             const DistillConfig& cfg) {
  cfg.validate();
  if (fa.size() != t_v.size()) {
    throw DimensionError("response_distill_loss: level count mismatch");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < fa.size(); ++k) {
    const Tensor& a = fa[k];
    const Tensor& b = t_v[k];
    if (!a.same_shape(b) || a.rank() != 2) {
      throw DimensionError("response_distill_loss: shape mismatch at level");
    }
    if (m_f.size() != a.extent(0)) {
      throw DimensionError("response_distill_loss: mask length mismatch");
    }
    double fg, bg;
    masked_sums(a, b, m_f.data(), a.extent(0), a.extent(1), fg, bg);
    const double norm =
        cfg.reduction == Reduction::Normalized ? static_cast<double>(a.size()) : 1.0;
    total += (cfg.alpha_v * fg + cfg.beta_v * bg) / norm;
  }
  return total;
}

LossReport total_loss(double l_cls, double l_reg, double l_depth, double l_feat,
                      double l_ed, const DistillConfig& cfg) {
  cfg.validate();
  for (double v : {l_cls, l_reg, l_depth, l_feat, l_ed}) {
    if (v < 0.0 || !std::isfinite(v)) throw DomainError("loss terms must be finite and >= 0");
  }
  LossReport r;
  r.l_cls = l_cls;
  r.l_reg = l_reg;
  r.l_depth = l_depth;
  r.l_feat = l_feat;
  r.l_ed = l_ed;
  r.total = l_cls + l_reg + l_depth + cfg.alpha * l_feat + cfg.beta * l_ed;
  return r;
}

namespace {
Tape::Id masked_term(Tape& t, Tape::Id student, const Tensor& teacher,
                     const std::uint8_t* mask, std::size_t positions,
                     std::size_t channels, double w_fg, double w_bg, double norm) {
  Tensor fg_mask({positions, channels});
  Tensor bg_mask({positions, channels});
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      fg_mask[p * channels + c] = mask[p] ? 1.0 : 0.0;
      bg_mask[p * channels + c] = mask[p] ? 0.0 : 1.0;
    }
  }
  Tape::Id diff = t.sub(student, t.constant(teacher));
  Tape::Id fg = t.sum_squares(t.mul(diff, t.constant(std::move(fg_mask))));
  Tape::Id bg = t.sum_squares(t.mul(diff, t.constant(std::move(bg_mask))));
  return t.add(t.scale(fg, w_fg / norm), t.scale(bg, w_bg / norm));
}
}  // namespace

Tape::Id feature_term_on_tape(Tape& t, Tape::Id f3d, const Tensor& teacher_flat,
                              const MaskMap& mask, const DistillConfig& cfg) {
  const Tensor& v = t.value(f3d);
  if (!v.same_shape(teacher_flat) || v.rank() != 2) {
    throw DimensionError("feature_term_on_tape: shape mismatch");
  }
  if (mask.h * mask.w != v.extent(0)) {
    throw DimensionError("feature_term_on_tape: mask extents mismatch");
  }
  const double norm =
      cfg.reduction == Reduction::Normalized ? static_cast<double>(v.size()) : 1.0;
  return masked_term(t, f3d, teacher_flat, mask.m.data(), v.extent(0), v.extent(1),
                     cfg.alpha_i, cfg.beta_i, norm);
}

Tape::Id response_term_on_tape(Tape& t, Tape::Id fa, const Tensor& t_v,
                               const std::vector<std::uint8_t>& m_f,
                               const DistillConfig& cfg) {
  const Tensor& v = t.value(fa);
  if (!v.same_shape(t_v) || v.rank() != 2) {
    throw DimensionError("response_term_on_tape: shape mismatch");
  }
  if (m_f.size() != v.extent(0)) {
    throw DimensionError("response_term_on_tape: mask length mismatch");
  }
  const double norm =
      cfg.reduction == Reduction::Normalized ? static_cast<double>(v.size()) : 1.0;
  return masked_term(t, fa, t_v, m_f.data(), v.extent(0), v.extent(1), cfg.alpha_v,
                     cfg.beta_v, norm);
}

}  // namespace add
