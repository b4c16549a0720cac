#pragma once

#include <utility>
#include <vector>

#include "add/tape.hpp"
#include "add/tensor.hpp"

namespace add {

struct SelfAttnParams {
  Tensor w_q, w_k, w_v;  // C x C
  Tensor b_q, b_k, b_v;  // length C
  std::size_t heads = 4;

  void validate() const;
};

struct CrossAttnParams {
  MlpParams q_mlp;  // student queries -> q
  MlpParams k_mlp;  // teacher queries -> k
  MlpParams v_mlp;  // teacher queries -> v
  std::size_t heads = 4;

  void validate() const;
};

struct QuerySet {
  int level = 0;
  Tensor q;  // N_q x C_q
};

/// 3D-aware self-attention: PE enters queries and keys only, values stay
/// plain semantic features. Output has the same HxWxC shape.
Tensor self_attention_adapt(const Tensor& f_k, const Tensor& pe,
                            const SelfAttnParams& params);

/// Target-aware cross-attention over object queries: student side provides
/// the query, teacher side the keys and values.
QuerySet cross_attention_adapt(const QuerySet& f_v, const QuerySet& t_v,
                               const CrossAttnParams& params);

struct SelfAttnVars {
  Tape::Id w_q, w_k, w_v, b_q, b_k, b_v;
};

struct CrossAttnVars {
  std::vector<std::pair<Tape::Id, Tape::Id>> q_layers, k_layers, v_layers;
  std::vector<Activation> q_acts, k_acts, v_acts;
};

/// f and pe as flattened P x C nodes; returns P x C.
Tape::Id self_attention_adapt_on_tape(Tape& t, Tape::Id f, Tape::Id pe,
                                      const SelfAttnVars& vars, std::size_t heads);

Tape::Id cross_attention_adapt_on_tape(Tape& t, Tape::Id f_v, Tape::Id t_v,
                                       const CrossAttnVars& vars, std::size_t heads);

/// Scaled dot-product attention shared by both adapters.
Tape::Id multihead_attention_on_tape(Tape& t, Tape::Id q, Tape::Id k, Tape::Id v,
                                     std::size_t heads);

}  // namespace add
