#include "add/adapters.hpp"

#include <cmath>

#include "add/callcount.hpp"

namespace add {

void SelfAttnParams::validate() const {
  if (w_q.rank() != 2 || w_q.extent(0) != w_q.extent(1)) {
    throw DimensionError("self-attention projections must be square");
  }
  const std::size_t c = w_q.extent(0);
  for (const Tensor* w : {&w_k, &w_v}) {
    if (w->rank() != 2 || w->extent(0) != c || w->extent(1) != c) {
      throw DimensionError("self-attention projection shape mismatch");
    }
  }
  for (const Tensor* b : {&b_q, &b_k, &b_v}) {
    if (b->rank() != 1 || b->extent(0) != c) {
      throw DimensionError("self-attention bias shape mismatch");
    }
  }
  if (heads == 0 || c % heads != 0) {
    throw DimensionError("channel count not divisible by head count");
  }
}

void CrossAttnParams::validate() const {
  q_mlp.validate();
  k_mlp.validate();
  v_mlp.validate();
  if (q_mlp.output_dim() != k_mlp.output_dim()) {
    throw DimensionError("cross-attention q/k output dims disagree");
  }
  if (heads == 0 || q_mlp.output_dim() % heads != 0 ||
      v_mlp.output_dim() % heads != 0) {
    throw DimensionError("cross-attention dims not divisible by head count");
  }
}

Tape::Id multihead_attention_on_tape(Tape& t, Tape::Id q, Tape::Id k, Tape::Id v,
                                     std::size_t heads) {
  const std::size_t cq = t.value(q).extent(1);
  const std::size_t cv = t.value(v).extent(1);
  if (t.value(k).extent(1) != cq) throw DimensionError("attention q/k width mismatch");
  if (heads == 0 || cq % heads != 0 || cv % heads != 0) {
    throw DimensionError("attention width not divisible by head count");
  }
  const std::size_t dq = cq / heads, dv = cv / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dq));
  std::vector<Tape::Id> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Tape::Id qh = t.slice_cols(q, h * dq, (h + 1) * dq);
    Tape::Id kh = t.slice_cols(k, h * dq, (h + 1) * dq);
    Tape::Id vh = t.slice_cols(v, h * dv, (h + 1) * dv);
    Tape::Id logits = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);
    outs.push_back(t.matmul(t.softmax_rows(logits), vh));
  }
  return t.concat_cols(outs);
}

Tape::Id self_attention_adapt_on_tape(Tape& t, Tape::Id f, Tape::Id pe,
                                      const SelfAttnVars& vars, std::size_t heads) {
  callcount::self_attn_calls++;
  if (!t.value(f).same_shape(t.value(pe))) {
    throw DimensionError("positional encoding shape does not match features");
  }
  Tape::Id fp = t.add(f, pe);
  Tape::Id q = t.add_bias(t.matmul(fp, vars.w_q), vars.b_q);
  Tape::Id k = t.add_bias(t.matmul(fp, vars.w_k), vars.b_k);
  Tape::Id v = t.add_bias(t.matmul(f, vars.w_v), vars.b_v);
  return multihead_attention_on_tape(t, q, k, v, heads);
}

Tape::Id cross_attention_adapt_on_tape(Tape& t, Tape::Id f_v, Tape::Id t_v,
                                       const CrossAttnVars& vars, std::size_t heads) {
  callcount::cross_attn_calls++;
  Tape::Id q = t.mlp(f_v, vars.q_layers, vars.q_acts);
  Tape::Id k = t.mlp(t_v, vars.k_layers, vars.k_acts);
  Tape::Id v = t.mlp(t_v, vars.v_layers, vars.v_acts);
  return multihead_attention_on_tape(t, q, k, v, heads);
}

namespace {
SelfAttnVars self_vars_const(Tape& t, const SelfAttnParams& p) {
  return SelfAttnVars{t.constant(p.w_q), t.constant(p.w_k), t.constant(p.w_v),
                      t.constant(p.b_q), t.constant(p.b_k), t.constant(p.b_v)};
}

void mlp_const(Tape& t, const MlpParams& m,
               std::vector<std::pair<Tape::Id, Tape::Id>>& layers,
               std::vector<Activation>& acts) {
  for (const MlpLayer& lay : m.layers) {
    layers.emplace_back(t.constant(lay.weight), t.constant(lay.bias));
    acts.push_back(lay.act);
  }
}
}  // namespace

Tensor self_attention_adapt(const Tensor& f_k, const Tensor& pe,
                            const SelfAttnParams& params) {
  params.validate();
  if (f_k.rank() != 3) throw DimensionError("self_attention_adapt needs HxWxC features");
  if (!f_k.same_shape(pe)) throw DimensionError("pe shape does not match features");
  const std::size_t h = f_k.extent(0), w = f_k.extent(1), c = f_k.extent(2);
  Tape t;
  Tape::Id f = t.constant(f_k.reshaped({h * w, c}));
  Tape::Id p = t.constant(pe.reshaped({h * w, c}));
  Tape::Id out = self_attention_adapt_on_tape(t, f, p, self_vars_const(t, params),
                                              params.heads);
  return t.value(out).reshaped({h, w, c});
}

QuerySet cross_attention_adapt(const QuerySet& f_v, const QuerySet& t_v,
                               const CrossAttnParams& params) {
  params.validate();
  if (f_v.level != t_v.level) {
    throw DomainError("cross_attention_adapt: query level mismatch");
  }
  if (f_v.q.extent(0) != t_v.q.extent(0)) {
    throw DomainError("cross_attention_adapt: query count mismatch");
  }
  Tape t;
  CrossAttnVars vars;
  mlp_const(t, params.q_mlp, vars.q_layers, vars.q_acts);
  mlp_const(t, params.k_mlp, vars.k_layers, vars.k_acts);
  mlp_const(t, params.v_mlp, vars.v_layers, vars.v_acts);
  Tape::Id out = cross_attention_adapt_on_tape(t, t.constant(f_v.q), t.constant(t_v.q),
                                               vars, params.heads);
  return QuerySet{f_v.level, t.value(out)};
}

}  // namespace add
