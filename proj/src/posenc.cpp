#include "add/posenc.hpp"

#include "add/callcount.hpp"

namespace add {

void PosEncParams::validate() const {
  encoder.validate();
  post.validate();
  if (encoder.input_dim() != 1) throw DimensionError("depth encoder input must be scalar");
  if (encoder.output_dim() != c_d) throw DimensionError("depth encoder must emit c_d channels");
  if (table.rank() != 2 || table.extent(0) != c_d || table.extent(1) != c_dim) {
    throw DimensionError("embedding table must be c_d x c_dim");
  }
  if (post.input_dim() != c_dim) throw DimensionError("post MLP input must be c_dim");
}

namespace {
Tensor imputed_depth_column(const DepthMap& d) {
  if (d.h == 0 || d.w == 0) throw DimensionError("empty depth map");
  Tensor col({d.h * d.w, 1});
  for (std::size_t p = 0; p < d.d.size(); ++p) {
    const bool ok = d.valid.empty() || d.valid[p];
    col[p] = ok ? d.d[p] : d.d_min;
  }
  return col;
}
}  // namespace

Tensor encode_depth(const DepthMap& d, const PosEncParams& params,
                    std::size_t h_k, std::size_t w_k) {
  params.validate();
  if (h_k == 0 || w_k == 0) throw DimensionError("encode_depth: zero target extent");
  Tensor col = imputed_depth_column(d);
  Tensor f = mlp_apply(params.encoder, col);
  return bilinear_resize(f.reshaped({d.h, d.w, params.c_d}), h_k, w_k);
}

IndexMap position_index(const Tensor& f_d) { return channel_argmax(f_d); }

Tensor build_3d_pe(const DepthMap& d, const PosEncParams& params,
                   std::size_t h_k, std::size_t w_k) {
  callcount::posenc_builds++;
  const IndexMap idx = position_index(encode_depth(d, params, h_k, w_k));
  Tensor emb = embedding_lookup(params.table, idx);
  Tensor out = mlp_apply(params.post, emb.reshaped({h_k * w_k, params.c_dim}));
  return out.reshaped({h_k, w_k, out.extent(1)});
}

Tape::Id build_3d_pe_on_tape(Tape& t, const DepthMap& d, const PosEncParams& params,
                             const PosEncVars& vars, std::size_t h_k, std::size_t w_k) {
  callcount::posenc_builds++;
  const IndexMap idx = position_index(encode_depth(d, params, h_k, w_k));
  Tape::Id emb = t.embedding_lookup(vars.table, idx);
  emb = t.reshape(emb, {h_k * w_k, params.c_dim});
  return t.mlp(emb, vars.post_layers, vars.post_acts);
}

}  // namespace add
