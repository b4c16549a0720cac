#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "add/callcount.hpp"
#include "add/posenc.hpp"
#include "add/rng.hpp"

using namespace add;

namespace {

PosEncParams small_params(Rng& rng, std::size_t c_d, std::size_t c_dim, std::size_t c) {
  PosEncParams p;
  p.c_d = c_d;
  p.c_dim = c_dim;
  MlpLayer enc;
  enc.weight = Tensor({1, c_d});
  enc.bias = Tensor({c_d});
  for (double& v : enc.weight.data()) v = rng.uniform(-1.0, 1.0);
  for (double& v : enc.bias.data()) v = rng.uniform(-1.0, 1.0);
  p.encoder.layers = {enc};
  p.table = Tensor({c_d, c_dim});
  for (double& v : p.table.data()) v = rng.uniform(-1.0, 1.0);
  MlpLayer post;
  post.weight = Tensor({c_dim, c});
  post.bias = Tensor({c});
  for (double& v : post.weight.data()) v = rng.uniform(-1.0, 1.0);
  p.post.layers = {post};
  return p;
}

DepthMap random_depth(Rng& rng, std::size_t h, std::size_t w) {
  DepthMap d;
  d.h = h;
  d.w = w;
  d.d_min = 2.0;
  d.d_max = 40.0;
  d.d.resize(h * w);
  d.valid.assign(h * w, 1);
  for (double& v : d.d) v = rng.uniform(d.d_min, d.d_max);
  return d;
}

}  // namespace

TEST_CASE("encode_depth basics") {
  Rng rng(5);
  PosEncParams p = small_params(rng, 3, 4, 2);

  DepthMap constant;
  constant.h = constant.w = 3;
  constant.d_min = 1;
  constant.d_max = 10;
  constant.d.assign(9, 6.5);
  constant.valid.assign(9, 1);
  Tensor f = encode_depth(constant, p, 2, 2);
  for (std::size_t pix = 1; pix < 4; ++pix) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      CHECK(f[pix * 3 + ch] == doctest::Approx(f[ch]).epsilon(1e-12));
    }
  }

  // Identity single-channel encoder reproduces the resized depth.
  PosEncParams ident = p;
  ident.c_d = 1;
  ident.encoder.layers = {{Tensor({1, 1}, {1.0}), Tensor({1}), Activation::Identity}};
  ident.table = Tensor({1, 4});
  DepthMap d = random_depth(rng, 3, 3);
  Tensor fd = encode_depth(d, ident, 3, 3);
  for (std::size_t pix = 0; pix < 9; ++pix) CHECK(fd[pix] == doctest::Approx(d.d[pix]));

  // Two-layer encoder equals composing the already-tested kernels.
  PosEncParams two = p;
  MlpLayer l1{Tensor({1, 2}, {1.0, -0.5}), Tensor({2}, {0.1, 0.2}), Activation::Relu};
  MlpLayer l2{Tensor({2, 3}, {1, 0, 2, 0, 1, -1}), Tensor({3}), Activation::Identity};
  two.encoder.layers = {l1, l2};
  DepthMap d2 = random_depth(rng, 2, 2);
  Tensor got = encode_depth(d2, two, 4, 4);
  Tensor col({4, 1}, {d2.d[0], d2.d[1], d2.d[2], d2.d[3]});
  Tensor oracle =
      bilinear_resize(mlp_apply(two.encoder, col).reshaped({2, 2, 3}), 4, 4);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
  }
}

TEST_CASE("invalid depth pixels impute d_min") {
  Rng rng(6);
  PosEncParams p = small_params(rng, 3, 4, 2);
  DepthMap d = random_depth(rng, 2, 2);
  d.valid = {1, 0, 1, 1};
  DepthMap filled = d;
  filled.valid.assign(4, 1);
  filled.d[1] = d.d_min;
  Tensor a = encode_depth(d, p, 2, 2);
  Tensor b = encode_depth(filled, p, 2, 2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("full encoding pipeline shape and structure") {
  Rng rng(7);
  PosEncParams p = small_params(rng, 4, 5, 3);
  DepthMap d = random_depth(rng, 4, 4);
  Tensor pe = build_3d_pe(d, p, 4, 4);
  REQUIRE(pe.rank() == 3);
  CHECK(pe.extent(0) == 4);
  CHECK(pe.extent(1) == 4);
  CHECK(pe.extent(2) == 3);

  // Constant depth: one shared encoding row.
  DepthMap constant = d;
  constant.d.assign(16, 9.0);
  Tensor cpe = build_3d_pe(constant, p, 4, 4);
  for (std::size_t pix = 1; pix < 16; ++pix) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      CHECK(cpe[pix * 3 + ch] == cpe[ch]);
    }
  }

  // Near/far regions forced into distinct bins give exactly two rows.
  PosEncParams bins = p;
  bins.c_d = 2;
  // channel 0 wins below depth 10, channel 1 above
  bins.encoder.layers = {
      {Tensor({1, 2}, {-1.0, 1.0}), Tensor({2}, {10.0, -10.0}), Activation::Identity}};
  bins.table = Tensor({2, 5});
  for (double& v : bins.table.data()) v = rng.uniform(-1.0, 1.0);
  DepthMap split = d;
  for (std::size_t i = 0; i < 16; ++i) split.d[i] = i < 8 ? 5.0 : 30.0;
  Tensor spe = build_3d_pe(split, bins, 4, 4);
  for (std::size_t pix = 0; pix < 16; ++pix) {
    const std::size_t ref = pix < 8 ? 0 : 8;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      CHECK(spe[pix * 3 + ch] == spe[ref * 3 + ch]);
    }
  }
  bool distinct = false;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    if (spe[ch] != spe[8 * 3 + ch]) distinct = true;
  }
  CHECK(distinct);
}

TEST_CASE("equal depth implies equal encoding; spatial equivariance") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    PosEncParams p = small_params(rng, 5, 6, 3);
    DepthMap d = random_depth(rng, 3, 4);
    // Force duplicate depths at random pairs.
    d.d[5] = d.d[1];
    d.d[11] = d.d[2];
    Tensor pe = build_3d_pe(d, p, 3, 4);
    auto row_eq = [&](std::size_t a, std::size_t b) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        if (pe[a * 3 + ch] != pe[b * 3 + ch]) return false;
      }
      return true;
    };
    CHECK(row_eq(5, 1));
    CHECK(row_eq(11, 2));

    // Permute pixels: encoding rows permute identically.
    std::vector<std::size_t> perm(12);
    for (std::size_t i = 0; i < 12; ++i) perm[i] = i;
    for (std::size_t i = 11; i > 0; --i) {
      std::swap(perm[i], perm[rng.next_u64() % (i + 1)]);
    }
    DepthMap pd = d;
    for (std::size_t i = 0; i < 12; ++i) pd.d[i] = d.d[perm[i]];
    Tensor ppe = build_3d_pe(pd, p, 3, 4);
    for (std::size_t i = 0; i < 12; ++i) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        CHECK(ppe[i * 3 + ch] == pe[perm[i] * 3 + ch]);
      }
    }
  }
}

TEST_CASE("gradients reach the table and post layers but not the depth encoder") {
  Rng rng(9);
  PosEncParams p = small_params(rng, 4, 5, 2);
  DepthMap d = random_depth(rng, 3, 3);

  const double err = vjp_check(
      [&](Tape& t, const std::vector<Tape::Id>& in) {
        PosEncVars vars;
        vars.table = in[0];
        vars.post_layers = {{in[1], in[2]}};
        vars.post_acts = {Activation::Identity};
        return t.sum_squares(build_3d_pe_on_tape(t, d, p, vars, 3, 3));
      },
      {p.table, p.post.layers[0].weight, p.post.layers[0].bias},
      Tensor({1}, {1.0}), 1e-5);
  CHECK(err <= 1e-4);

  // Table rows that are actually selected receive nonzero gradient.
  Tape t;
  Tape::Id table_id = t.input(p.table);
  PosEncVars vars;
  vars.table = table_id;
  vars.post_layers = {{t.constant(p.post.layers[0].weight),
                       t.constant(p.post.layers[0].bias)}};
  vars.post_acts = {Activation::Identity};
  Tape::Id loss = t.sum_squares(build_3d_pe_on_tape(t, d, p, vars, 3, 3));
  t.backward(loss);
  double norm = 0.0;
  for (double v : t.grad(table_id).data()) norm += v * v;
  CHECK(norm > 0.0);
}

TEST_CASE("encoding builds are counted") {
  Rng rng(10);
  PosEncParams p = small_params(rng, 3, 4, 2);
  DepthMap d = random_depth(rng, 2, 2);
  callcount::reset();
  build_3d_pe(d, p, 2, 2);
  CHECK(callcount::posenc_builds.load() == 1);
  callcount::reset();
  CHECK(callcount::posenc_builds.load() == 0);
}
