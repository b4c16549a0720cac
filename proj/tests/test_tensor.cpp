#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "add/rng.hpp"
#include "add/tensor.hpp"

using namespace add;

namespace {

// Scalar brute-force bilinear sampler used as an independent oracle.
double sample_bilinear(const Tensor& x, double i, double j, std::size_t ch) {
  const std::size_t h = x.extent(0), w = x.extent(1);
  i = std::clamp(i, 0.0, static_cast<double>(h - 1));
  j = std::clamp(j, 0.0, static_cast<double>(w - 1));
  const std::size_t r0 = static_cast<std::size_t>(std::floor(i));
  const std::size_t c0 = static_cast<std::size_t>(std::floor(j));
  const std::size_t r1 = std::min(r0 + 1, h - 1);
  const std::size_t c1 = std::min(c0 + 1, w - 1);
  const double fr = i - static_cast<double>(r0);
  const double fc = j - static_cast<double>(c0);
  const double top = x.at(r0, c0, ch) * (1 - fc) + x.at(r0, c1, ch) * fc;
  const double bot = x.at(r1, c0, ch) * (1 - fc) + x.at(r1, c1, ch) * fc;
  return top * (1 - fr) + bot * fr;
}

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
  Rng rng(7);
  Tensor b = random_tensor(rng, {3, 4});
  Tensor ib = matmul(Tensor::identity(3), b);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(ib[i] == b[i]);

  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor v({2, 1}, {0, 1});
  Tensor p = matmul(a, v);
  CHECK(p.at(0, 0) == 2.0);
  CHECK(p.at(1, 0) == 4.0);

  Tensor z({2, 3});
  Tensor zp = matmul(z, random_tensor(rng, {3, 5}));
  for (std::size_t i = 0; i < zp.size(); ++i) CHECK(zp[i] == 0.0);

  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({4, 2})), DimensionError);
}

TEST_CASE("softmax_rows values and stability") {
  Tensor eq({1, 4}, {2.5, 2.5, 2.5, 2.5});
  Tensor s = softmax_rows(eq);
  for (std::size_t j = 0; j < 4; ++j) CHECK(s[j] == doctest::Approx(0.25).epsilon(1e-12));

  Tensor x({1, 2}, {0.0, std::log(2.0)});
  Tensor sx = softmax_rows(x);
  CHECK(sx[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(sx[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  Tensor big({1, 2}, {1000.0, 0.0});
  Tensor sb = softmax_rows(big);
  CHECK(sb.all_finite());
  CHECK(sb[0] == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor r = random_tensor(rng, {4, 5});
    for (double& v : r.data()) v *= 500.0;
    Tensor sr = softmax_rows(r);
    for (std::size_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(sr.at(i, j) >= 0.0);
        sum += sr.at(i, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("mlp_apply layer stacking") {
  MlpParams id;
  id.layers = {{Tensor::identity(3), Tensor({3}), Activation::Identity}};
  Rng rng(3);
  Tensor x = random_tensor(rng, {5, 3});
  Tensor y = mlp_apply(id, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

  MlpParams affine;
  affine.layers = {{Tensor({1, 1}, {2.0}), Tensor({1}, {1.0}), Activation::Identity}};
  CHECK(mlp_apply(affine, Tensor({1, 1}, {3.0}))[0] == 7.0);

  MlpParams rect;
  rect.layers = {{Tensor::identity(2), Tensor({2}), Activation::Relu}};
  Tensor neg({2, 2}, {-1, -2, -3, -4});
  Tensor rn = mlp_apply(rect, neg);
  for (std::size_t i = 0; i < rn.size(); ++i) CHECK(rn[i] == 0.0);

  MlpParams broken;
  broken.layers = {{Tensor({2, 3}), Tensor({3}), Activation::Identity},
                   {Tensor({4, 2}), Tensor({2}), Activation::Identity}};
  CHECK_THROWS_AS(mlp_apply(broken, Tensor({1, 2})), DimensionError);
}

TEST_CASE("bilinear_resize conventions") {
  Tensor c = Tensor::full({3, 5, 2}, 4.25);
  Tensor cr = bilinear_resize(c, 7, 2);
  for (std::size_t i = 0; i < cr.size(); ++i) CHECK(cr[i] == doctest::Approx(4.25));

  Tensor sq({2, 2, 1}, {0, 1, 2, 3});
  Tensor same = bilinear_resize(sq, 2, 2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same[i] == sq[i]);

  // Half-pixel-center convention against the scalar sampler.
  Tensor line({1, 2, 1}, {0.0, 1.0});
  Tensor up = bilinear_resize(line, 1, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    const double src = (static_cast<double>(j) + 0.5) * 2.0 / 4.0 - 0.5;
    CHECK(up[j] == doctest::Approx(sample_bilinear(line, 0.0, src, 0)).epsilon(1e-12));
  }

  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 1 + rng.next_u64() % 5, w = 1 + rng.next_u64() % 5;
    const std::size_t oh = 1 + rng.next_u64() % 7, ow = 1 + rng.next_u64() % 7;
    Tensor x = random_tensor(rng, {h, w, 2});
    Tensor y = bilinear_resize(x, oh, ow);
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const double si = std::clamp(
            (static_cast<double>(i) + 0.5) * static_cast<double>(h) / oh - 0.5, 0.0,
            static_cast<double>(h - 1));
        const double sj = std::clamp(
            (static_cast<double>(j) + 0.5) * static_cast<double>(w) / ow - 0.5, 0.0,
            static_cast<double>(w - 1));
        for (std::size_t ch = 0; ch < 2; ++ch) {
          CHECK(y.at(i, j, ch) ==
                doctest::Approx(sample_bilinear(x, si, sj, ch)).epsilon(1e-12));
        }
      }
    }
  }

  CHECK_THROWS_AS(bilinear_resize(sq, 0, 2), DimensionError);
}

TEST_CASE("channel_argmax rules") {
  Tensor one({2, 2, 1}, {5, -1, 0, 3});
  IndexMap m1 = channel_argmax(one);
  for (std::size_t idx : m1.idx) CHECK(idx == 0);

  Tensor mid({1, 1, 3}, {0.1, 0.9, 0.3});
  CHECK(channel_argmax(mid).idx[0] == 1);

  Tensor tie({1, 1, 2}, {0.5, 0.5});
  CHECK(channel_argmax(tie).idx[0] == 0);

  // Adding a per-position constant across channels keeps the index.
  Rng rng(5);
  Tensor x = random_tensor(rng, {3, 3, 4});
  Tensor shifted = x;
  for (std::size_t p = 0; p < 9; ++p) {
    const double delta = rng.uniform(-10.0, 10.0);
    for (std::size_t ch = 0; ch < 4; ++ch) shifted[p * 4 + ch] += delta;
  }
  CHECK(channel_argmax(x).idx == channel_argmax(shifted).idx);
}

TEST_CASE("embedding_lookup") {
  Tensor table({2, 3}, {1, 2, 3, 4, 5, 6});
  IndexMap zeros{2, 2, {0, 0, 0, 0}};
  Tensor z = embedding_lookup(table, zeros);
  for (std::size_t p = 0; p < 4; ++p) {
    CHECK(z[p * 3 + 0] == 1.0);
    CHECK(z[p * 3 + 2] == 3.0);
  }

  IndexMap order{1, 2, {0, 1}};
  Tensor o = embedding_lookup(table, order);
  CHECK(o[0] == 1.0);
  CHECK(o[3] == 4.0);
  CHECK(o[5] == 6.0);

  IndexMap empty{0, 0, {}};
  CHECK(embedding_lookup(table, empty).size() == 0);

  IndexMap bad{1, 1, {2}};
  CHECK_THROWS_AS(embedding_lookup(table, bad), DomainError);
}

TEST_CASE("kernels are bit-deterministic") {
  Rng rng(123);
  Tensor a = random_tensor(rng, {6, 6});
  Tensor b = random_tensor(rng, {6, 6});
  Tensor p1 = matmul(a, b), p2 = matmul(a, b);
  CHECK(std::memcmp(p1.data().data(), p2.data().data(), p1.size() * 8) == 0);
  Tensor s1 = softmax_rows(a), s2 = softmax_rows(a);
  CHECK(std::memcmp(s1.data().data(), s2.data().data(), s1.size() * 8) == 0);
  Tensor r = a.reshaped({3, 12, 1});
  Tensor u1 = bilinear_resize(r, 5, 7), u2 = bilinear_resize(r, 5, 7);
  CHECK(std::memcmp(u1.data().data(), u2.data().data(), u1.size() * 8) == 0);
}
