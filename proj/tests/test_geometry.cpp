#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "add/geometry.hpp"
#include "add/rng.hpp"

using namespace add;

namespace {

bool point_in_bev(const BevBox& b, double px, double pz) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = px - b.x, dz = pz - b.z;
  const double u = c * dx + s * dz;
  const double v = -s * dx + c * dz;
  return std::abs(u) <= b.l / 2.0 && std::abs(v) <= b.w / 2.0;
}

// Monte-Carlo IoU oracle: point counting over the joint bounding region.
double mc_iou(const BevBox& a, const BevBox& b, std::size_t samples, Rng& rng) {
  const double ra = std::hypot(a.l, a.w) / 2.0, rb = std::hypot(b.l, b.w) / 2.0;
  const double x0 = std::min(a.x - ra, b.x - rb), x1 = std::max(a.x + ra, b.x + rb);
  const double z0 = std::min(a.z - ra, b.z - rb), z1 = std::max(a.z + ra, b.z + rb);
  std::size_t in_a = 0, in_b = 0, in_both = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double px = rng.uniform(x0, x1), pz = rng.uniform(z0, z1);
    const bool ia = point_in_bev(a, px, pz), ib = point_in_bev(b, px, pz);
    in_a += ia;
    in_b += ib;
    in_both += ia && ib;
  }
  const std::size_t uni = in_a + in_b - in_both;
  return uni == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(uni);
}

BevBox random_box(Rng& rng) {
  BevBox b;
  b.x = rng.uniform(-3.0, 3.0);
  b.z = rng.uniform(-3.0, 3.0);
  b.l = rng.uniform(0.5, 4.0);
  b.w = rng.uniform(0.5, 4.0);
  b.yaw = rng.uniform(-3.1, 3.1);
  return b;
}

Detection det(const BevBox& bev, int cls, double score, double h = 1.0) {
  Detection d;
  d.box.bev = bev;
  d.box.y = 0;
  d.box.h = h;
  d.cls = cls;
  d.score = score;
  return d;
}

GroundTruth gt(const BevBox& bev, int cls, double h = 1.0) {
  GroundTruth g;
  g.box.bev = bev;
  g.box.y = 0;
  g.box.h = h;
  g.cls = cls;
  return g;
}

// Direct evaluation of interpolated AP over the 40-point recall grid.
double ap40_oracle(std::vector<std::pair<double, bool>> scored, std::size_t n_gt) {
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> recalls, precisions;
  std::size_t tp = 0, fp = 0;
  for (const auto& [score, is_tp] : scored) {
    (is_tp ? tp : fp) += 1;
    recalls.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    precisions.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  double ap = 0.0;
  for (int r = 1; r <= 40; ++r) {
    const double target = static_cast<double>(r) / 40.0;
    double best = 0.0;
    for (std::size_t i = 0; i < recalls.size(); ++i) {
      if (recalls[i] >= target) best = std::max(best, precisions[i]);
    }
    ap += best / 40.0;
  }
  return ap;
}

}  // namespace

TEST_CASE("foreground mask examples") {
  MaskMap empty = make_foreground_mask({}, 4, 4);
  for (auto v : empty.m) CHECK(v == 0);

  const Box2D all{0, 0, 4, 4};
  MaskMap full = make_foreground_mask(std::vector<Box2D>{all}, 4, 4);
  for (auto v : full.m) CHECK(v == 1);

  const Box2D partial{1, 0, 3, 2};
  MaskMap m = make_foreground_mask(std::vector<Box2D>{partial}, 4, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double cx = static_cast<double>(j) + 0.5;
      const double cy = static_cast<double>(i) + 0.5;
      const bool inside = cx >= partial.x1 && cx <= partial.x2 && cy >= partial.y1 &&
                          cy <= partial.y2;
      CHECK(m.at(i, j) == (inside ? 1 : 0));
    }
  }
}

TEST_CASE("foreground mask union is elementwise OR") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Box2D> lhs, rhs, both;
    for (int n = 0; n < 3; ++n) {
      Box2D b;
      b.x1 = rng.uniform(0.0, 6.0);
      b.y1 = rng.uniform(0.0, 6.0);
      b.x2 = b.x1 + rng.uniform(0.2, 3.0);
      b.y2 = b.y1 + rng.uniform(0.2, 3.0);
      (n % 2 == 0 ? lhs : rhs).push_back(b);
      both.push_back(b);
    }
    MaskMap ma = make_foreground_mask(lhs, 8, 8);
    MaskMap mb = make_foreground_mask(rhs, 8, 8);
    MaskMap mu = make_foreground_mask(both, 8, 8);
    for (std::size_t p = 0; p < mu.m.size(); ++p) {
      CHECK(mu.m[p] == (ma.m[p] | mb.m[p]));
    }
  }
}

TEST_CASE("rotated BEV IoU basics") {
  BevBox a{0, 0, 2, 1, 0.3};
  CHECK(rotated_iou_bev(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  BevBox far{100, 100, 2, 1, 0.0};
  CHECK(rotated_iou_bev(a, far) == 0.0);

  BevBox u1{0, 0, 1, 1, 0};
  BevBox u2{0.5, 0, 1, 1, 0};
  CHECK(rotated_iou_bev(u1, u2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  BevBox degenerate{0, 0, 0, 1, 0};
  CHECK_THROWS_AS(rotated_iou_bev(a, degenerate), DomainError);
}

TEST_CASE("rotated IoU symmetry, rotation invariance, Monte-Carlo oracle") {
  Rng rng(555);
  for (int trial = 0; trial < 25; ++trial) {
    BevBox a = random_box(rng), b = random_box(rng);
    const double ab = rotated_iou_bev(a, b);
    CHECK(ab == doctest::Approx(rotated_iou_bev(b, a)).epsilon(1e-12));

    const double phi = rng.uniform(-3.0, 3.0);
    auto rot = [&](BevBox x) {
      const double c = std::cos(phi), s = std::sin(phi);
      BevBox y = x;
      y.x = c * x.x - s * x.z;
      y.z = s * x.x + c * x.z;
      y.yaw = x.yaw + phi;
      return y;
    };
    CHECK(std::abs(rotated_iou_bev(rot(a), rot(b)) - ab) < 1e-9);

    Rng mc(Rng::mix(555, static_cast<std::uint64_t>(trial)));
    CHECK(std::abs(ab - mc_iou(a, b, 60000, mc)) < 0.02);
  }
}

TEST_CASE("3D IoU basics") {
  Box3D a{{0, 0, 1, 1, 0}, 0.0, 1.0};
  CHECK(iou_3d(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Box3D lifted = a;
  lifted.y = 2.0;
  CHECK(iou_3d(a, lifted) == 0.0);

  Box3D shifted = a;
  shifted.bev.x = 0.5;
  CHECK(iou_3d(a, shifted) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("average precision basics and oracle") {
  BevBox b1{0, 0, 2, 1, 0};
  BevBox b2{10, 0, 2, 1, 0};
  std::vector<GroundTruth> gts = {gt(b1, 0), gt(b2, 0)};

  std::vector<Detection> perfect = {det(b1, 0, 0.9), det(b2, 0, 0.8)};
  CHECK(average_precision_40(perfect, gts, iou_fn_bev, 0.7) ==
        doctest::Approx(1.0).epsilon(1e-12));

  CHECK(average_precision_40({}, gts, iou_fn_bev, 0.7) == 0.0);

  BevBox nowhere{50, 50, 2, 1, 0};
  std::vector<Detection> mixed = {det(b1, 0, 0.9), det(nowhere, 0, 0.8),
                                  det(b2, 0, 0.7)};
  const double expect =
      ap40_oracle({{0.9, true}, {0.8, false}, {0.7, true}}, 2);
  CHECK(average_precision_40(mixed, gts, iou_fn_bev, 0.7) ==
        doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(average_precision_40(perfect, {}, iou_fn_bev, 0.7), DomainError);
}

TEST_CASE("AP monotone-score invariance and FP removal") {
  BevBox b1{0, 0, 2, 1, 0};
  BevBox b2{10, 0, 2, 1, 0};
  BevBox off{50, 50, 2, 1, 0};
  std::vector<GroundTruth> gts = {gt(b1, 0), gt(b2, 0)};
  std::vector<Detection> dets = {det(b1, 0, 0.9), det(off, 0, 0.5), det(b2, 0, 0.4)};

  const double base = average_precision_40(dets, gts, iou_fn_bev, 0.7);
  std::vector<Detection> squashed = dets;
  for (Detection& d : squashed) d.score = d.score * d.score * 0.5;  // strictly monotone
  CHECK(average_precision_40(squashed, gts, iou_fn_bev, 0.7) ==
        doctest::Approx(base).epsilon(1e-12));

  std::vector<Detection> no_fp = {dets[0], dets[2]};
  CHECK(average_precision_40(no_fp, gts, iou_fn_bev, 0.7) >= base);
}

TEST_CASE("detection and ground-truth text round-trip") {
  Rng rng(77);
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  for (int i = 0; i < 5; ++i) {
    Detection d = det(random_box(rng), i % 2, rng.uniform(), rng.uniform(0.5, 2.0));
    d.box.y = rng.uniform(-1.0, 1.0);
    dets.push_back(d);
    GroundTruth g = gt(random_box(rng), i % 2, rng.uniform(0.5, 2.0));
    g.diff = static_cast<Difficulty>(i % 3);
    gts.push_back(g);
  }
  std::stringstream sd, sg;
  write_detections(sd, dets);
  write_ground_truths(sg, gts);
  auto rd = read_detections(sd);
  auto rg = read_ground_truths(sg);
  REQUIRE(rd.size() == dets.size());
  REQUIRE(rg.size() == gts.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    CHECK(rd[i].cls == dets[i].cls);
    CHECK(rd[i].score == dets[i].score);
    CHECK(rd[i].box.bev.x == dets[i].box.bev.x);
    CHECK(rd[i].box.bev.yaw == dets[i].box.bev.yaw);
    CHECK(rd[i].box.h == dets[i].box.h);
  }
  for (std::size_t i = 0; i < gts.size(); ++i) {
    CHECK(rg[i].cls == gts[i].cls);
    CHECK(static_cast<int>(rg[i].diff) == static_cast<int>(gts[i].diff));
    CHECK(rg[i].box.bev.z == gts[i].box.bev.z);
  }
}
