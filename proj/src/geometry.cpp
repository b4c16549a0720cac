#include "add/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace add {

namespace {

struct Pt {
  double x, y;
};

std::array<Pt, 4> bev_corners(const BevBox& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = 0.5 * b.l, hw = 0.5 * b.w;
  // counterclockwise
  const std::array<Pt, 4> local = {Pt{hl, hw}, Pt{-hl, hw}, Pt{-hl, -hw}, Pt{hl, -hw}};
  std::array<Pt, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = Pt{b.x + c * local[i].x - s * local[i].y,
                b.z + s * local[i].x + c * local[i].y};
  }
  return out;
}

double shoelace(const std::vector<Pt>& p) {
  double a = 0.0;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Pt& u = p[i];
    const Pt& v = p[(i + 1) % n];
    a += u.x * v.y - v.x * u.y;
  }
  return 0.5 * a;
}

double cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a.x - o.x) * (b.y - o.y) - (b.x - o.x) * (a.y - o.y);
}

// Sutherland-Hodgman: clip polygon poly by the half-plane left of edge a->b.
std::vector<Pt> clip_edge(const std::vector<Pt>& poly, const Pt& a, const Pt& b) {
  std::vector<Pt> out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Pt& cur = poly[i];
    const Pt& nxt = poly[(i + 1) % n];
    const double dc = cross(a, b, cur);
    const double dn = cross(a, b, nxt);
    if (dc >= 0.0) out.push_back(cur);
    if ((dc > 0.0 && dn < 0.0) || (dc < 0.0 && dn > 0.0)) {
      const double t = dc / (dc - dn);
      out.push_back(Pt{cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
    }
  }
  return out;
}

double intersection_area(const BevBox& ba, const BevBox& bb) {
  auto ca = bev_corners(ba);
  auto cb = bev_corners(bb);
  std::vector<Pt> poly(ca.begin(), ca.end());
  for (int e = 0; e < 4 && !poly.empty(); ++e) {
    poly = clip_edge(poly, cb[e], cb[(e + 1) % 4]);
  }
  if (poly.size() < 3) return 0.0;
  return std::abs(shoelace(poly));
}

void check_box(const BevBox& b) {
  if (!(b.l > 0.0) || !(b.w > 0.0)) throw DomainError("degenerate BEV box");
}

}  // namespace

MaskMap make_foreground_mask(std::span<const Box2D> boxes, std::size_t h_k,
                             std::size_t w_k, int level) {
  MaskMap mask;
  mask.level = level;
  mask.h = h_k;
  mask.w = w_k;
  mask.m.assign(h_k * w_k, 0);
  for (std::size_t i = 0; i < h_k; ++i) {
    const double cy = static_cast<double>(i) + 0.5;
    for (std::size_t j = 0; j < w_k; ++j) {
      const double cx = static_cast<double>(j) + 0.5;
      for (const Box2D& b : boxes) {
        if (cx >= b.x1 && cx <= b.x2 && cy >= b.y1 && cy <= b.y2) {
          mask.m[i * w_k + j] = 1;
          break;
        }
      }
    }
  }
  return mask;
}

double rotated_iou_bev(const BevBox& a, const BevBox& b) {
  check_box(a);
  check_box(b);
  const double inter = intersection_area(a, b);
  const double uni = a.l * a.w + b.l * b.w - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  check_box(a.bev);
  check_box(b.bev);
  if (!(a.h > 0.0) || !(b.h > 0.0)) throw DomainError("degenerate 3D box");
  const double inter_bev = intersection_area(a.bev, b.bev);
  const double lo = std::max(a.y, b.y);
  const double hi = std::min(a.y + a.h, b.y + b.h);
  const double dz = std::max(0.0, hi - lo);
  const double inter = inter_bev * dz;
  const double vol_a = a.bev.l * a.bev.w * a.h;
  const double vol_b = b.bev.l * b.bev.w * b.h;
  return std::clamp(inter / (vol_a + vol_b - inter), 0.0, 1.0);
}

double iou_fn_bev(const Detection& d, const GroundTruth& g) {
  return rotated_iou_bev(d.box.bev, g.box.bev);
}

double iou_fn_3d(const Detection& d, const GroundTruth& g) {
  return iou_3d(d.box, g.box);
}

double average_precision_40(std::vector<Detection> dets,
                            const std::vector<GroundTruth>& gts,
                            const IouFn& iou, double iou_thresh) {
  if (gts.empty()) throw DomainError("average_precision_40: empty ground truth");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });

  std::vector<char> gt_used(gts.size(), 0);
  std::vector<char> is_tp;
  is_tp.reserve(dets.size());
  for (std::size_t oi : order) {
    double best = 0.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      const double v = iou(dets[oi], gts[g]);
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best >= iou_thresh) {
      gt_used[best_g] = 1;
      is_tp.push_back(1);
    } else {
      is_tp.push_back(0);
    }
  }

  const double n_gt = static_cast<double>(gts.size());
  std::vector<double> recall, precision;
  double tp = 0, fp = 0;
  for (char t : is_tp) {
    if (t) {
      tp += 1;
    } else {
      fp += 1;
    }
    recall.push_back(tp / n_gt);
    precision.push_back(tp / (tp + fp));
  }

  double ap = 0.0;
  for (int r = 1; r <= 40; ++r) {
    const double rr = static_cast<double>(r) / 40.0;
    double p = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
      if (recall[i] >= rr) p = std::max(p, precision[i]);
    }
    ap += p;
  }
  return ap / 40.0;
}

namespace {
void put(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}
}  // namespace

void write_detections(std::ostream& os, std::span<const Detection> dets) {
  for (const Detection& d : dets) {
    os << d.cls << ' ';
    put(os, d.score);
    for (double v : {d.box.bev.x, d.box.bev.z, d.box.bev.l, d.box.bev.w,
                     d.box.bev.yaw, d.box.y, d.box.h}) {
      os << ' ';
      put(os, v);
    }
    os << '\n';
  }
}

void write_ground_truths(std::ostream& os, std::span<const GroundTruth> gts) {
  for (const GroundTruth& g : gts) {
    os << g.cls << ' ' << static_cast<int>(g.diff);
    for (double v : {g.box.bev.x, g.box.bev.z, g.box.bev.l, g.box.bev.w,
                     g.box.bev.yaw, g.box.y, g.box.h}) {
      os << ' ';
      put(os, v);
    }
    os << '\n';
  }
}

std::vector<Detection> read_detections(std::istream& is) {
  std::vector<Detection> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Detection d;
    if (!(ls >> d.cls >> d.score >> d.box.bev.x >> d.box.bev.z >> d.box.bev.l >>
          d.box.bev.w >> d.box.bev.yaw >> d.box.y >> d.box.h)) {
      throw DomainError("malformed detection record: " + line);
    }
    out.push_back(d);
  }
  return out;
}

std::vector<GroundTruth> read_ground_truths(std::istream& is) {
  std::vector<GroundTruth> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    GroundTruth g;
    int diff = 0;
    if (!(ls >> g.cls >> diff >> g.box.bev.x >> g.box.bev.z >> g.box.bev.l >>
          g.box.bev.w >> g.box.bev.yaw >> g.box.y >> g.box.h)) {
      throw DomainError("malformed ground-truth record: " + line);
    }
    g.diff = static_cast<Difficulty>(diff);
    out.push_back(g);
  }
  return out;
}

}  // namespace add
