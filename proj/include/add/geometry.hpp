#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "add/tensor.hpp"

namespace add {

/// Axis-aligned image-plane box in feature-cell units.
struct Box2D {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

/// Rotated ground-plane rectangle, meters; yaw in (-pi, pi].
struct BevBox {
  double x = 0, z = 0;
  double l = 0, w = 0;
  double yaw = 0;
};

struct Box3D {
  BevBox bev;
  double y = 0;  // base height
  double h = 0;  // vertical extent
};

struct MaskMap {
  int level = 0;
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> m;  // row-major, entries 0/1

  std::uint8_t at(std::size_t i, std::size_t j) const { return m[i * w + j]; }
};

enum class Difficulty { Easy = 0, Moderate = 1, Hard = 2 };

struct Detection {
  Box3D box;
  int cls = 0;
  double score = 0;  // in [0,1]
};

struct GroundTruth {
  Box3D box;
  int cls = 0;
  Difficulty diff = Difficulty::Easy;
};

/// Binary foreground mask: cell (i,j) is 1 iff its center (j+0.5, i+0.5)
/// lies inside any of the given boxes.
MaskMap make_foreground_mask(std::span<const Box2D> boxes, std::size_t h_k,
                             std::size_t w_k, int level = 0);

double rotated_iou_bev(const BevBox& a, const BevBox& b);
double iou_3d(const Box3D& a, const Box3D& b);

using IouFn = std::function<double(const Detection&, const GroundTruth&)>;

double iou_fn_bev(const Detection& d, const GroundTruth& g);
double iou_fn_3d(const Detection& d, const GroundTruth& g);

/// AP interpolated at the 40 recall positions 1/40..40/40; greedy
/// score-descending matching, each GT used at most once.
double average_precision_40(std::vector<Detection> dets,
                            const std::vector<GroundTruth>& gts,
                            const IouFn& iou, double iou_thresh);

// Line-delimited text records: one box per line, decimal encoding.
// detection: cls score x z l w yaw y h
// gt:        cls diff x z l w yaw y h
void write_detections(std::ostream& os, std::span<const Detection> dets);
void write_ground_truths(std::ostream& os, std::span<const GroundTruth> gts);
std::vector<Detection> read_detections(std::istream& is);
std::vector<GroundTruth> read_ground_truths(std::istream& is);

}  // namespace add
