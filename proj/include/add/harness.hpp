#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "add/adapters.hpp"
#include "add/assignment.hpp"
#include "add/geometry.hpp"
#include "add/losses.hpp"
#include "add/posenc.hpp"
#include "add/tensor.hpp"

namespace add {

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
  TrainingError(int step_, const std::string& msg)
      : std::runtime_error(msg), step(step_) {}
  int step;
};

struct HarnessConfig {
  std::size_t grid_h = 16, grid_w = 16;
  int levels = 3;            // feature levels n
  int decoder_levels = 3;    // decoder levels m
  std::size_t n_query = 16;
  std::size_t feat_channels = 16;   // C
  std::size_t query_channels = 16;  // C_q
  std::size_t pe_dict = 64;         // C_d
  std::size_t pe_dim = 256;         // C_dim
  std::size_t heads = 4;
  int min_objects = 2, max_objects = 4;
  double d_min = 4.0, d_max = 50.0;
  // Student depth corruption: affine miscalibration plus multiplicative
  // log-normal noise.
  double corrupt_scale = 1.15;
  double corrupt_shift = 2.0;
  double noise_sigma = 0.05;
  double lr = 1e-2;
  // Per-step shrink of the training-only parameters (encoding and adapters)
  // toward their initialization. Keeps the systematic part of the depth
  // correction in the inference-path refinement instead of letting the
  // adapters absorb it.
  double adapter_decay = 0.02;
  int steps = 500;
  double w_cls = 1.0, w_box = 5.0;
  // Task-loss stand-ins (constants; distillation isolated by default).
  double task_cls = 0.0, task_reg = 0.0, task_depth = 0.0;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> eval_seeds = {9001, 9002, 9003};

  double focal() const { return static_cast<double>(grid_w); }
  std::size_t level_h(int k) const { return grid_h >> (k - 1); }
  std::size_t level_w(int k) const { return grid_w >> (k - 1); }
  void validate() const;
};

struct SceneObject {
  Box2D box2d;  // full-resolution cell coordinates
  BevBox bev;
  double h3 = 1.5;  // vertical extent
  int cls = 0;
  Difficulty diff = Difficulty::Easy;
};

struct SyntheticScene {
  std::uint64_t seed = 0;
  DepthMap depth;
  std::vector<int> owner;  // per pixel: nearest covering object, -1 background
  std::vector<SceneObject> objects;
  std::vector<int> query_slot;  // object j sits at teacher query slot query_slot[j]
  std::vector<std::vector<Box2D>> level_boxes;  // per level, stride-scaled

  std::vector<GroundTruth> ground_truths() const;
};

/// Frozen generator networks shared by teacher and student; the teacher
/// consumes ground-truth depth, the student a corrupted copy.
struct StandInModel {
  MlpParams feat_gen;  // per-pixel (depth_norm, xn, yn) -> C
  Tensor query_enc;    // 8 x C_q geometry encoder
  std::vector<double> parameter_bytes() const;  // for the freeze contract
};

/// Learnable student-side parameters. The refinement MLP is part of the
/// inference path; positional encoding and adapters are training-only.
struct StudentParams {
  MlpParams refine;  // per-pixel depth correction, 1 -> hidden -> 1
  PosEncParams pe;
  SelfAttnParams sa;
  CrossAttnParams ca;

  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
};

enum class ModelRole : std::uint8_t { Student = 0, Teacher = 1 };

struct ExperimentRecord {
  int step = 0;
  LossReport loss;
  double feat_dist = 0;  // unadapted student-teacher feature RMS distance
  double ap_bev_car = 0;
  double ap_bev_ped = 0;
};

struct ApCell {
  double ap_bev = 0, ap_3d = 0;
  std::size_t n_gt = 0;
};

struct ApReport {
  ApCell overall[2];      // per class (0 car-like, 1 pedestrian-like)
  ApCell by_diff[2][3];   // class x difficulty
  double inference_seconds = 0;
};

struct ExperimentResult {
  std::vector<ExperimentRecord> records;
  StudentParams student;
  StandInModel model;
  ApReport final_eval;
};

StandInModel make_model(const HarnessConfig& cfg);
StudentParams init_student(const HarnessConfig& cfg);

SyntheticScene synthesize_scene(std::uint64_t seed, const HarnessConfig& cfg);

/// Student-observed depth grid (h x w tensor).
Tensor corrupt_depth(const DepthMap& d, const HarnessConfig& cfg,
                     std::uint64_t noise_seed);

std::uint64_t scene_noise_seed(std::uint64_t scene_seed);

/// Per-level feature maps H_k x W_k x C from a full-resolution depth grid.
std::vector<Tensor> gen_features(const Tensor& depth_grid, const StandInModel& model,
                                 const HarnessConfig& cfg);

Tensor teacher_queries(const SyntheticScene& scene, const StandInModel& model,
                       const HarnessConfig& cfg);
std::vector<DecodedQuery> teacher_heads(const SyntheticScene& scene,
                                        const HarnessConfig& cfg);

std::vector<Detection> infer_detections(const SyntheticScene& scene,
                                        const StudentParams& student,
                                        const StandInModel& model,
                                        const HarnessConfig& cfg, ModelRole role);

ApReport evaluate_student(const StudentParams& student, const StandInModel& model,
                          const HarnessConfig& cfg,
                          std::span<const std::uint64_t> seeds,
                          ModelRole role = ModelRole::Student);

/// One optimization step on a scene; returns the loss report and, when
/// update is true, applies a gradient-descent update in place.
LossReport distill_step(const SyntheticScene& scene, StudentParams& student,
                        const StandInModel& model, const HarnessConfig& hcfg,
                        const DistillConfig& dcfg, bool update);

ExperimentResult run_distillation_experiment(const HarnessConfig& hcfg,
                                             const DistillConfig& dcfg);

}  // namespace add
