#include "add/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "add/callcount.hpp"
#include "add/rng.hpp"

namespace add {

namespace {

constexpr std::size_t kGeomDim = 8;  // x, z, l, w, yaw, class one-hot(2), 1
constexpr std::uint64_t kModelSalt = 0xADDFACADEULL;
constexpr std::uint64_t kStudentSalt = 0x57D0E27ULL;
constexpr std::uint64_t kNoiseSalt = 0xD5A2B41ULL;
constexpr std::uint64_t kSceneSalt = 0x5CE7E11ULL;

Tensor randn(Rng& rng, std::vector<std::size_t> shape, double std_dev) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal() * std_dev;
  return t;
}

std::vector<double> geom_row(const HarnessConfig& cfg, const SceneObject& o) {
  return {o.bev.x / 10.0, o.bev.z / cfg.d_max,  o.bev.l / 5.0, o.bev.w / 2.0,
          o.bev.yaw,      o.cls == 0 ? 1.0 : 0.0, o.cls == 1 ? 1.0 : 0.0, 1.0};
}

std::vector<double> background_geom() {
  return {0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0};
}

// Per-level constant input channels (xn, yn) at level extents.
Tensor level_coords(const HarnessConfig& cfg, int k) {
  const std::size_t h = cfg.level_h(k), w = cfg.level_w(k);
  Tensor c({h * w, 2});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      c.at(i * w + j, 0) = (static_cast<double>(j) + 0.5) / static_cast<double>(w) * 2.0 - 1.0;
      c.at(i * w + j, 1) = (static_cast<double>(i) + 0.5) / static_cast<double>(h) * 2.0 - 1.0;
    }
  }
  return c;
}

// Row-stochastic matrix averaging refined depth over each object's
// visible (owned) pixels.
Tensor visibility_average(const SyntheticScene& scene, const HarnessConfig& cfg) {
  const std::size_t p0 = cfg.grid_h * cfg.grid_w;
  const std::size_t n_obj = scene.objects.size();
  Tensor a({n_obj, p0});
  for (std::size_t j = 0; j < n_obj; ++j) {
    std::size_t count = 0;
    for (std::size_t p = 0; p < p0; ++p) {
      if (scene.owner[p] == static_cast<int>(j)) ++count;
    }
    for (std::size_t p = 0; p < p0; ++p) {
      if (scene.owner[p] == static_cast<int>(j)) a.at(j, p) = 1.0 / static_cast<double>(count);
    }
  }
  return a;
}

double detection_score(double z_est) { return 1.0 / (1.0 + 0.02 * std::max(z_est, 0.0)); }

}  // namespace

void HarnessConfig::validate() const {
  if (grid_h < 4 || grid_w < 4) throw DomainError("grid too small");
  if (levels < 1 || decoder_levels < 1) throw DomainError("level counts must be >= 1");
  const std::size_t div = std::size_t{1} << (levels - 1);
  if (grid_h % div != 0 || grid_w % div != 0) {
    throw DomainError("grid extents must divide by 2^(levels-1)");
  }
  if (n_query == 0 || feat_channels == 0 || query_channels == 0) {
    throw DomainError("zero-sized model dimension");
  }
  if (heads == 0 || feat_channels % heads != 0 || query_channels % heads != 0) {
    throw DomainError("channel counts must divide by head count");
  }
  if (pe_dict == 0 || pe_dim == 0) throw DomainError("positional encoding sizes must be positive");
  if (min_objects < 0 || max_objects < min_objects) throw DomainError("bad object count range");
  if (static_cast<std::size_t>(max_objects) > n_query) {
    throw DomainError("more objects than queries");
  }
  if (!(d_min > 0.0) || !(d_min < d_max)) throw DomainError("bad depth range");
  if (corrupt_scale <= 0.0 || noise_sigma < 0.0) throw DomainError("bad corruption parameters");
  if (lr <= 0.0 || steps < 0) throw DomainError("bad optimizer settings");
  if (adapter_decay < 0.0 || adapter_decay >= 1.0) {
    throw DomainError("adapter decay must lie in [0, 1)");
  }
  if (w_cls < 0.0 || w_box < 0.0) throw DomainError("negative matching weights");
  for (double v : {task_cls, task_reg, task_depth}) {
    if (v < 0.0) throw DomainError("negative task loss stand-in");
  }
}

std::vector<GroundTruth> SyntheticScene::ground_truths() const {
  std::vector<GroundTruth> gts;
  gts.reserve(objects.size());
  for (const SceneObject& o : objects) {
    GroundTruth g;
    g.box.bev = o.bev;
    g.box.y = 0.0;
    g.box.h = o.h3;
    g.cls = o.cls;
    g.diff = o.diff;
    gts.push_back(g);
  }
  return gts;
}

StandInModel make_model(const HarnessConfig& cfg) {
  Rng rng(Rng::mix(cfg.seed, kModelSalt));
  StandInModel m;
  MlpLayer lay;
  lay.weight = randn(rng, {3, cfg.feat_channels}, 0.8);
  lay.bias = randn(rng, {cfg.feat_channels}, 0.2);
  lay.act = Activation::Identity;
  m.feat_gen.layers = {lay};
  m.query_enc = randn(rng, {kGeomDim, cfg.query_channels}, 0.7);
  return m;
}

std::vector<double> StandInModel::parameter_bytes() const {
  std::vector<double> out;
  for (const MlpLayer& lay : feat_gen.layers) {
    out.insert(out.end(), lay.weight.data().begin(), lay.weight.data().end());
    out.insert(out.end(), lay.bias.data().begin(), lay.bias.data().end());
  }
  out.insert(out.end(), query_enc.data().begin(), query_enc.data().end());
  return out;
}

StudentParams init_student(const HarnessConfig& cfg) {
  Rng rng(Rng::mix(cfg.seed, kStudentSalt));
  StudentParams s;

  // Depth refinement, initialized near the identity map.
  const std::size_t hidden = 8;
  MlpLayer l1;
  l1.weight = randn(rng, {1, hidden}, 0.05);
  l1.weight.at(0, 0) = 1.0;
  l1.bias = Tensor({hidden});
  l1.act = Activation::Relu;
  MlpLayer l2;
  l2.weight = randn(rng, {hidden, 1}, 0.05);
  l2.weight.at(0, 0) = 1.0;
  l2.bias = Tensor({1});
  l2.act = Activation::Identity;
  s.refine.layers = {l1, l2};

  // Positional encoding: linear depth binning feeds the argmax.
  s.pe.c_d = cfg.pe_dict;
  s.pe.c_dim = cfg.pe_dim;
  MlpLayer enc;
  enc.weight = randn(rng, {1, cfg.pe_dict}, 1.0);
  enc.bias = randn(rng, {cfg.pe_dict}, 1.0);
  enc.act = Activation::Identity;
  s.pe.encoder.layers = {enc};
  s.pe.table = randn(rng, {cfg.pe_dict, cfg.pe_dim}, 0.3);
  MlpLayer post;
  post.weight = randn(rng, {cfg.pe_dim, cfg.feat_channels},
                      1.0 / std::sqrt(static_cast<double>(cfg.pe_dim)));
  post.bias = Tensor({cfg.feat_channels});
  post.act = Activation::Identity;
  s.pe.post.layers = {post};

  // Identity-initialized adapters.
  const std::size_t c = cfg.feat_channels;
  s.sa.w_q = Tensor::identity(c);
  s.sa.w_k = Tensor::identity(c);
  s.sa.w_v = Tensor::identity(c);
  s.sa.b_q = Tensor({c});
  s.sa.b_k = Tensor({c});
  s.sa.b_v = Tensor({c});
  s.sa.heads = cfg.heads;

  const std::size_t cq = cfg.query_channels;
  auto identity_mlp = [&](MlpParams& m) {
    MlpLayer lay;
    lay.weight = Tensor::identity(cq);
    lay.bias = Tensor({cq});
    lay.act = Activation::Identity;
    m.layers = {lay};
  };
  identity_mlp(s.ca.q_mlp);
  identity_mlp(s.ca.k_mlp);
  identity_mlp(s.ca.v_mlp);
  s.ca.heads = cfg.heads;
  return s;
}

std::vector<std::pair<std::string, Tensor*>> StudentParams::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add_mlp = [&](const std::string& prefix, MlpParams& m) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      out.emplace_back(prefix + "." + std::to_string(l) + ".w", &m.layers[l].weight);
      out.emplace_back(prefix + "." + std::to_string(l) + ".b", &m.layers[l].bias);
    }
  };
  add_mlp("refine", refine);
  add_mlp("pe.encoder", pe.encoder);
  out.emplace_back("pe.table", &pe.table);
  add_mlp("pe.post", pe.post);
  out.emplace_back("sa.wq", &sa.w_q);
  out.emplace_back("sa.wk", &sa.w_k);
  out.emplace_back("sa.wv", &sa.w_v);
  out.emplace_back("sa.bq", &sa.b_q);
  out.emplace_back("sa.bk", &sa.b_k);
  out.emplace_back("sa.bv", &sa.b_v);
  add_mlp("ca.q", ca.q_mlp);
  add_mlp("ca.k", ca.k_mlp);
  add_mlp("ca.v", ca.v_mlp);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> StudentParams::named_tensors() const {
  auto mut = const_cast<StudentParams*>(this)->named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [name, ptr] : mut) out.emplace_back(name, ptr);
  return out;
}

SyntheticScene synthesize_scene(std::uint64_t seed, const HarnessConfig& cfg) {
  cfg.validate();
  const std::size_t h = cfg.grid_h, w = cfg.grid_w;
  const double f = cfg.focal();

  for (int attempt = 0; attempt < 64; ++attempt) {
    Rng rng(Rng::mix(Rng::mix(seed, kSceneSalt), static_cast<std::uint64_t>(attempt)));
    SyntheticScene scene;
    scene.seed = seed;
    const int count = rng.uniform_int(cfg.min_objects, cfg.max_objects);

    for (int n = 0; n < count; ++n) {
      bool placed = false;
      for (int tries = 0; tries < 64 && !placed; ++tries) {
        SceneObject o;
        o.cls = (n == 0) ? 0 : rng.uniform_int(0, 1);  // first object is car-like
        if (o.cls == 0) {
          o.bev.l = rng.uniform(3.6, 4.6);
          o.bev.w = rng.uniform(1.6, 2.0);
          o.h3 = rng.uniform(1.4, 1.7);
        } else {
          o.bev.l = rng.uniform(0.6, 0.9);
          o.bev.w = rng.uniform(0.5, 0.7);
          o.h3 = rng.uniform(1.6, 1.9);
        }
        o.bev.z = rng.uniform(cfg.d_min + 2.0, cfg.d_max * 0.75);
        o.bev.x = rng.uniform(-0.35, 0.35) * o.bev.z * 0.5;
        o.bev.yaw = rng.uniform(-0.7853981633974483, 0.7853981633974483);
        o.diff = o.bev.z < 0.3 * cfg.d_max
                     ? Difficulty::Easy
                     : (o.bev.z < 0.55 * cfg.d_max ? Difficulty::Moderate : Difficulty::Hard);

        const double u_c = f * o.bev.x / o.bev.z + static_cast<double>(w) / 2.0;
        const double v_c = rng.uniform(0.45, 0.65) * static_cast<double>(h);
        const double bw = std::max(1.2, f * std::max(o.bev.l, o.bev.w) / o.bev.z);
        const double bh = std::max(1.2, f * o.h3 * 1.4 / o.bev.z);
        o.box2d = {u_c - bw / 2.0, v_c - bh / 2.0, u_c + bw / 2.0, v_c + bh / 2.0};
        if (o.box2d.x1 < 0.0 || o.box2d.y1 < 0.0 ||
            o.box2d.x2 > static_cast<double>(w) || o.box2d.y2 > static_cast<double>(h)) {
          continue;
        }
        bool overlap = false;
        for (const SceneObject& e : scene.objects) {
          const double ix = std::max(0.0, std::min(o.box2d.x2, e.box2d.x2) -
                                              std::max(o.box2d.x1, e.box2d.x1));
          const double iy = std::max(0.0, std::min(o.box2d.y2, e.box2d.y2) -
                                              std::max(o.box2d.y1, e.box2d.y1));
          const double inter = ix * iy;
          const double area_o = (o.box2d.x2 - o.box2d.x1) * (o.box2d.y2 - o.box2d.y1);
          const double area_e = (e.box2d.x2 - e.box2d.x1) * (e.box2d.y2 - e.box2d.y1);
          if (inter > 0.5 * std::min(area_o, area_e)) {
            overlap = true;
            break;
          }
        }
        if (overlap) continue;
        scene.objects.push_back(o);
        placed = true;
      }
      if (!placed) break;  // crowded grid: settle for what fits
    }
    if (static_cast<int>(scene.objects.size()) < cfg.min_objects) continue;

    // Paint depth, nearest object wins over a background plane at d_max.
    scene.depth.h = h;
    scene.depth.w = w;
    scene.depth.d_min = cfg.d_min;
    scene.depth.d_max = cfg.d_max;
    scene.depth.d.assign(h * w, cfg.d_max);
    scene.depth.valid.assign(h * w, 1);
    scene.owner.assign(h * w, -1);
    for (std::size_t i = 0; i < h; ++i) {
      const double cy = static_cast<double>(i) + 0.5;
      for (std::size_t j = 0; j < w; ++j) {
        const double cx = static_cast<double>(j) + 0.5;
        for (std::size_t oi = 0; oi < scene.objects.size(); ++oi) {
          const SceneObject& o = scene.objects[oi];
          if (cx >= o.box2d.x1 && cx <= o.box2d.x2 && cy >= o.box2d.y1 &&
              cy <= o.box2d.y2 && o.bev.z < scene.depth.d[i * w + j]) {
            scene.depth.d[i * w + j] = o.bev.z;
            scene.owner[i * w + j] = static_cast<int>(oi);
          }
        }
      }
    }
    bool visible = true;
    for (std::size_t oi = 0; oi < scene.objects.size(); ++oi) {
      std::size_t owned = 0;
      for (int v : scene.owner) {
        if (v == static_cast<int>(oi)) ++owned;
      }
      if (owned < 2) visible = false;
    }
    if (!visible) continue;

    // Teacher query slots: deterministic shuffle.
    std::vector<int> perm(cfg.n_query);
    for (std::size_t i = 0; i < cfg.n_query; ++i) perm[i] = static_cast<int>(i);
    for (std::size_t i = cfg.n_query - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)));
      std::swap(perm[i], perm[j]);
    }
    scene.query_slot.assign(scene.objects.size(), 0);
    for (std::size_t j = 0; j < scene.objects.size(); ++j) scene.query_slot[j] = perm[j];

    scene.level_boxes.resize(cfg.levels);
    for (int k = 1; k <= cfg.levels; ++k) {
      const double stride = static_cast<double>(std::size_t{1} << (k - 1));
      for (const SceneObject& o : scene.objects) {
        scene.level_boxes[k - 1].push_back(Box2D{o.box2d.x1 / stride, o.box2d.y1 / stride,
                                                 o.box2d.x2 / stride, o.box2d.y2 / stride});
      }
    }
    return scene;
  }
  throw GenerationError("scene placement failed after bounded retries");
}

std::uint64_t scene_noise_seed(std::uint64_t scene_seed) {
  return Rng::mix(scene_seed, kNoiseSalt);
}

Tensor corrupt_depth(const DepthMap& d, const HarnessConfig& cfg,
                     std::uint64_t noise_seed) {
  Rng rng(noise_seed);
  Tensor out({d.h, d.w});
  for (std::size_t p = 0; p < d.d.size(); ++p) {
    const double noisy = (cfg.corrupt_scale * d.d[p] + cfg.corrupt_shift) *
                         std::exp(cfg.noise_sigma * rng.normal());
    out[p] = noisy;
  }
  return out;
}

std::vector<Tensor> gen_features(const Tensor& depth_grid, const StandInModel& model,
                                 const HarnessConfig& cfg) {
  if (depth_grid.rank() != 2) throw DimensionError("gen_features needs an HxW depth grid");
  std::vector<Tensor> out;
  Tensor d3 = depth_grid.reshaped({depth_grid.extent(0), depth_grid.extent(1), 1});
  for (int k = 1; k <= cfg.levels; ++k) {
    const std::size_t hk = cfg.level_h(k), wk = cfg.level_w(k);
    Tensor dk = bilinear_resize(d3, hk, wk);
    Tensor coords = level_coords(cfg, k);
    Tensor inp({hk * wk, 3});
    for (std::size_t p = 0; p < hk * wk; ++p) {
      inp.at(p, 0) = dk[p] * 2.0 / cfg.d_max - 1.0;
      inp.at(p, 1) = coords.at(p, 0);
      inp.at(p, 2) = coords.at(p, 1);
    }
    out.push_back(mlp_apply(model.feat_gen, inp).reshaped({hk, wk, cfg.feat_channels}));
  }
  return out;
}

namespace {
Tensor geometry_matrix(const SyntheticScene& scene, const HarnessConfig& cfg,
                       const std::vector<double>* z_override) {
  Tensor g({cfg.n_query, kGeomDim});
  const std::vector<double> bg = background_geom();
  for (std::size_t q = 0; q < cfg.n_query; ++q) {
    for (std::size_t d = 0; d < kGeomDim; ++d) g.at(q, d) = bg[d];
  }
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    std::vector<double> row = geom_row(cfg, scene.objects[j]);
    if (z_override) row[1] = (*z_override)[j] / cfg.d_max;
    const std::size_t slot = static_cast<std::size_t>(scene.query_slot[j]);
    for (std::size_t d = 0; d < kGeomDim; ++d) g.at(slot, d) = row[d];
  }
  return g;
}
}  // namespace

Tensor teacher_queries(const SyntheticScene& scene, const StandInModel& model,
                       const HarnessConfig& cfg) {
  return matmul(geometry_matrix(scene, cfg, nullptr), model.query_enc);
}

std::vector<DecodedQuery> teacher_heads(const SyntheticScene& scene,
                                        const HarnessConfig& cfg) {
  std::vector<DecodedQuery> heads(cfg.n_query);
  for (std::size_t q = 0; q < cfg.n_query; ++q) {
    heads[q].class_prob = {0.3, 0.3};
    heads[q].box = {0.0, cfg.d_max, 0.0, 0.0, 0.0};
  }
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    const SceneObject& o = scene.objects[j];
    DecodedQuery& h = heads[static_cast<std::size_t>(scene.query_slot[j])];
    h.class_prob = {0.05, 0.05};
    h.class_prob[static_cast<std::size_t>(o.cls)] = 0.95;
    h.box = {o.bev.x, o.bev.z, o.bev.l, o.bev.w, o.bev.yaw};
  }
  return heads;
}

namespace {
// Visible-pixel mean depths per object from a full-resolution grid.
std::vector<double> object_depth_estimates(const SyntheticScene& scene,
                                           const HarnessConfig& cfg,
                                           const Tensor& depth_grid) {
  Tensor a = visibility_average(scene, cfg);
  std::vector<double> z(scene.objects.size(), 0.0);
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    double acc = 0.0;
    for (std::size_t p = 0; p < depth_grid.size(); ++p) acc += a.at(j, p) * depth_grid[p];
    z[j] = acc;
  }
  return z;
}

Tensor refined_depth_grid(const SyntheticScene& scene, const StudentParams& student,
                          const HarnessConfig& cfg) {
  Tensor noisy = corrupt_depth(scene.depth, cfg, scene_noise_seed(scene.seed));
  Tensor col = noisy.reshaped({noisy.size(), 1});
  Tensor refined = mlp_apply(student.refine, col);
  return refined.reshaped({cfg.grid_h, cfg.grid_w});
}
}  // namespace

std::vector<Detection> infer_detections(const SyntheticScene& scene,
                                        const StudentParams& student,
                                        const StandInModel& model,
                                        const HarnessConfig& cfg, ModelRole role) {
  (void)model;
  Tensor depth_grid =
      role == ModelRole::Teacher
          ? Tensor({scene.depth.h, scene.depth.w}, scene.depth.d)
          : refined_depth_grid(scene, student, cfg);
  const std::vector<double> z_est = object_depth_estimates(scene, cfg, depth_grid);
  std::vector<Detection> dets;
  const double f = cfg.focal();
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    const SceneObject& o = scene.objects[j];
    const double u_c = 0.5 * (o.box2d.x1 + o.box2d.x2);
    Detection d;
    d.box.bev.z = z_est[j];
    d.box.bev.x = (u_c - static_cast<double>(cfg.grid_w) / 2.0) * z_est[j] / f;
    d.box.bev.l = o.bev.l;
    d.box.bev.w = o.bev.w;
    d.box.bev.yaw = o.bev.yaw;
    d.box.y = 0.0;
    d.box.h = o.h3;
    d.cls = o.cls;
    d.score = detection_score(z_est[j]);
    dets.push_back(d);
  }
  return dets;
}

ApReport evaluate_student(const StudentParams& student, const StandInModel& model,
                          const HarnessConfig& cfg,
                          std::span<const std::uint64_t> seeds, ModelRole role) {
  std::vector<Detection> all_dets;
  std::vector<GroundTruth> all_gts;
  std::vector<SyntheticScene> scenes;
  for (std::uint64_t s : seeds) scenes.push_back(synthesize_scene(s, cfg));

  const auto t0 = std::chrono::steady_clock::now();
  for (const SyntheticScene& scene : scenes) {
    auto dets = infer_detections(scene, student, model, cfg, role);
    all_dets.insert(all_dets.end(), dets.begin(), dets.end());
    auto gts = scene.ground_truths();
    all_gts.insert(all_gts.end(), gts.begin(), gts.end());
  }
  const auto t1 = std::chrono::steady_clock::now();

  if (all_gts.empty()) throw DomainError("evaluate_student: no ground truth in held-out set");

  ApReport rep;
  rep.inference_seconds = std::chrono::duration<double>(t1 - t0).count();
  const double thresh[2] = {0.7, 0.5};
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<Detection> cd;
    std::vector<GroundTruth> cg;
    for (const Detection& d : all_dets) {
      if (d.cls == cls) cd.push_back(d);
    }
    for (const GroundTruth& g : all_gts) {
      if (g.cls == cls) cg.push_back(g);
    }
    rep.overall[cls].n_gt = cg.size();
    if (!cg.empty()) {
      rep.overall[cls].ap_bev = average_precision_40(cd, cg, iou_fn_bev, thresh[cls]);
      rep.overall[cls].ap_3d = average_precision_40(cd, cg, iou_fn_3d, thresh[cls]);
    }
    for (int diff = 0; diff < 3; ++diff) {
      std::vector<GroundTruth> dg;
      for (const GroundTruth& g : cg) {
        if (static_cast<int>(g.diff) == diff) dg.push_back(g);
      }
      rep.by_diff[cls][diff].n_gt = dg.size();
      if (dg.empty()) continue;
      // Detections whose best full-set match has another difficulty are
      // dropped from this bucket instead of counting as false positives.
      std::vector<Detection> dd;
      for (const Detection& d : cd) {
        double best = 0.0;
        int best_diff = -1;
        for (const GroundTruth& g : cg) {
          const double v = iou_fn_bev(d, g);
          if (v > best) {
            best = v;
            best_diff = static_cast<int>(g.diff);
          }
        }
        if (best >= thresh[cls] && best_diff != diff) continue;
        dd.push_back(d);
      }
      rep.by_diff[cls][diff].ap_bev = average_precision_40(dd, dg, iou_fn_bev, thresh[cls]);
      rep.by_diff[cls][diff].ap_3d = average_precision_40(dd, dg, iou_fn_3d, thresh[cls]);
    }
  }
  return rep;
}

LossReport distill_step(const SyntheticScene& scene, StudentParams& student,
                        const StandInModel& model, const HarnessConfig& hcfg,
                        const DistillConfig& dcfg, bool update) {
  dcfg.validate();
  Tape t;

  // Register learnable tensors.
  auto named = student.named_tensors();
  std::vector<Tape::Id> var_ids;
  var_ids.reserve(named.size());
  for (auto& [name, tensor] : named) var_ids.push_back(t.input(*tensor));
  auto var_of = [&](const Tensor* p) -> Tape::Id {
    for (std::size_t i = 0; i < named.size(); ++i) {
      if (named[i].second == p) return var_ids[i];
    }
    throw NumericError("unregistered parameter");
  };

  auto mlp_vars = [&](const MlpParams& m, std::vector<std::pair<Tape::Id, Tape::Id>>& layers,
                      std::vector<Activation>& acts) {
    for (const MlpLayer& lay : m.layers) {
      layers.emplace_back(var_of(&lay.weight), var_of(&lay.bias));
      acts.push_back(lay.act);
    }
  };

  // Refined corrupted depth at full resolution.
  Tensor noisy = corrupt_depth(scene.depth, hcfg, scene_noise_seed(scene.seed));
  const std::size_t p0 = hcfg.grid_h * hcfg.grid_w;
  std::vector<std::pair<Tape::Id, Tape::Id>> refine_layers;
  std::vector<Activation> refine_acts;
  mlp_vars(student.refine, refine_layers, refine_acts);
  Tape::Id refined_col = t.mlp(t.constant(noisy.reshaped({p0, 1})), refine_layers, refine_acts);

  // Teacher features from ground-truth depth (constants).
  Tensor gt_grid({scene.depth.h, scene.depth.w}, scene.depth.d);
  std::vector<Tensor> teacher_feats = gen_features(gt_grid, model, hcfg);

  PosEncVars pe_vars;
  pe_vars.table = var_of(&student.pe.table);
  mlp_vars(student.pe.post, pe_vars.post_layers, pe_vars.post_acts);
  SelfAttnVars sa_vars{var_of(&student.sa.w_q), var_of(&student.sa.w_k),
                       var_of(&student.sa.w_v), var_of(&student.sa.b_q),
                       var_of(&student.sa.b_k), var_of(&student.sa.b_v)};

  Tape::Id refined_grid = t.reshape(refined_col, {hcfg.grid_h, hcfg.grid_w, 1});
  Tape::Id l_feat_id = -1;
  for (int k = 1; k <= hcfg.levels; ++k) {
    const std::size_t hk = hcfg.level_h(k), wk = hcfg.level_w(k), pk = hk * wk;
    Tape::Id dk = t.reshape(t.bilinear_resize(refined_grid, hk, wk), {pk, 1});
    Tape::Id dn = t.add(t.scale(dk, 2.0 / hcfg.d_max),
                        t.constant(Tensor::full({pk, 1}, -1.0)));
    Tape::Id inp = t.concat_cols({dn, t.constant(level_coords(hcfg, k))});
    Tape::Id fk = t.add_bias(t.matmul(inp, t.constant(model.feat_gen.layers[0].weight)),
                             t.constant(model.feat_gen.layers[0].bias));
    Tape::Id pe = build_3d_pe_on_tape(t, scene.depth, student.pe, pe_vars, hk, wk);
    Tape::Id f3d = self_attention_adapt_on_tape(t, fk, pe, sa_vars, hcfg.heads);
    MaskMap mask = make_foreground_mask(scene.level_boxes[k - 1], hk, wk, k);
    Tensor teacher_flat = teacher_feats[k - 1].reshaped({pk, hcfg.feat_channels});
    Tape::Id term = feature_term_on_tape(t, f3d, teacher_flat, mask, dcfg);
    l_feat_id = (l_feat_id < 0) ? term : t.add(l_feat_id, term);
  }

  // Student object queries through the visible-pixel depth estimates.
  Tensor tv = teacher_queries(scene, model, hcfg);
  Tape::Id l_ed_id = -1;
  {
    Tensor a = visibility_average(scene, hcfg);
    Tensor sel({hcfg.n_query, scene.objects.size()});
    for (std::size_t j = 0; j < scene.objects.size(); ++j) {
      sel.at(static_cast<std::size_t>(scene.query_slot[j]), j) = 1.0;
    }
    Tensor e_z({1, kGeomDim});
    e_z.at(0, 1) = 1.0;
    Tensor base = geometry_matrix(scene, hcfg, nullptr);
    for (std::size_t j = 0; j < scene.objects.size(); ++j) {
      base.at(static_cast<std::size_t>(scene.query_slot[j]), 1) = 0.0;
    }
    Tape::Id z_est = t.matmul(t.constant(a), refined_col);
    Tape::Id z_slot = t.scale(t.matmul(t.constant(sel), z_est), 1.0 / hcfg.d_max);
    Tape::Id geom = t.add(t.constant(base), t.matmul(z_slot, t.constant(e_z)));
    Tape::Id f_v = t.matmul(geom, t.constant(model.query_enc));

    CrossAttnVars ca_vars;
    mlp_vars(student.ca.q_mlp, ca_vars.q_layers, ca_vars.q_acts);
    mlp_vars(student.ca.k_mlp, ca_vars.k_layers, ca_vars.k_acts);
    mlp_vars(student.ca.v_mlp, ca_vars.v_layers, ca_vars.v_acts);

    const CostMatrix cost = match_cost(teacher_heads(scene, hcfg),
                                       scene.ground_truths(), hcfg.w_cls, hcfg.w_box);
    const std::vector<std::uint8_t> m_f =
        foreground_query_mask(hungarian_solve(cost), hcfg.n_query);

    Tape::Id tv_id = t.constant(tv);
    for (int k = 1; k <= hcfg.decoder_levels; ++k) {
      Tape::Id fa = cross_attention_adapt_on_tape(t, f_v, tv_id, ca_vars, hcfg.heads);
      Tape::Id term = response_term_on_tape(t, fa, tv, m_f, dcfg);
      l_ed_id = (l_ed_id < 0) ? term : t.add(l_ed_id, term);
    }
  }

  const double l_feat = t.value(l_feat_id)[0];
  const double l_ed = t.value(l_ed_id)[0];
  LossReport report = total_loss(hcfg.task_cls, hcfg.task_reg, hcfg.task_depth,
                                 l_feat, l_ed, dcfg);

  if (update) {
    Tape::Id objective =
        t.add(t.scale(l_feat_id, dcfg.alpha), t.scale(l_ed_id, dcfg.beta));
    t.backward(objective);
    for (std::size_t i = 0; i < named.size(); ++i) {
      Tensor* p = named[i].second;
      const Tensor& g = t.grad(var_ids[i]);
      for (std::size_t e = 0; e < p->size(); ++e) (*p)[e] -= hcfg.lr * g[e];
    }
  }
  return report;
}

ExperimentResult run_distillation_experiment(const HarnessConfig& hcfg,
                                             const DistillConfig& dcfg) {
  hcfg.validate();
  dcfg.validate();
  ExperimentResult result;
  result.model = make_model(hcfg);
  result.student = init_student(hcfg);
  const std::vector<double> frozen = result.model.parameter_bytes();

  // Anchor the training-only parameters; everything except the depth
  // refinement is pulled back toward this state each step.
  const StudentParams anchor = result.student;
  std::vector<const Tensor*> anchor_tensors;
  for (auto& [name, ptr] : anchor.named_tensors()) anchor_tensors.push_back(ptr);

  for (int step = 0; step < hcfg.steps; ++step) {
    const std::uint64_t scene_seed = Rng::mix(hcfg.seed, static_cast<std::uint64_t>(step) + 1);
    SyntheticScene scene = synthesize_scene(scene_seed, hcfg);
    LossReport loss;
    try {
      loss = distill_step(scene, result.student, result.model, hcfg, dcfg, true);
    } catch (const DomainError& e) {
      throw TrainingError(step, std::string("distillation diverged: ") + e.what());
    }
    if (!std::isfinite(loss.total)) {
      throw TrainingError(step, "non-finite loss");
    }

    if (hcfg.adapter_decay > 0.0) {
      // Only the feature-path parameters decay. The cross-attention MLPs
      // have to learn the student/teacher query fusion from scratch, so
      // pulling them back to initialization would cap the response loss.
      auto named = result.student.named_tensors();
      for (std::size_t t = 0; t < named.size(); ++t) {
        if (named[t].first.rfind("refine", 0) == 0 ||
            named[t].first.rfind("ca.", 0) == 0) {
          continue;
        }
        Tensor& p = *named[t].second;
        const Tensor& p0 = *anchor_tensors[t];
        for (std::size_t e = 0; e < p.size(); ++e) {
          p[e] = p0[e] + (1.0 - hcfg.adapter_decay) * (p[e] - p0[e]);
        }
      }
    }

    ExperimentRecord rec;
    rec.step = step;
    rec.loss = loss;

    // Unadapted feature distance on the same scene.
    {
      Tensor refined = refined_depth_grid(scene, result.student, hcfg);
      auto sf = gen_features(refined, result.model, hcfg);
      auto tf = gen_features(Tensor({scene.depth.h, scene.depth.w}, scene.depth.d),
                             result.model, hcfg);
      double acc = 0.0;
      std::size_t count = 0;
      for (std::size_t k = 0; k < sf.size(); ++k) {
        for (std::size_t e = 0; e < sf[k].size(); ++e) {
          const double d = sf[k][e] - tf[k][e];
          acc += d * d;
        }
        count += sf[k].size();
      }
      rec.feat_dist = std::sqrt(acc / static_cast<double>(count));
    }

    ApReport ap = evaluate_student(result.student, result.model, hcfg, hcfg.eval_seeds);
    rec.ap_bev_car = ap.overall[0].ap_bev;
    rec.ap_bev_ped = ap.overall[1].ap_bev;
    result.records.push_back(rec);
  }

  if (result.model.parameter_bytes() != frozen) {
    throw TrainingError(hcfg.steps, "teacher parameters changed during distillation");
  }
  result.final_eval = evaluate_student(result.student, result.model, hcfg, hcfg.eval_seeds);
  return result;
}

}  // namespace add
