#include "add/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

extern char** environ;

namespace add {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for key '" + key + "': " + v);
  }
  if (pos != v.size()) throw ConfigError("bad numeric value for key '" + key + "': " + v);
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for key '" + key + "': " + v);
  }
  if (pos != v.size()) throw ConfigError("bad integer value for key '" + key + "': " + v);
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in seed list for key '" + key + "'");
    out.push_back(static_cast<std::uint64_t>(parse_int(key, item)));
  }
  if (out.empty()) throw ConfigError("empty seed list for key '" + key + "'");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void apply_key(RunConfig& c, const std::string& key, const std::string& value) {
  auto d = [&] { return parse_double(key, value); };
  auto i = [&] { return parse_int(key, value); };
  auto u = [&] { return static_cast<std::size_t>(parse_int(key, value)); };

  if (key == "distill.alpha_i") c.distill.alpha_i = d();
  else if (key == "distill.beta_i") c.distill.beta_i = d();
  else if (key == "distill.alpha_v") c.distill.alpha_v = d();
  else if (key == "distill.beta_v") c.distill.beta_v = d();
  else if (key == "distill.alpha") c.distill.alpha = d();
  else if (key == "distill.beta") c.distill.beta = d();
  else if (key == "distill.reduction") {
    if (value == "raw") c.distill.reduction = Reduction::Raw;
    else if (value == "normalized") c.distill.reduction = Reduction::Normalized;
    else throw ConfigError("key 'distill.reduction' expects raw|normalized, got: " + value);
  } else if (key == "harness.grid_h") c.harness.grid_h = u();
  else if (key == "harness.grid_w") c.harness.grid_w = u();
  else if (key == "harness.levels") c.harness.levels = static_cast<int>(i());
  else if (key == "harness.decoder_levels") c.harness.decoder_levels = static_cast<int>(i());
  else if (key == "harness.n_query") c.harness.n_query = u();
  else if (key == "harness.feat_channels") c.harness.feat_channels = u();
  else if (key == "harness.query_channels") c.harness.query_channels = u();
  else if (key == "harness.pe_dict") c.harness.pe_dict = u();
  else if (key == "harness.pe_dim") c.harness.pe_dim = u();
  else if (key == "harness.heads") c.harness.heads = u();
  else if (key == "harness.min_objects") c.harness.min_objects = static_cast<int>(i());
  else if (key == "harness.max_objects") c.harness.max_objects = static_cast<int>(i());
  else if (key == "harness.d_min") c.harness.d_min = d();
  else if (key == "harness.d_max") c.harness.d_max = d();
  else if (key == "harness.corrupt_scale") c.harness.corrupt_scale = d();
  else if (key == "harness.corrupt_shift") c.harness.corrupt_shift = d();
  else if (key == "harness.noise_sigma") c.harness.noise_sigma = d();
  else if (key == "harness.w_cls") c.harness.w_cls = d();
  else if (key == "harness.w_box") c.harness.w_box = d();
  else if (key == "harness.task_cls") c.harness.task_cls = d();
  else if (key == "harness.task_reg") c.harness.task_reg = d();
  else if (key == "harness.task_depth") c.harness.task_depth = d();
  else if (key == "harness.adapter_decay") c.harness.adapter_decay = d();
  else if (key == "train.lr") c.harness.lr = d();
  else if (key == "train.steps") c.harness.steps = static_cast<int>(i());
  else if (key == "train.seed") c.harness.seed = static_cast<std::uint64_t>(i());
  else if (key == "train.eval_seeds") c.harness.eval_seeds = parse_seed_list(key, value);
  else if (key == "run.out_dir") c.out_dir = value;
  else throw ConfigError("unknown config key: " + key);
}

}  // namespace

void RunConfig::validate() const {
  harness.validate();
  distill.validate();
  if (distill.feature_levels != harness.levels ||
      distill.decoder_levels != harness.decoder_levels) {
    throw ConfigError("distill level counts must match harness level counts");
  }
  if (out_dir.empty()) throw ConfigError("run.out_dir must be non-empty");
}

bool RunConfig::operator==(const RunConfig& o) const {
  return serialize_config(*this) == serialize_config(o);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  // Keep the derived level counts in lockstep with the harness sizes.
  cfg.distill.feature_levels = cfg.harness.levels;
  cfg.distill.decoder_levels = cfg.harness.decoder_levels;
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_env_overrides(RunConfig& cfg) {
  // ADD_DISTILL_ALPHA_I=2.0 overrides distill.alpha_i, etc.
  static const char* keys[] = {
      "distill.alpha_i", "distill.beta_i", "distill.alpha_v", "distill.beta_v",
      "distill.alpha", "distill.beta", "distill.reduction",
      "harness.grid_h", "harness.grid_w", "harness.levels", "harness.decoder_levels",
      "harness.n_query", "harness.feat_channels", "harness.query_channels",
      "harness.pe_dict", "harness.pe_dim", "harness.heads",
      "harness.min_objects", "harness.max_objects", "harness.d_min", "harness.d_max",
      "harness.corrupt_scale", "harness.corrupt_shift", "harness.noise_sigma",
      "harness.w_cls", "harness.w_box", "harness.task_cls", "harness.task_reg",
      "harness.task_depth", "harness.adapter_decay", "train.lr", "train.steps", "train.seed",
      "train.eval_seeds", "run.out_dir"};
  for (const char* key : keys) {
    std::string env = "ADD_";
    for (const char* p = key; *p; ++p) {
      env += *p == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
    }
    if (const char* v = std::getenv(env.c_str())) apply_key(cfg, key, v);
  }
  cfg.distill.feature_levels = cfg.harness.levels;
  cfg.distill.decoder_levels = cfg.harness.decoder_levels;
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  out << "distill.alpha_i = " << fmt(c.distill.alpha_i) << "\n";
  out << "distill.beta_i = " << fmt(c.distill.beta_i) << "\n";
  out << "distill.alpha_v = " << fmt(c.distill.alpha_v) << "\n";
  out << "distill.beta_v = " << fmt(c.distill.beta_v) << "\n";
  out << "distill.alpha = " << fmt(c.distill.alpha) << "\n";
  out << "distill.beta = " << fmt(c.distill.beta) << "\n";
  out << "distill.reduction = "
      << (c.distill.reduction == Reduction::Raw ? "raw" : "normalized") << "\n";
  out << "harness.grid_h = " << c.harness.grid_h << "\n";
  out << "harness.grid_w = " << c.harness.grid_w << "\n";
  out << "harness.levels = " << c.harness.levels << "\n";
  out << "harness.decoder_levels = " << c.harness.decoder_levels << "\n";
  out << "harness.n_query = " << c.harness.n_query << "\n";
  out << "harness.feat_channels = " << c.harness.feat_channels << "\n";
  out << "harness.query_channels = " << c.harness.query_channels << "\n";
  out << "harness.pe_dict = " << c.harness.pe_dict << "\n";
  out << "harness.pe_dim = " << c.harness.pe_dim << "\n";
  out << "harness.heads = " << c.harness.heads << "\n";
  out << "harness.min_objects = " << c.harness.min_objects << "\n";
  out << "harness.max_objects = " << c.harness.max_objects << "\n";
  out << "harness.d_min = " << fmt(c.harness.d_min) << "\n";
  out << "harness.d_max = " << fmt(c.harness.d_max) << "\n";
  out << "harness.corrupt_scale = " << fmt(c.harness.corrupt_scale) << "\n";
  out << "harness.corrupt_shift = " << fmt(c.harness.corrupt_shift) << "\n";
  out << "harness.noise_sigma = " << fmt(c.harness.noise_sigma) << "\n";
  out << "harness.w_cls = " << fmt(c.harness.w_cls) << "\n";
  out << "harness.w_box = " << fmt(c.harness.w_box) << "\n";
  out << "harness.task_cls = " << fmt(c.harness.task_cls) << "\n";
  out << "harness.task_reg = " << fmt(c.harness.task_reg) << "\n";
  out << "harness.task_depth = " << fmt(c.harness.task_depth) << "\n";
  out << "harness.adapter_decay = " << fmt(c.harness.adapter_decay) << "\n";
  out << "train.lr = " << fmt(c.harness.lr) << "\n";
  out << "train.steps = " << c.harness.steps << "\n";
  out << "train.seed = " << c.harness.seed << "\n";
  out << "train.eval_seeds = ";
  for (std::size_t i = 0; i < c.harness.eval_seeds.size(); ++i) {
    if (i) out << ",";
    out << c.harness.eval_seeds[i];
  }
  out << "\n";
  out << "run.out_dir = " << c.out_dir << "\n";
  return out.str();
}

}  // namespace add
