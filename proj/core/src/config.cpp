#include "maf/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "maf/rng.hpp"

namespace maf {

void RunConfig::validate() const {
  if (alpha < 0.0) throw std::invalid_argument("config: alpha must be >= 0");
  if (lr1 <= 0.0 || lr2 <= 0.0) throw std::invalid_argument("config: learning rates must be > 0");
  if (phase1_iters < 0 || phase2_iters < 0) {
    throw std::invalid_argument("config: iteration counts must be >= 0");
  }
  if (align.lambda < 0.0) throw std::invalid_argument("config: align.lambda must be >= 0");
  if (align.srm_s < 1) throw std::invalid_argument("config: align.srm_s must be >= 1");
  if (align.srm_channels < 1) throw std::invalid_argument("config: align.srm_channels must be >= 1");
  for (int b : align.blocks) {
    if (b < 3 || b > 5) {
      throw std::invalid_argument("config: align.blocks entries must be in {3,4,5}");
    }
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return static_cast<int>(x);
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::set<int> parse_blocks(const std::string& key, const std::string& v) {
  std::set<int> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.insert(parse_int(key, trim(item)));
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string blocks_str(const std::set<int>& blocks) {
  std::string s;
  for (int b : blocks) {
    if (!s.empty()) s += ",";
    s += std::to_string(b);
  }
  return s;
}

}  // namespace

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "alpha") cfg.alpha = parse_double(key, value);
  else if (key == "momentum") cfg.momentum = parse_double(key, value);
  else if (key == "lr1") cfg.lr1 = parse_double(key, value);
  else if (key == "lr2") cfg.lr2 = parse_double(key, value);
  else if (key == "phase1_iters") cfg.phase1_iters = parse_int(key, value);
  else if (key == "phase2_iters") cfg.phase2_iters = parse_int(key, value);
  else if (key == "align.blocks") cfg.align.blocks = parse_blocks(key, value);
  else if (key == "align.proposal") cfg.align.proposal = parse_bool(key, value);
  else if (key == "align.lambda") cfg.align.lambda = parse_double(key, value);
  else if (key == "align.srm_s") cfg.align.srm_s = parse_int(key, value);
  else if (key == "align.srm_channels") cfg.align.srm_channels = parse_int(key, value);
  else if (key == "align.reduction") {
    if (value == "mean") cfg.align.reduction = Reduction::Mean;
    else if (value == "sum") cfg.align.reduction = Reduction::Sum;
    else throw std::invalid_argument("config: key 'align.reduction' expects mean|sum, got '" + value + "'");
  }
  else if (key == "align.wgrl") cfg.align.wgrl = parse_bool(key, value);
  else if (key == "align.aggregate") cfg.align.aggregate = parse_bool(key, value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig parse_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: " + path.string() + ":" + std::to_string(line_no) +
                                  ": expected 'key = value', got '" + line + "'");
    }
    apply_config_line(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

std::map<std::string, std::string> resolved_config(const RunConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(cfg.seed);
  kv["alpha"] = fmt_double(cfg.alpha);
  kv["momentum"] = fmt_double(cfg.momentum);
  kv["lr1"] = fmt_double(cfg.lr1);
  kv["lr2"] = fmt_double(cfg.lr2);
  kv["phase1_iters"] = std::to_string(cfg.phase1_iters);
  kv["phase2_iters"] = std::to_string(cfg.phase2_iters);
  kv["align.blocks"] = blocks_str(cfg.align.blocks);
  kv["align.proposal"] = cfg.align.proposal ? "true" : "false";
  kv["align.lambda"] = fmt_double(cfg.align.lambda);
  kv["align.srm_s"] = std::to_string(cfg.align.srm_s);
  kv["align.srm_channels"] = std::to_string(cfg.align.srm_channels);
  kv["align.reduction"] = cfg.align.reduction == Reduction::Mean ? "mean" : "sum";
  kv["align.wgrl"] = cfg.align.wgrl ? "true" : "false";
  kv["align.aggregate"] = cfg.align.aggregate ? "true" : "false";
  return kv;
}

std::string config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : resolved_config(cfg)) {
    out += k + " = " + v + "\n";
  }
  return out;
}

uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(config_text(cfg).c_str()); }

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"source-only", "df", "pf", "maf-star",
                                                 "full", "no-wgrl", "no-aggregate"};
  return names;
}

RunConfig apply_variant(RunConfig cfg, const std::string& variant) {
  if (variant == "source-only") {
    cfg.alpha = 0.0;
  } else if (variant == "df") {
    cfg.align.blocks = {3, 4, 5};
    cfg.align.proposal = false;
  } else if (variant == "pf") {
    cfg.align.blocks = {};
    cfg.align.proposal = true;
  } else if (variant == "maf-star") {
    cfg.align.blocks = {5};
    cfg.align.proposal = true;
  } else if (variant == "full") {
    cfg.align.blocks = {3, 4, 5};
    cfg.align.proposal = true;
  } else if (variant == "no-wgrl") {
    cfg.align.blocks = {5};
    cfg.align.proposal = true;
    cfg.align.wgrl = false;
  } else if (variant == "no-aggregate") {
    cfg.align.blocks = {5};
    cfg.align.proposal = true;
    cfg.align.aggregate = false;
  } else {
    throw std::invalid_argument("unknown variant '" + variant + "'");
  }
  return cfg;
}

}  // namespace maf
