#include "maskset/configfile.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace maskset {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

ConfigFile ConfigFile::parse_text(const std::string& text,
                                  const std::string& origin) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ':' + std::to_string(lineno) +
                        ": expected `section.key = value`");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key.find('.') == std::string::npos)
      throw ConfigError(origin + ':' + std::to_string(lineno) +
                        ": key must be of the form section.key");
    if (cfg.values_.count(key))
      throw ConfigError(origin + ':' + std::to_string(lineno) +
                        ": duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

void ConfigFile::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool ConfigFile::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string ConfigFile::get_string(const std::string& key,
                                   const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" +
                      it->second + "'");
  }
}

std::uint64_t ConfigFile::get_uint(const std::string& key,
                                   std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key +
                      "': expected nonnegative integer, got '" + it->second +
                      "'");
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" +
                    it->second + "'");
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(),
                              [](char c) { return c == ' ' || c == '\t'; }),
               item.end());
    if (item.empty()) throw ConfigError("empty element in list '" + text + "'");
    std::size_t used = 0;
    try {
      out.push_back(std::stod(item, &used));
    } catch (const std::exception&) {
      throw ConfigError("bad list element '" + item + "'");
    }
    if (used != item.size())
      throw ConfigError("bad list element '" + item + "'");
  }
  return out;
}

std::vector<std::uint64_t> parse_uint_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : parse_double_list(text)) {
    if (v < 0 || v != std::floor(v))
      throw ConfigError("expected integer list, got '" + text + "'");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<double> ConfigFile::get_double_list(
    const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_double_list(it->second);
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::vector<std::uint64_t> ConfigFile::get_uint_list(
    const std::string& key, const std::vector<std::uint64_t>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_uint_list(it->second);
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

void ConfigFile::expect_only(const std::vector<std::string>& known_keys) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known_keys.begin(), known_keys.end(), key) ==
        known_keys.end())
      throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string ConfigFile::render() const {
  std::string out;
  for (const auto& [key, value] : values_)
    out += key + " = " + value + "\n";
  return out;
}

namespace {

const std::vector<std::string> kSynthKeys = {
    "synth.n_classes",     "synth.n_clips",
    "synth.feature_dim",   "synth.patches_per_clip",
    "synth.labels_min",    "synth.labels_max",
    "synth.class_skew",    "synth.proto_scale",
    "synth.noise_scale",   "synth.class_sim",
    "synth.group_size",    "synth.explicit_rating_rate",
    "synth.missing_rate",  "synth.eval_fraction",
    "synth.eval_fully_explicit", "synth.seed",
};

const std::vector<std::string> kTrainKeys = {
    "train.learning_rate", "train.beta1",       "train.beta2",
    "train.epsilon",       "train.epochs",      "train.batch_size",
    "train.init_std",      "train.hidden_width", "train.seed",
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void apply_synth_config(const ConfigFile& file, SynthConfig& c) {
  for (const auto& [key, value] : file.entries()) {
    if (key.rfind("synth.", 0) != 0) continue;
    if (std::find(kSynthKeys.begin(), kSynthKeys.end(), key) == kSynthKeys.end())
      throw ConfigError("unknown config key '" + key + "'");
  }
  c.n_classes = file.get_uint("synth.n_classes", c.n_classes);
  c.n_clips = file.get_uint("synth.n_clips", c.n_clips);
  c.feature_dim = file.get_uint("synth.feature_dim", c.feature_dim);
  c.patches_per_clip = file.get_uint("synth.patches_per_clip", c.patches_per_clip);
  c.labels_min = file.get_uint("synth.labels_min", c.labels_min);
  c.labels_max = file.get_uint("synth.labels_max", c.labels_max);
  c.class_skew = file.get_double("synth.class_skew", c.class_skew);
  c.proto_scale = file.get_double("synth.proto_scale", c.proto_scale);
  c.noise_scale = file.get_double("synth.noise_scale", c.noise_scale);
  c.class_sim = file.get_double("synth.class_sim", c.class_sim);
  c.group_size = file.get_uint("synth.group_size", c.group_size);
  c.explicit_rating_rate =
      file.get_double("synth.explicit_rating_rate", c.explicit_rating_rate);
  c.missing_rate = file.get_double("synth.missing_rate", c.missing_rate);
  c.eval_fraction = file.get_double("synth.eval_fraction", c.eval_fraction);
  c.eval_fully_explicit =
      file.get_bool("synth.eval_fully_explicit", c.eval_fully_explicit);
  c.seed = file.get_uint("synth.seed", c.seed);
}

void apply_train_config(const ConfigFile& file, TrainConfig& c) {
  for (const auto& [key, value] : file.entries()) {
    if (key.rfind("train.", 0) != 0) continue;
    if (std::find(kTrainKeys.begin(), kTrainKeys.end(), key) == kTrainKeys.end())
      throw ConfigError("unknown config key '" + key + "'");
  }
  c.learning_rate = file.get_double("train.learning_rate", c.learning_rate);
  c.beta1 = file.get_double("train.beta1", c.beta1);
  c.beta2 = file.get_double("train.beta2", c.beta2);
  c.epsilon = file.get_double("train.epsilon", c.epsilon);
  c.epochs = file.get_uint("train.epochs", c.epochs);
  c.batch_size = file.get_uint("train.batch_size", c.batch_size);
  c.init_std = file.get_double("train.init_std", c.init_std);
  c.hidden_width = file.get_uint("train.hidden_width", c.hidden_width);
  c.seed = file.get_uint("train.seed", c.seed);
}

std::string render_synth_config(const SynthConfig& c) {
  std::string out;
  out += "synth.n_classes = " + std::to_string(c.n_classes) + "\n";
  out += "synth.n_clips = " + std::to_string(c.n_clips) + "\n";
  out += "synth.feature_dim = " + std::to_string(c.feature_dim) + "\n";
  out += "synth.patches_per_clip = " + std::to_string(c.patches_per_clip) + "\n";
  out += "synth.labels_min = " + std::to_string(c.labels_min) + "\n";
  out += "synth.labels_max = " + std::to_string(c.labels_max) + "\n";
  out += "synth.class_skew = " + fmt(c.class_skew) + "\n";
  out += "synth.proto_scale = " + fmt(c.proto_scale) + "\n";
  out += "synth.noise_scale = " + fmt(c.noise_scale) + "\n";
  out += "synth.class_sim = " + fmt(c.class_sim) + "\n";
  out += "synth.group_size = " + std::to_string(c.group_size) + "\n";
  out += "synth.explicit_rating_rate = " + fmt(c.explicit_rating_rate) + "\n";
  out += "synth.missing_rate = " + fmt(c.missing_rate) + "\n";
  out += "synth.eval_fraction = " + fmt(c.eval_fraction) + "\n";
  out += std::string("synth.eval_fully_explicit = ") +
         (c.eval_fully_explicit ? "true" : "false") + "\n";
  out += "synth.seed = " + std::to_string(c.seed) + "\n";
  return out;
}

std::string render_train_config(const TrainConfig& c) {
  std::string out;
  out += "train.learning_rate = " + fmt(c.learning_rate) + "\n";
  out += "train.beta1 = " + fmt(c.beta1) + "\n";
  out += "train.beta2 = " + fmt(c.beta2) + "\n";
  out += "train.epsilon = " + fmt(c.epsilon) + "\n";
  out += "train.epochs = " + std::to_string(c.epochs) + "\n";
  out += "train.batch_size = " + std::to_string(c.batch_size) + "\n";
  out += "train.init_std = " + fmt(c.init_std) + "\n";
  out += "train.hidden_width = " + std::to_string(c.hidden_width) + "\n";
  out += "train.seed = " + std::to_string(c.seed) + "\n";
  return out;
}

namespace {

const std::vector<std::string> kSweepKeys = {
    "sweep.grid",    "sweep.seeds",       "sweep.capacities",
    "sweep.sizes",   "sweep.workers",     "sweep.results_dir",
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

}  // namespace

void apply_sweep_config(const ConfigFile& file, SweepConfig& c) {
  for (const auto& [key, value] : file.entries()) {
    if (key.rfind("sweep.", 0) != 0) continue;
    if (std::find(kSweepKeys.begin(), kSweepKeys.end(), key) == kSweepKeys.end())
      throw ConfigError("unknown config key '" + key + "'");
  }
  c.grid_percent = file.get_double_list("sweep.grid", c.grid_percent);
  c.seeds = file.get_uint_list("sweep.seeds", c.seeds);
  if (file.has("sweep.capacities")) {
    c.capacities.clear();
    for (const auto& name : split_list(file.get_string("sweep.capacities", ""))) {
      const auto cap = capacity_from_name(name);
      if (!cap)
        throw ConfigError("sweep.capacities: unknown capacity '" + name + "'");
      c.capacities.push_back(*cap);
    }
    if (c.capacities.empty())
      throw ConfigError("sweep.capacities: list must be nonempty");
  }
  if (file.has("sweep.sizes")) {
    c.sizes.clear();
    for (const auto& item : split_list(file.get_string("sweep.sizes", ""))) {
      const auto colon = item.find(':');
      if (colon == std::string::npos || colon == 0)
        throw ConfigError("sweep.sizes: expected name:ratio, got '" + item + "'");
      SizeSpec spec;
      spec.name = item.substr(0, colon);
      try {
        std::size_t used = 0;
        spec.ratio = std::stod(item.substr(colon + 1), &used);
        if (used != item.size() - colon - 1)
          throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError("sweep.sizes: bad ratio in '" + item + "'");
      }
      if (!(spec.ratio > 0.0 && spec.ratio <= 1.0))
        throw ConfigError("sweep.sizes: ratio must be in (0,1]");
      c.sizes.push_back(spec);
    }
    if (c.sizes.empty()) throw ConfigError("sweep.sizes: list must be nonempty");
  }
  c.workers = file.get_uint("sweep.workers", c.workers);
  c.results_dir = file.get_string("sweep.results_dir", c.results_dir);
}

std::string render_sweep_config(const SweepConfig& c) {
  std::string out = "sweep.grid = ";
  for (std::size_t i = 0; i < c.grid_percent.size(); ++i)
    out += (i ? "," : "") + fmt(c.grid_percent[i]);
  out += "\nsweep.seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i)
    out += (i ? "," : "") + std::to_string(c.seeds[i]);
  out += "\nsweep.capacities = ";
  for (std::size_t i = 0; i < c.capacities.size(); ++i)
    out += std::string(i ? "," : "") + capacity_name(c.capacities[i]);
  out += "\nsweep.sizes = ";
  for (std::size_t i = 0; i < c.sizes.size(); ++i)
    out += (i ? "," : "") + c.sizes[i].name + ":" + fmt(c.sizes[i].ratio);
  out += "\nsweep.workers = " + std::to_string(c.workers) + "\n";
  out += "sweep.results_dir = " + c.results_dir + "\n";
  return out;
}

}  // namespace maskset
