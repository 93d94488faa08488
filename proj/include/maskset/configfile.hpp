#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "maskset/corpus.hpp"
#include "maskset/netcore.hpp"
#include "maskset/sweep.hpp"

namespace maskset {

// Line-oriented `section.key = value` settings with `#` comments.
class ConfigFile {
 public:
  ConfigFile() = default;
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_text(const std::string& text,
                               const std::string& origin = "<string>");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::uint64_t> get_uint_list(
      const std::string& key, const std::vector<std::uint64_t>& fallback) const;

  // Marks keys consumed; unknown-key detection for strict application.
  void expect_only(const std::vector<std::string>& known_keys) const;

  std::string render() const;  // canonical text form, sorted by key

 private:
  std::map<std::string, std::string> values_;
};

// Applies `synth.*` / `train.*` / `sweep.*` keys onto configs, rejecting
// unknown keys in those sections. Render returns the echo of every field as
// canonical text. sweep.sizes takes name:ratio pairs, e.g. "large:1,small:0.2";
// sweep.capacities takes a comma list of {linear, hidden}.
void apply_synth_config(const ConfigFile& file, SynthConfig& config);
void apply_train_config(const ConfigFile& file, TrainConfig& config);
void apply_sweep_config(const ConfigFile& file, SweepConfig& config);
std::string render_synth_config(const SynthConfig& config);
std::string render_train_config(const TrainConfig& config);
std::string render_sweep_config(const SweepConfig& config);

std::vector<double> parse_double_list(const std::string& text);
std::vector<std::uint64_t> parse_uint_list(const std::string& text);

}  // namespace maskset
