#pragma once

#include <optional>
#include <string>
#include <vector>

#include "maskset/corpus.hpp"
#include "maskset/metrics.hpp"
#include "maskset/netcore.hpp"

namespace maskset {

struct SizeSpec {
  std::string name = "large";
  double ratio = 1.0;  // train-clip subsample ratio, stride = round(1/ratio)
};

struct SweepConfig {
  std::vector<double> grid_percent = {0,   0.1, 0.2, 0.4, 0.6, 0.8,
                                      1,   2,   3,   4,   5,   6,
                                      7,   8,   9,   10,  15,  20};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<Capacity> capacities = {Capacity::Linear};
  std::vector<SizeSpec> sizes = {{"large", 1.0}};
  TrainConfig train;
  std::size_t workers = 1;
  std::string results_dir = "results";
};

struct OperatingPoint {
  double fraction_percent = 0.0;
  double dprime_mean = 0.0, dprime_min = 0.0, dprime_max = 0.0;
  double lwlrap_mean = 0.0, lwlrap_min = 0.0, lwlrap_max = 0.0;
  std::vector<double> per_class_lwlrap_mean;
  std::vector<double> per_class_dprime_mean;
  std::size_t n_seeds = 0;
  bool failed = false;
};

struct SweepCurve {
  std::string size;
  Capacity capacity = Capacity::Linear;
  std::vector<OperatingPoint> points;  // one per grid fraction
};

struct SweepResult {
  std::vector<SweepCurve> curves;
  bool any_failed = false;
  std::size_t n_trained = 0;  // models trained in this invocation (0 = resumed)
};

// Trains teacher (= the fraction-0 student) and masked students per
// (size, capacity, seed, fraction), evaluates on the eval split, and writes
// results/<size>/<capacity>/<fraction>/<seed>/ point directories plus
// summary.csv and curves/. Completed points (done marker) are skipped, and
// aggregation always reads the written files, so reruns are idempotent.
SweepResult run_sweep(const Corpus& corpus, const SweepConfig& config);

// Rebuilds curves by scanning an existing results directory for completed
// point directories, so reports need no sweep config. Sizes and capacities
// are discovered from the layout; fractions and seeds from directory names.
SweepResult aggregate_results(const std::string& results_dir);

enum class SweepMetric { DPrime, Lwlrap };

// Point maximizing the seed-mean metric; ties break toward smaller fraction.
const OperatingPoint& best_operating_point(const SweepCurve& curve,
                                           SweepMetric metric,
                                           bool nonzero_only = false);

struct PriorGroupReport {
  struct Group {
    std::string name;  // "large" "medium" "small"
    std::size_t n_classes = 0;
    std::size_t n_improved = 0;
    double pct_improved = 0.0;
    double mean_improvement = 0.0;  // among improved classes
  };
  std::vector<Group> groups;
  // scatter rows: class_id, prior, baseline lwlrap, best lwlrap
  struct ScatterRow {
    std::size_t class_id;
    double prior, baseline, best;
  };
  std::vector<ScatterRow> scatter;
};

// Classes partitioned by prior: large rho > 0.01, small rho < 0.00325,
// medium otherwise (both boundaries land in medium).
PriorGroupReport per_class_report(const OperatingPoint& baseline,
                                  const OperatingPoint& best,
                                  const std::vector<double>& priors);

void write_prior_group_report(const PriorGroupReport& report,
                              const std::string& path);

// Per (size, capacity): CSV fraction_percent,dprime_mean,dprime_min,
// dprime_max,lwlrap_mean,lwlrap_min,lwlrap_max and an SVG twin-axis chart
// with the baseline point marked.
void emit_curves(const SweepResult& result, const std::string& out_dir);

std::string fraction_dir_name(double fraction_percent);

}  // namespace maskset
