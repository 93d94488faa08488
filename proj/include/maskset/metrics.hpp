#pragma once

#include <optional>
#include <string>
#include <vector>

#include "maskset/corpus.hpp"
#include "maskset/relabel.hpp"

namespace maskset {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalResult {
  std::vector<std::optional<double>> per_class_dprime;  // nullopt = undefined
  double macro_dprime = 0.0;
  std::size_t n_dprime_undefined = 0;
  std::vector<std::optional<double>> per_class_lwlrap;  // nullopt = no positives
  double macro_lwlrap = 0.0;
  std::size_t n_clips_skipped = 0;  // eval clips with no positive label
  std::vector<std::size_t> n_eval_pos;
  std::vector<std::size_t> n_eval_neg;  // explicit negatives only
};

// Mann-Whitney AUC (wins + 0.5 ties) / (|pos| * |neg|) via sorting.
double roc_auc(const std::vector<double>& pos_scores,
               const std::vector<double>& neg_scores);

// Inverse standard normal CDF, |error| <= 1e-9 over (1e-12, 1-1e-12).
double inv_norm_cdf(double q);

// d' = sqrt(2) * inv_norm_cdf(auc), auc clamped to [1e-6, 1-1e-6].
double dprime(double auc);

// Per-class d' on explicit cells only: positives = ExplicitPositive clips,
// negatives = ExplicitNegative clips, implicit negatives excluded. Classes
// lacking either side are undefined and excluded from the macro mean.
EvalResult dprime_per_class(const ScoreMatrix& scores,
                            const LabelTable& eval_labels);

// Per-class-then-macro lwlrap; score ties broken by ascending class index.
EvalResult lwlrap(const ScoreMatrix& scores, const LabelTable& eval_labels);

// Label-weighted pooled variant (every positive label weighted equally).
double lwlrap_pooled(const ScoreMatrix& scores, const LabelTable& eval_labels);

// Combined d' + lwlrap evaluation.
EvalResult evaluate(const ScoreMatrix& scores, const LabelTable& eval_labels);

// CSV: class_id,n_pos,n_neg_explicit,dprime,lwlrap rows then a macro footer;
// summary file of key=value pairs alongside when summary_path is nonempty.
void write_eval_report(const EvalResult& result, const std::string& path,
                       const std::string& summary_path = "");
EvalResult load_eval_report(const std::string& path);

}  // namespace maskset
