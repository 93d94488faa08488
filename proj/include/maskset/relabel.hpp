#pragma once

#include <string>
#include <vector>

#include "maskset/corpus.hpp"
#include "maskset/netcore.hpp"

namespace maskset {

// Clip-level teacher probabilities, rows aligned with clip_ids.
struct ScoreMatrix {
  std::vector<std::string> clip_ids;
  std::size_t n_classes = 0;
  std::vector<double> values;  // row-major

  std::size_t n_clips() const { return clip_ids.size(); }
  double at(std::size_t clip, std::size_t cls) const {
    return values[clip * n_classes + cls];
  }
};

// Per-class thresholds t_c: k = floor(fraction * n_implicit[c]); t[c] is the
// (k+1)-th largest implicit-negative score (+inf when k = 0, -inf when
// k = n_implicit). counts[c] is the realized strict-greater count, which
// equals k whenever no tie sits at the threshold.
struct ThresholdVector {
  double fraction = 0.0;
  std::vector<double> t;
  std::vector<std::size_t> counts;
};

struct EnhancedLabelSet {
  LabelTable table;
  double fraction = 0.0;
  std::string teacher_id;
};

ScoreMatrix score_split(const ModelParams& teacher, const Corpus& corpus,
                        Split split);
ScoreMatrix score_trainset(const ModelParams& teacher, const Corpus& corpus);

ThresholdVector compute_thresholds(const ScoreMatrix& scores,
                                   const LabelTable& labels, double fraction);

// Cell (i,c) becomes Ignored iff it is ImplicitNegative and score > t[c].
EnhancedLabelSet flag_missing(const LabelTable& labels,
                              const ScoreMatrix& scores,
                              const ThresholdVector& thresholds,
                              const std::string& teacher_id = "");

// Loss mask: M = 0 exactly where the enhanced set is Ignored.
MaskMatrix build_mask(const EnhancedLabelSet& enhanced);

// Copy of `full` with the enhanced set's Ignored cells merged in, so an
// enhanced split table can be applied back to the whole corpus. Throws
// DomainError if the enhanced set names a clip absent from `full`.
LabelTable merge_enhanced(const LabelTable& full,
                          const EnhancedLabelSet& enhanced);

// CSV class_id,clip_id,score,was_injected with the top_k highest-scoring
// Ignored cells per class; was_injected in {0,1} when a log is given, NA else.
void export_audit(const EnhancedLabelSet& enhanced, const ScoreMatrix& scores,
                  std::size_t top_k, const std::string& path,
                  const std::vector<Injection>* injection_log = nullptr);

struct DistillTransform {
  enum class Kind { Identity, Skeptical } kind = Kind::Identity;
  double fraction = 0.0;  // used by Skeptical
};

// Identity: soft teacher targets everywhere, full mask (standard
// distillation). Skeptical(f): hard original labels with the pipeline mask
// at fraction f ("skeptical teacher" view of the main method).
struct DistillTargets {
  std::vector<double> targets;  // n_clips x n_classes, row-major
  MaskMatrix mask;
};

DistillTargets distill_targets(const ScoreMatrix& scores,
                               const LabelTable& labels,
                               const DistillTransform& transform);

// Scores CSV: header clip_id,score_0,...,score_{C-1}, 9 significant digits.
void save_scores(const ScoreMatrix& scores, const std::string& path);
ScoreMatrix load_scores(const std::string& path);

}  // namespace maskset
