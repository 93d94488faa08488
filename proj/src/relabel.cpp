#include "maskset/relabel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace maskset {

namespace {

void check_aligned(const ScoreMatrix& scores, const LabelTable& labels) {
  if (scores.n_clips() != labels.n_clips() ||
      scores.n_classes != labels.n_classes ||
      scores.clip_ids != labels.clip_ids)
    throw DomainError("scores and labels are not aligned");
}

}  // namespace

ScoreMatrix score_split(const ModelParams& teacher, const Corpus& corpus,
                        Split split) {
  ScoreMatrix out;
  out.n_classes = teacher.n_classes;
  for (std::size_t i : corpus.split_indices(split)) {
    const std::vector<double> p = predict_clip(teacher, corpus.clips[i]);
    out.clip_ids.push_back(corpus.clips[i].id);
    out.values.insert(out.values.end(), p.begin(), p.end());
  }
  return out;
}

ScoreMatrix score_trainset(const ModelParams& teacher, const Corpus& corpus) {
  return score_split(teacher, corpus, Split::Train);
}

ThresholdVector compute_thresholds(const ScoreMatrix& scores,
                                   const LabelTable& labels, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw DomainError("fraction must lie in [0,1]");
  check_aligned(scores, labels);
  const std::size_t C = labels.n_classes;
  ThresholdVector out;
  out.fraction = fraction;
  out.t.resize(C);
  out.counts.resize(C);
  std::vector<double> implicit;
  for (std::size_t c = 0; c < C; ++c) {
    implicit.clear();
    for (std::size_t i = 0; i < labels.n_clips(); ++i)
      if (labels.at(i, c) == LabelState::ImplicitNegative)
        implicit.push_back(scores.at(i, c));
    const std::size_t n = implicit.size();
    const std::size_t k = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(n)));
    double t;
    if (k == 0) {
      t = std::numeric_limits<double>::infinity();
    } else if (k >= n) {
      t = -std::numeric_limits<double>::infinity();
    } else {
      std::sort(implicit.begin(), implicit.end(), std::greater<>());
      t = implicit[k];  // (k+1)-th largest
    }
    std::size_t count = 0;
    for (double s : implicit)
      if (s > t) ++count;
    out.t[c] = t;
    out.counts[c] = count;
  }
  return out;
}

EnhancedLabelSet flag_missing(const LabelTable& labels,
                              const ScoreMatrix& scores,
                              const ThresholdVector& thresholds,
                              const std::string& teacher_id) {
  check_aligned(scores, labels);
  if (thresholds.t.size() != labels.n_classes)
    throw DomainError("thresholds misaligned with labels");
  EnhancedLabelSet out;
  out.table = labels;
  out.fraction = thresholds.fraction;
  out.teacher_id = teacher_id;
  for (std::size_t i = 0; i < labels.n_clips(); ++i)
    for (std::size_t c = 0; c < labels.n_classes; ++c)
      if (labels.at(i, c) == LabelState::ImplicitNegative &&
          scores.at(i, c) > thresholds.t[c])
        out.table.set(i, c, LabelState::Ignored);
  return out;
}

MaskMatrix build_mask(const EnhancedLabelSet& enhanced) {
  const LabelTable& t = enhanced.table;
  MaskMatrix mask = MaskMatrix::all_ones(t.n_clips(), t.n_classes);
  for (std::size_t i = 0; i < t.n_clips(); ++i)
    for (std::size_t c = 0; c < t.n_classes; ++c)
      if (t.at(i, c) == LabelState::Ignored)
        mask.values[i * t.n_classes + c] = 0;
  return mask;
}

LabelTable merge_enhanced(const LabelTable& full,
                          const EnhancedLabelSet& enhanced) {
  if (enhanced.table.n_classes != full.n_classes)
    throw DomainError("merge_enhanced: class count mismatch");
  LabelTable merged = full;
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < merged.n_clips(); ++i)
    row_of[merged.clip_ids[i]] = i;
  const LabelTable& t = enhanced.table;
  for (std::size_t i = 0; i < t.n_clips(); ++i) {
    const auto it = row_of.find(t.clip_ids[i]);
    if (it == row_of.end())
      throw DomainError("merge_enhanced: unknown clip '" + t.clip_ids[i] +
                        "'");
    for (std::size_t c = 0; c < t.n_classes; ++c)
      if (t.at(i, c) == LabelState::Ignored)
        merged.set(it->second, c, LabelState::Ignored);
  }
  return merged;
}

void export_audit(const EnhancedLabelSet& enhanced, const ScoreMatrix& scores,
                  std::size_t top_k, const std::string& path,
                  const std::vector<Injection>* injection_log) {
  if (top_k < 1) throw DomainError("export_audit: top_k must be >= 1");
  const LabelTable& t = enhanced.table;
  check_aligned(scores, t);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << "class_id,clip_id,score,was_injected\n";

  std::vector<std::pair<std::string, std::size_t>> injected;
  if (injection_log)
    for (const auto& inj : *injection_log)
      injected.emplace_back(inj.clip_id, inj.class_id);
  std::sort(injected.begin(), injected.end());

  char buf[64];
  for (std::size_t c = 0; c < t.n_classes; ++c) {
    std::vector<std::size_t> ignored;
    for (std::size_t i = 0; i < t.n_clips(); ++i)
      if (t.at(i, c) == LabelState::Ignored) ignored.push_back(i);
    std::sort(ignored.begin(), ignored.end(), [&](std::size_t a, std::size_t b) {
      if (scores.at(a, c) != scores.at(b, c))
        return scores.at(a, c) > scores.at(b, c);
      return a < b;
    });
    if (ignored.size() > top_k) ignored.resize(top_k);
    for (std::size_t i : ignored) {
      std::snprintf(buf, sizeof buf, "%.9g", scores.at(i, c));
      out << c << ',' << t.clip_ids[i] << ',' << buf << ',';
      if (injection_log) {
        const bool hit = std::binary_search(
            injected.begin(), injected.end(),
            std::make_pair(t.clip_ids[i], c));
        out << (hit ? '1' : '0');
      } else {
        out << "NA";
      }
      out << '\n';
    }
  }
  if (!out) throw ParseError("write failed: " + path);
}

DistillTargets distill_targets(const ScoreMatrix& scores,
                               const LabelTable& labels,
                               const DistillTransform& transform) {
  check_aligned(scores, labels);
  const std::size_t n = labels.n_clips(), C = labels.n_classes;
  DistillTargets out;
  out.targets.resize(n * C);
  if (transform.kind == DistillTransform::Kind::Identity) {
    out.targets = scores.values;
    out.mask = MaskMatrix::all_ones(n, C);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c)
      out.targets[i * C + c] = label_target(labels.at(i, c));
  const ThresholdVector thr =
      compute_thresholds(scores, labels, transform.fraction);
  out.mask = build_mask(flag_missing(labels, scores, thr));
  return out;
}

void save_scores(const ScoreMatrix& scores, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << "clip_id";
  for (std::size_t c = 0; c < scores.n_classes; ++c) out << ",score_" << c;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < scores.n_clips(); ++i) {
    out << scores.clip_ids[i];
    for (std::size_t c = 0; c < scores.n_classes; ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", scores.at(i, c));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw ParseError("write failed: " + path);
}

ScoreMatrix load_scores(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("clip_id", 0) != 0)
    throw ParseError(path + ":1: expected scores header");
  std::size_t n_classes = 0;
  for (char ch : line)
    if (ch == ',') ++n_classes;
  ScoreMatrix out;
  out.n_classes = n_classes;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    if (!std::getline(ss, field, ','))
      throw ParseError(path + ':' + std::to_string(lineno) + ": malformed row");
    out.clip_ids.push_back(field);
    std::size_t found = 0;
    while (std::getline(ss, field, ',')) {
      try {
        out.values.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw ParseError(path + ':' + std::to_string(lineno) +
                         ": bad score '" + field + "'");
      }
      ++found;
    }
    if (found != n_classes)
      throw ParseError(path + ':' + std::to_string(lineno) +
                       ": expected " + std::to_string(n_classes) + " scores");
  }
  return out;
}

}  // namespace maskset
