#include "maskset/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace maskset {

double roc_auc(const std::vector<double>& pos_scores,
               const std::vector<double>& neg_scores) {
  if (pos_scores.empty() || neg_scores.empty())
    throw EvalError("roc_auc: empty score list");
  // Doubled ranks keep tie handling in exact integer arithmetic: a tied group
  // spanning sorted positions [i, j] (0-based) gets doubled rank i + j + 2.
  struct Entry {
    double score;
    bool pos;
  };
  std::vector<Entry> all;
  all.reserve(pos_scores.size() + neg_scores.size());
  for (double s : pos_scores) all.push_back({s, true});
  for (double s : neg_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });
  unsigned long long rank2_sum_pos = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1].score == all[i].score) ++j;
    const unsigned long long rank2 = i + j + 2;
    for (std::size_t k = i; k <= j; ++k)
      if (all[k].pos) rank2_sum_pos += rank2;
    i = j + 1;
  }
  const unsigned long long np = pos_scores.size(), nn = neg_scores.size();
  // U2 = 2*U = rank2_sum_pos - np*(np+1); auc = U2 / (2*np*nn)
  const unsigned long long u2 = rank2_sum_pos - np * (np + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(np) *
                                    static_cast<double>(nn));
}

namespace {

// Acklam's rational approximation to the normal quantile (abs error ~1.15e-9),
// refined by one Halley step against 0.5*erfc(-z/sqrt(2)).
double acklam(double q) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double q_low = 0.02425;
  if (q < q_low) {
    const double r = std::sqrt(-2.0 * std::log(q));
    return (((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
           ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
  }
  const double r = q - 0.5;
  const double s = r * r;
  return (((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) * r /
         (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kSqrt2Pi = 2.50662827463100050242;

double halley_refine(double z, double q) {
  // F(z) = Phi(z) - q, with Phi evaluated via erfc for left-tail accuracy.
  const double phi_z = 0.5 * std::erfc(-z * kInvSqrt2);
  const double pdf = std::exp(-0.5 * z * z) / kSqrt2Pi;
  if (pdf <= 0.0) return z;
  const double e = phi_z - q;
  const double u = e / pdf;
  return z - u / (1.0 + 0.5 * z * u);
}

}  // namespace

double inv_norm_cdf(double q) {
  if (!(q > 0.0 && q < 1.0))
    throw DomainError("inv_norm_cdf: q must lie in (0,1)");
  if (q == 0.5) return 0.0;
  // Work on the lower tail where 1-q is exact (Sterbenz) and erfc is stable;
  // symmetry then gives inv(1-q) == -inv(q) exactly.
  const bool upper = q > 0.5;
  const double ql = upper ? 1.0 - q : q;
  double z = acklam(ql);
  z = halley_refine(z, ql);
  return upper ? -z : z;
}

double dprime(double auc) {
  constexpr double eps = 1e-6;
  const double clamped = std::min(1.0 - eps, std::max(eps, auc));
  return std::sqrt(2.0) * inv_norm_cdf(clamped);
}

EvalResult dprime_per_class(const ScoreMatrix& scores,
                            const LabelTable& eval_labels) {
  if (scores.n_clips() != eval_labels.n_clips() ||
      scores.n_classes != eval_labels.n_classes)
    throw DomainError("dprime_per_class: misaligned inputs");
  const std::size_t C = eval_labels.n_classes;
  EvalResult r;
  r.per_class_dprime.resize(C);
  r.n_eval_pos.assign(C, 0);
  r.n_eval_neg.assign(C, 0);
  double sum = 0.0;
  std::size_t defined = 0;
  std::vector<double> pos, neg;
  for (std::size_t c = 0; c < C; ++c) {
    pos.clear();
    neg.clear();
    for (std::size_t i = 0; i < eval_labels.n_clips(); ++i) {
      switch (eval_labels.at(i, c)) {
        case LabelState::ExplicitPositive: pos.push_back(scores.at(i, c)); break;
        case LabelState::ExplicitNegative: neg.push_back(scores.at(i, c)); break;
        default: break;  // implicit negatives and ignored cells excluded
      }
    }
    r.n_eval_pos[c] = pos.size();
    r.n_eval_neg[c] = neg.size();
    if (pos.empty() || neg.empty()) {
      ++r.n_dprime_undefined;
      continue;
    }
    const double d = dprime(roc_auc(pos, neg));
    r.per_class_dprime[c] = d;
    sum += d;
    ++defined;
  }
  if (defined == 0) throw EvalError("dprime_per_class: no class is measurable");
  r.macro_dprime = sum / static_cast<double>(defined);
  return r;
}

namespace {

// Per-clip ranking walk shared by both lwlrap variants. For each positive
// label c of a clip: precision = positives ranked at or above c / rank of c.
template <typename Visit>
void lwlrap_walk(const ScoreMatrix& scores, const LabelTable& labels,
                 std::size_t clip, Visit&& visit) {
  const std::size_t C = labels.n_classes;
  std::vector<std::size_t> order(C);
  for (std::size_t c = 0; c < C; ++c) order[c] = c;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores.at(clip, a), sb = scores.at(clip, b);
    if (sa != sb) return sa > sb;
    return a < b;  // tie: ascending class index
  });
  std::size_t cum_pos = 0;
  for (std::size_t rank = 1; rank <= C; ++rank) {
    const std::size_t c = order[rank - 1];
    if (labels.at(clip, c) == LabelState::ExplicitPositive) {
      ++cum_pos;
      visit(c, static_cast<double>(cum_pos) / static_cast<double>(rank));
    }
  }
}

}  // namespace

EvalResult lwlrap(const ScoreMatrix& scores, const LabelTable& eval_labels) {
  if (scores.n_clips() != eval_labels.n_clips() ||
      scores.n_classes != eval_labels.n_classes)
    throw DomainError("lwlrap: misaligned inputs");
  const std::size_t C = eval_labels.n_classes;
  EvalResult r;
  r.per_class_lwlrap.resize(C);
  r.n_eval_pos.assign(C, 0);
  r.n_eval_neg.assign(C, 0);
  std::vector<double> sums(C, 0.0);
  std::vector<std::size_t> counts(C, 0);
  for (std::size_t i = 0; i < eval_labels.n_clips(); ++i) {
    bool any_pos = false;
    for (std::size_t c = 0; c < C; ++c)
      if (eval_labels.at(i, c) == LabelState::ExplicitPositive) {
        any_pos = true;
        break;
      }
    if (!any_pos) {
      ++r.n_clips_skipped;
      continue;
    }
    lwlrap_walk(scores, eval_labels, i, [&](std::size_t c, double prec) {
      sums[c] += prec;
      ++counts[c];
    });
  }
  double total = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < C; ++c) {
    r.n_eval_pos[c] = counts[c];
    if (counts[c] == 0) continue;
    const double v = sums[c] / static_cast<double>(counts[c]);
    r.per_class_lwlrap[c] = v;
    total += v;
    ++defined;
  }
  if (defined == 0) throw EvalError("lwlrap: no class has positive labels");
  r.macro_lwlrap = total / static_cast<double>(defined);
  return r;
}

double lwlrap_pooled(const ScoreMatrix& scores, const LabelTable& eval_labels) {
  double sum = 0.0;
  std::size_t n_labels = 0;
  for (std::size_t i = 0; i < eval_labels.n_clips(); ++i)
    lwlrap_walk(scores, eval_labels, i, [&](std::size_t, double prec) {
      sum += prec;
      ++n_labels;
    });
  if (n_labels == 0) throw EvalError("lwlrap_pooled: no positive labels");
  return sum / static_cast<double>(n_labels);
}

EvalResult evaluate(const ScoreMatrix& scores, const LabelTable& eval_labels) {
  EvalResult d = dprime_per_class(scores, eval_labels);
  EvalResult l = lwlrap(scores, eval_labels);
  d.per_class_lwlrap = std::move(l.per_class_lwlrap);
  d.macro_lwlrap = l.macro_lwlrap;
  d.n_clips_skipped = l.n_clips_skipped;
  return d;
}

void write_eval_report(const EvalResult& result, const std::string& path,
                       const std::string& summary_path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << "class_id,n_pos,n_neg_explicit,dprime,lwlrap\n";
  char buf[64];
  const std::size_t C = result.per_class_lwlrap.size();
  for (std::size_t c = 0; c < C; ++c) {
    out << c << ',' << result.n_eval_pos[c] << ',' << result.n_eval_neg[c]
        << ',';
    if (c < result.per_class_dprime.size() && result.per_class_dprime[c]) {
      std::snprintf(buf, sizeof buf, "%.9g", *result.per_class_dprime[c]);
      out << buf;
    } else {
      out << "NA";
    }
    out << ',';
    if (result.per_class_lwlrap[c]) {
      std::snprintf(buf, sizeof buf, "%.9g", *result.per_class_lwlrap[c]);
      out << buf;
    } else {
      out << "NA";
    }
    out << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.9g", result.macro_dprime);
  out << "macro,,," << buf << ',';
  std::snprintf(buf, sizeof buf, "%.9g", result.macro_lwlrap);
  out << buf << '\n';
  if (!out) throw ParseError("write failed: " + path);

  if (!summary_path.empty()) {
    std::ofstream sum(summary_path, std::ios::binary);
    std::snprintf(buf, sizeof buf, "%.9g", result.macro_dprime);
    sum << "macro_dprime = " << buf << '\n';
    std::snprintf(buf, sizeof buf, "%.9g", result.macro_lwlrap);
    sum << "macro_lwlrap = " << buf << '\n';
    sum << "n_dprime_undefined = " << result.n_dprime_undefined << '\n';
    sum << "n_clips_skipped = " << result.n_clips_skipped << '\n';
  }
}

EvalResult load_eval_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "class_id,n_pos,n_neg_explicit,dprime,lwlrap")
    throw ParseError(path + ":1: expected eval report header");
  EvalResult r;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cls, npos, nneg, dp, lw;
    if (!std::getline(ss, cls, ',') || !std::getline(ss, npos, ',') ||
        !std::getline(ss, nneg, ',') || !std::getline(ss, dp, ',') ||
        !std::getline(ss, lw))
      throw ParseError(path + ':' + std::to_string(lineno) + ": malformed row");
    if (cls == "macro") {
      r.macro_dprime = std::stod(dp);
      r.macro_lwlrap = std::stod(lw);
      continue;
    }
    r.n_eval_pos.push_back(npos.empty() ? 0 : std::stoul(npos));
    r.n_eval_neg.push_back(nneg.empty() ? 0 : std::stoul(nneg));
    if (dp == "NA") {
      r.per_class_dprime.push_back(std::nullopt);
      ++r.n_dprime_undefined;
    } else {
      r.per_class_dprime.push_back(std::stod(dp));
    }
    r.per_class_lwlrap.push_back(lw == "NA"
                                     ? std::optional<double>()
                                     : std::optional<double>(std::stod(lw)));
  }
  return r;
}

}  // namespace maskset
