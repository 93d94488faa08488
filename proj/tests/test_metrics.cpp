#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "maskset/metrics.hpp"
#include "maskset/rng.hpp"
#include "test_support.hpp"

using namespace maskset;
using testsupport::Scratch;
using testsupport::make_scores;
using testsupport::make_table;

namespace {

// O(n^2) pair-counting AUC oracle.
double auc_oracle(const std::vector<double>& pos,
                  const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : p == n ? 0.5 : 0.0;
  return wins / (static_cast<double>(pos.size()) *
                 static_cast<double>(neg.size()));
}

// Rank of class c within one clip's scores, ties broken by class index.
std::size_t rank_of(const std::vector<double>& s, std::size_t c) {
  std::size_t r = 1;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s[j] > s[c] || (s[j] == s[c] && j < c)) ++r;
  return r;
}

}  // namespace

TEST_CASE("roc_auc") {
  SUBCASE("hand values") {
    CHECK(roc_auc({0.8, 0.4}, {0.6, 0.2}) == 0.75);
    CHECK(roc_auc({0.5, 0.5}, {0.5, 0.5}) == 0.5);
    CHECK(roc_auc({0.9, 0.8}, {0.2, 0.1}) == 1.0);
    CHECK(roc_auc({0.1}, {0.9}) == 0.0);
  }
  SUBCASE("matches the pair-counting oracle") {
    Rng rng(51);
    for (int it = 0; it < 300; ++it) {
      const bool grid = it % 2 == 0;
      std::vector<double> pos(1 + rng.uniform_int(30));
      std::vector<double> neg(1 + rng.uniform_int(30));
      for (double& v : pos)
        v = grid ? static_cast<double>(rng.uniform_int(8)) / 8.0
                 : rng.uniform();
      for (double& v : neg)
        v = grid ? static_cast<double>(rng.uniform_int(8)) / 8.0
                 : rng.uniform();
      CHECK(roc_auc(pos, neg) ==
            doctest::Approx(auc_oracle(pos, neg)).epsilon(1e-12));
    }
  }
  SUBCASE("empty side throws") {
    CHECK_THROWS_AS(roc_auc({}, {0.5}), EvalError);
    CHECK_THROWS_AS(roc_auc({0.5}, {}), EvalError);
  }
}

TEST_CASE("inv_norm_cdf") {
  SUBCASE("known quantiles") {
    CHECK(inv_norm_cdf(0.5) == 0.0);
    CHECK(inv_norm_cdf(0.9) == doctest::Approx(1.2815515655).epsilon(1e-9));
    CHECK(inv_norm_cdf(0.975) == doctest::Approx(1.9599639845).epsilon(1e-8));
    CHECK(inv_norm_cdf(0.0013498980316301) ==
          doctest::Approx(-3.0).epsilon(1e-8));
  }
  SUBCASE("antisymmetry") {
    for (double q : {0.6, 0.75, 0.9, 0.99, 0.999, 1e-4})
      CHECK(inv_norm_cdf(q) ==
            doctest::Approx(-inv_norm_cdf(1.0 - q)).epsilon(1e-9));
  }
  SUBCASE("strictly increasing") {
    double prev = inv_norm_cdf(1e-6);
    for (double q = 1e-3; q < 1.0 - 1e-4; q += 1e-3) {
      const double z = inv_norm_cdf(q);
      CHECK(z > prev);
      prev = z;
    }
  }
  SUBCASE("domain errors") {
    CHECK_THROWS_AS(inv_norm_cdf(0.0), DomainError);
    CHECK_THROWS_AS(inv_norm_cdf(1.0), DomainError);
    CHECK_THROWS_AS(inv_norm_cdf(-0.2), DomainError);
  }
}

TEST_CASE("dprime") {
  CHECK(dprime(0.5) == 0.0);
  CHECK(dprime(0.9) == doctest::Approx(1.8123876).epsilon(1e-6));
  // chance-level asymmetry around 0.5
  CHECK(dprime(0.3) == doctest::Approx(-dprime(0.7)).epsilon(1e-12));
  // the AUC is clamped before the probit, so the extremes stay finite
  CHECK(dprime(1.0) == dprime(1.0 - 1e-6));
  CHECK(dprime(0.0) == dprime(1e-6));
  CHECK(std::isfinite(dprime(1.0)));
}

TEST_CASE("dprime_per_class") {
  SUBCASE("implicit negatives are excluded from the negative side") {
    // Class 0: EP at 0.9, EN at 0.1; the IN clip scores 0.99 and would
    // drag the AUC to 2/3 if it were counted as a negative.
    const LabelTable labels = make_table({"EP", "EN", "IN"});
    const ScoreMatrix scores = make_scores({{0.9}, {0.1}, {0.99}});
    const EvalResult r = dprime_per_class(scores, labels);
    REQUIRE(r.per_class_dprime[0].has_value());
    CHECK(*r.per_class_dprime[0] == dprime(1.0));
    CHECK(r.n_eval_pos[0] == 1);
    CHECK(r.n_eval_neg[0] == 1);
  }
  SUBCASE("matches roc_auc on explicit cells") {
    Rng rng(52);
    for (int it = 0; it < 50; ++it) {
      const std::size_t n = 6 + rng.uniform_int(30);
      LabelTable labels;
      ScoreMatrix scores;
      labels.n_classes = 2;
      scores.n_classes = 2;
      for (std::size_t i = 0; i < n; ++i) {
        labels.clip_ids.push_back("c" + std::to_string(i));
        scores.clip_ids.push_back("c" + std::to_string(i));
        for (std::size_t c = 0; c < 2; ++c) {
          const double u = rng.uniform();
          labels.states.push_back(u < 0.4 ? LabelState::ExplicitPositive
                                  : u < 0.8 ? LabelState::ExplicitNegative
                                            : LabelState::ImplicitNegative);
          scores.values.push_back(rng.uniform());
        }
      }
      EvalResult r;
      try {
        r = dprime_per_class(scores, labels);
      } catch (const EvalError&) {
        continue;  // no measurable class in this draw
      }
      double macro = 0.0;
      std::size_t defined = 0;
      for (std::size_t c = 0; c < 2; ++c) {
        std::vector<double> pos, neg;
        for (std::size_t i = 0; i < n; ++i) {
          if (labels.at(i, c) == LabelState::ExplicitPositive)
            pos.push_back(scores.at(i, c));
          else if (labels.at(i, c) == LabelState::ExplicitNegative)
            neg.push_back(scores.at(i, c));
        }
        if (pos.empty() || neg.empty()) {
          CHECK(!r.per_class_dprime[c].has_value());
          continue;
        }
        REQUIRE(r.per_class_dprime[c].has_value());
        const double want = dprime(roc_auc(pos, neg));
        CHECK(*r.per_class_dprime[c] == doctest::Approx(want).epsilon(1e-12));
        macro += want;
        ++defined;
      }
      CHECK(r.n_dprime_undefined == 2 - defined);
      CHECK(r.macro_dprime ==
            doctest::Approx(macro / static_cast<double>(defined))
                .epsilon(1e-12));
    }
  }
  SUBCASE("class with one side missing is undefined, not zero") {
    const LabelTable labels = make_table({"EP,EP", "EN,EP"});
    const ScoreMatrix scores = make_scores({{0.9, 0.9}, {0.1, 0.1}});
    const EvalResult r = dprime_per_class(scores, labels);
    CHECK(r.per_class_dprime[0].has_value());
    CHECK(!r.per_class_dprime[1].has_value());
    CHECK(r.n_dprime_undefined == 1);
    CHECK(r.macro_dprime == *r.per_class_dprime[0]);
  }
  SUBCASE("no measurable class throws") {
    const LabelTable labels = make_table({"EP,IN", "IN,EN"});
    const ScoreMatrix scores = make_scores({{0.9, 0.5}, {0.1, 0.5}});
    CHECK_THROWS_AS(dprime_per_class(scores, labels), EvalError);
  }
}

TEST_CASE("lwlrap") {
  SUBCASE("worked example") {
    // clip c0: positives {0,2}, scores rank classes 0,2,1;
    // clip c1: positive {1}, class 1 is ranked second of three.
    const LabelTable labels = make_table({"EP,EN,EP", "EN,EP,EN"});
    const ScoreMatrix scores = make_scores({{0.9, 0.5, 0.8}, {0.7, 0.3, 0.1}});
    const EvalResult r = lwlrap(scores, labels);
    REQUIRE(r.per_class_lwlrap.size() == 3);
    CHECK(*r.per_class_lwlrap[0] == 1.0);
    CHECK(*r.per_class_lwlrap[1] == 0.5);
    CHECK(*r.per_class_lwlrap[2] == 1.0);
    CHECK(r.macro_lwlrap == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK(r.n_clips_skipped == 0);
  }
  SUBCASE("perfect ranking scores one") {
    const LabelTable labels = make_table({"EP,EN,EN", "EN,EP,EN"});
    const ScoreMatrix scores = make_scores({{0.9, 0.2, 0.1}, {0.1, 0.8, 0.3}});
    CHECK(lwlrap(scores, labels).macro_lwlrap == 1.0);
  }
  SUBCASE("single positive ranked last scores 1/C") {
    const LabelTable labels = make_table({"EP,EN,EN,EN"});
    const ScoreMatrix scores = make_scores({{0.1, 0.5, 0.6, 0.7}});
    CHECK(lwlrap(scores, labels).macro_lwlrap == 0.25);
  }
  SUBCASE("ties resolve by ascending class index") {
    const LabelTable labels = make_table({"EN,EN,EP"});
    const ScoreMatrix scores = make_scores({{0.5, 0.5, 0.5}});
    // class 2 loses both ties, landing at rank 3 with 1 positive above
    CHECK(lwlrap(scores, labels).macro_lwlrap ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("invariant under monotone score transforms") {
    Rng rng(53);
    LabelTable labels;
    ScoreMatrix a, b;
    labels.n_classes = 4;
    a.n_classes = 4;
    b.n_classes = 4;
    for (int i = 0; i < 40; ++i) {
      const std::string id = "c" + std::to_string(i);
      labels.clip_ids.push_back(id);
      a.clip_ids.push_back(id);
      b.clip_ids.push_back(id);
      for (int c = 0; c < 4; ++c) {
        labels.states.push_back(rng.uniform() < 0.3
                                    ? LabelState::ExplicitPositive
                                    : LabelState::ExplicitNegative);
        const double s = rng.uniform();
        a.values.push_back(s);
        b.values.push_back(2.0 * s + 1.0);
      }
    }
    const EvalResult ra = lwlrap(a, labels);
    const EvalResult rb = lwlrap(b, labels);
    CHECK(ra.macro_lwlrap == rb.macro_lwlrap);
  }
  SUBCASE("invariant under clip permutation") {
    const LabelTable labels = make_table({"EP,EN", "EN,EP", "EP,EP"});
    const ScoreMatrix scores = make_scores({{0.9, 0.5}, {0.4, 0.6}, {0.2, 0.8}});
    LabelTable labels2;
    ScoreMatrix scores2;
    labels2.n_classes = 2;
    scores2.n_classes = 2;
    for (std::size_t i : {2ul, 0ul, 1ul}) {
      labels2.clip_ids.push_back(labels.clip_ids[i]);
      scores2.clip_ids.push_back(scores.clip_ids[i]);
      for (std::size_t c = 0; c < 2; ++c) {
        labels2.states.push_back(labels.at(i, c));
        scores2.values.push_back(scores.at(i, c));
      }
    }
    CHECK(lwlrap(scores, labels).macro_lwlrap ==
          lwlrap(scores2, labels2).macro_lwlrap);
  }
  SUBCASE("clips without positives are skipped and counted") {
    const LabelTable labels = make_table({"EP,EN", "EN,EN", "IN,IN"});
    const ScoreMatrix scores = make_scores({{0.9, 0.5}, {0.4, 0.6}, {0.5, 0.5}});
    const EvalResult r = lwlrap(scores, labels);
    CHECK(r.n_clips_skipped == 2);
    CHECK(r.macro_lwlrap == 1.0);
  }
  SUBCASE("class without positives is undefined but macro still averages") {
    const LabelTable labels = make_table({"EP,EN", "EP,EN"});
    const ScoreMatrix scores = make_scores({{0.9, 0.5}, {0.4, 0.6}});
    const EvalResult r = lwlrap(scores, labels);
    CHECK(!r.per_class_lwlrap[1].has_value());
    CHECK(r.macro_lwlrap == *r.per_class_lwlrap[0]);
  }
  SUBCASE("no positives anywhere throws") {
    const LabelTable labels = make_table({"EN,EN"});
    const ScoreMatrix scores = make_scores({{0.5, 0.5}});
    CHECK_THROWS_AS(lwlrap(scores, labels), EvalError);
  }
  SUBCASE("matches a rank oracle on random instances") {
    Rng rng(54);
    for (int it = 0; it < 100; ++it) {
      const std::size_t n = 2 + rng.uniform_int(20);
      const std::size_t C = 2 + rng.uniform_int(5);
      LabelTable labels;
      ScoreMatrix scores;
      labels.n_classes = C;
      scores.n_classes = C;
      for (std::size_t i = 0; i < n; ++i) {
        labels.clip_ids.push_back("c" + std::to_string(i));
        scores.clip_ids.push_back("c" + std::to_string(i));
        for (std::size_t c = 0; c < C; ++c) {
          labels.states.push_back(rng.uniform() < 0.35
                                      ? LabelState::ExplicitPositive
                                      : LabelState::ExplicitNegative);
          scores.values.push_back(it % 3 == 0
                                      ? static_cast<double>(rng.uniform_int(4))
                                      : rng.uniform());
        }
      }
      labels.states[0] = LabelState::ExplicitPositive;
      // Oracle: per positive label, precision of positives within the
      // top-ranked classes of its clip.
      std::vector<double> sum(C, 0.0);
      std::vector<std::size_t> cnt(C, 0);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(C);
        for (std::size_t c = 0; c < C; ++c) s[c] = scores.at(i, c);
        for (std::size_t c = 0; c < C; ++c) {
          if (labels.at(i, c) != LabelState::ExplicitPositive) continue;
          const std::size_t r = rank_of(s, c);
          std::size_t pos_above = 0;
          for (std::size_t j = 0; j < C; ++j)
            if (labels.at(i, j) == LabelState::ExplicitPositive &&
                rank_of(s, j) <= r)
              ++pos_above;
          sum[c] += static_cast<double>(pos_above) / static_cast<double>(r);
          ++cnt[c];
        }
      }
      const EvalResult r = lwlrap(scores, labels);
      double macro = 0.0;
      std::size_t defined = 0;
      for (std::size_t c = 0; c < C; ++c) {
        if (cnt[c] == 0) {
          CHECK(!r.per_class_lwlrap[c].has_value());
          continue;
        }
        const double want = sum[c] / static_cast<double>(cnt[c]);
        CHECK(*r.per_class_lwlrap[c] ==
              doctest::Approx(want).epsilon(1e-12));
        macro += want;
        ++defined;
      }
      CHECK(r.macro_lwlrap ==
            doctest::Approx(macro / static_cast<double>(defined))
                .epsilon(1e-12));
    }
  }
}

TEST_CASE("lwlrap_pooled weights labels, not classes") {
  // Class 0 has two positive labels, class 1 has one: pooled averages all
  // three label precisions while the macro averages the two class means.
  const LabelTable labels = make_table({"EP,EN", "EP,EN", "EN,EP"});
  const ScoreMatrix scores = make_scores({{0.9, 0.5}, {0.2, 0.7}, {0.4, 0.6}});
  const EvalResult r = lwlrap(scores, labels);
  const double pooled = lwlrap_pooled(scores, labels);
  double label_sum = 0.0;
  std::size_t label_count = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < 3; ++i)
      if (labels.at(i, c) == LabelState::ExplicitPositive) ++n_pos;
    label_sum += *r.per_class_lwlrap[c] * static_cast<double>(n_pos);
    label_count += n_pos;
  }
  CHECK(pooled ==
        doctest::Approx(label_sum / static_cast<double>(label_count))
            .epsilon(1e-12));
  CHECK(pooled != r.macro_lwlrap);
}

TEST_CASE("evaluate combines both metrics") {
  const LabelTable labels = make_table({"EP,EN", "EN,EP", "EP,EN", "EN,EP"});
  const ScoreMatrix scores =
      make_scores({{0.9, 0.1}, {0.2, 0.8}, {0.7, 0.3}, {0.4, 0.6}});
  const EvalResult r = evaluate(scores, labels);
  const EvalResult d = dprime_per_class(scores, labels);
  const EvalResult l = lwlrap(scores, labels);
  CHECK(r.macro_dprime == d.macro_dprime);
  CHECK(r.macro_lwlrap == l.macro_lwlrap);
  CHECK(r.per_class_dprime == d.per_class_dprime);
  CHECK(r.per_class_lwlrap == l.per_class_lwlrap);
  CHECK(r.n_eval_pos == std::vector<std::size_t>{2, 2});
  CHECK(r.n_eval_neg == std::vector<std::size_t>{2, 2});
}

TEST_CASE("eval report round trip") {
  Scratch scratch("evalreport");
  const LabelTable labels = make_table({"EP,EN,EP", "EN,EP,EN", "EP,EN,IN"});
  const ScoreMatrix scores =
      make_scores({{0.9, 0.5, 0.8}, {0.7, 0.3, 0.1}, {0.6, 0.2, 0.4}});
  const EvalResult r = evaluate(scores, labels);
  write_eval_report(r, scratch.str("report.csv"), scratch.str("summary.txt"));

  const EvalResult back = load_eval_report(scratch.str("report.csv"));
  CHECK(back.per_class_dprime.size() == r.per_class_dprime.size());
  for (std::size_t c = 0; c < r.per_class_dprime.size(); ++c) {
    CHECK(back.per_class_dprime[c].has_value() ==
          r.per_class_dprime[c].has_value());
    if (r.per_class_dprime[c])
      CHECK(*back.per_class_dprime[c] ==
            doctest::Approx(*r.per_class_dprime[c]).epsilon(1e-8));
    if (r.per_class_lwlrap[c])
      CHECK(*back.per_class_lwlrap[c] ==
            doctest::Approx(*r.per_class_lwlrap[c]).epsilon(1e-8));
  }
  CHECK(back.macro_lwlrap == doctest::Approx(r.macro_lwlrap).epsilon(1e-8));
  CHECK(back.n_eval_pos == r.n_eval_pos);
  CHECK(back.n_eval_neg == r.n_eval_neg);

  // Reserializing the loaded report reproduces the file byte for byte.
  write_eval_report(back, scratch.str("report2.csv"));
  CHECK(testsupport::read_file(scratch.path("report.csv")) ==
        testsupport::read_file(scratch.path("report2.csv")));

  const std::string summary = testsupport::read_file(scratch.path("summary.txt"));
  CHECK(summary.find("macro_lwlrap = ") != std::string::npos);
  CHECK(summary.find("macro_dprime = ") != std::string::npos);

  SUBCASE("undefined cells serialize as NA") {
    const LabelTable na_labels = make_table({"EP,EN", "EN,EN"});
    const ScoreMatrix na_scores = make_scores({{0.9, 0.5}, {0.1, 0.6}});
    const EvalResult partial = evaluate(na_scores, na_labels);
    REQUIRE(!partial.per_class_lwlrap[1].has_value());
    write_eval_report(partial, scratch.str("na.csv"));
    const std::string text = testsupport::read_file(scratch.path("na.csv"));
    CHECK(text.find("NA") != std::string::npos);
    const EvalResult loaded = load_eval_report(scratch.str("na.csv"));
    CHECK(!loaded.per_class_lwlrap[1].has_value());
  }
}
