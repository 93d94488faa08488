#include "maskset/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "maskset/relabel.hpp"

namespace fs = std::filesystem;

namespace maskset {

std::string fraction_dir_name(double fraction_percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "f%g", fraction_percent);
  return buf;
}

namespace {

std::string seed_dir_name(std::uint64_t seed) {
  return "seed" + std::to_string(seed);
}

// Stride subsample of the train split: clips 0, s, 2s, ... with
// s = round(1/ratio). Deterministic and order-preserving.
std::vector<std::size_t> subsample_train(const Corpus& corpus, double ratio) {
  const auto train = corpus.split_indices(Split::Train);
  if (ratio >= 1.0) return train;
  const std::size_t stride =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1.0 / ratio)));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < train.size(); i += stride) out.push_back(train[i]);
  return out;
}

// Constant optimization budget across corpus sizes: a subsampled run gets its
// epoch count scaled by the inverse ratio, mirroring train-to-convergence.
TrainConfig scaled_train_config(const TrainConfig& base, double ratio,
                                std::uint64_t seed) {
  TrainConfig c = base;
  c.seed = seed;
  if (ratio < 1.0)
    c.epochs = static_cast<std::size_t>(
        std::lround(static_cast<double>(base.epochs) / ratio));
  return c;
}

struct ChainTask {
  std::size_t size_idx, cap_idx, seed_idx;
};

double read_summary_value(const std::string& path, const std::string& key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    if (line.substr(0, eq) == key) return std::stod(line.substr(eq + 3));
  }
  throw ParseError(path + ": missing key " + key);
}

// Builds one OperatingPoint from the completed seed directories under
// fraction_dir; missing seeds mark the point failed. When summary is given,
// one CSV row per completed seed is appended.
OperatingPoint load_point(const fs::path& fraction_dir, double fraction,
                          const std::vector<std::uint64_t>& seeds,
                          std::ofstream* summary, const std::string& size_name,
                          Capacity capacity) {
  OperatingPoint point;
  point.fraction_percent = fraction;
  std::vector<EvalResult> evals;
  char buf[64];
  for (std::uint64_t seed : seeds) {
    const fs::path dir = fraction_dir / seed_dir_name(seed);
    if (!fs::exists(dir / "done")) {
      point.failed = true;
      continue;
    }
    EvalResult eval = load_eval_report((dir / "eval_report.csv").string());
    // summary.txt double-checks the report parse stayed faithful
    (void)read_summary_value((dir / "summary.txt").string(), "macro_lwlrap");
    if (summary) {
      *summary << size_name << ',' << capacity_name(capacity) << ',';
      std::snprintf(buf, sizeof buf, "%g", fraction);
      *summary << buf << ',' << seed << ',';
      std::snprintf(buf, sizeof buf, "%.9g", eval.macro_dprime);
      *summary << buf << ',';
      std::snprintf(buf, sizeof buf, "%.9g", eval.macro_lwlrap);
      *summary << buf << '\n';
    }
    evals.push_back(std::move(eval));
  }
  if (evals.empty()) return point;
  point.n_seeds = evals.size();
  point.dprime_min = point.dprime_max = evals[0].macro_dprime;
  point.lwlrap_min = point.lwlrap_max = evals[0].macro_lwlrap;
  const std::size_t C = evals[0].per_class_lwlrap.size();
  point.per_class_lwlrap_mean.assign(C, 0.0);
  point.per_class_dprime_mean.assign(C, 0.0);
  std::vector<std::size_t> lw_n(C, 0), dp_n(C, 0);
  for (const auto& e : evals) {
    point.dprime_mean += e.macro_dprime;
    point.lwlrap_mean += e.macro_lwlrap;
    point.dprime_min = std::min(point.dprime_min, e.macro_dprime);
    point.dprime_max = std::max(point.dprime_max, e.macro_dprime);
    point.lwlrap_min = std::min(point.lwlrap_min, e.macro_lwlrap);
    point.lwlrap_max = std::max(point.lwlrap_max, e.macro_lwlrap);
    for (std::size_t c = 0; c < C; ++c) {
      if (e.per_class_lwlrap[c]) {
        point.per_class_lwlrap_mean[c] += *e.per_class_lwlrap[c];
        ++lw_n[c];
      }
      if (e.per_class_dprime[c]) {
        point.per_class_dprime_mean[c] += *e.per_class_dprime[c];
        ++dp_n[c];
      }
    }
  }
  point.dprime_mean /= static_cast<double>(evals.size());
  point.lwlrap_mean /= static_cast<double>(evals.size());
  for (std::size_t c = 0; c < C; ++c) {
    if (lw_n[c]) point.per_class_lwlrap_mean[c] /= static_cast<double>(lw_n[c]);
    if (dp_n[c]) point.per_class_dprime_mean[c] /= static_cast<double>(dp_n[c]);
  }
  return point;
}

}  // namespace

SweepResult run_sweep(const Corpus& corpus, const SweepConfig& config) {
  if (config.seeds.empty()) throw ConfigError("sweep: seeds must be nonempty");
  if (std::find(config.grid_percent.begin(), config.grid_percent.end(), 0.0) ==
      config.grid_percent.end())
    throw ConfigError("sweep: grid must contain the 0 baseline");
  for (double f : config.grid_percent)
    if (f < 0.0 || f > 100.0)
      throw ConfigError("sweep: fractions are percentages in [0,100]");

  std::vector<double> grid = config.grid_percent;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const LabelTable eval_labels = split_labels(corpus, Split::Eval);

  SweepResult result;
  std::mutex state_mutex;
  std::vector<ChainTask> chains;
  for (std::size_t s = 0; s < config.sizes.size(); ++s)
    for (std::size_t c = 0; c < config.capacities.size(); ++c)
      for (std::size_t k = 0; k < config.seeds.size(); ++k)
        chains.push_back({s, c, k});

  // One chain = teacher (fraction 0) then its masked students; chains are
  // independent and may run on parallel workers. All state a chain writes
  // lives under its own point directories.
  auto run_chain = [&](const ChainTask& chain) {
    const SizeSpec& size = config.sizes[chain.size_idx];
    const Capacity capacity = config.capacities[chain.cap_idx];
    const std::uint64_t seed = config.seeds[chain.seed_idx];
    const auto subset = subsample_train(corpus, size.ratio);
    const TrainConfig tc = scaled_train_config(config.train, size.ratio, seed);
    const fs::path cap_dir =
        fs::path(config.results_dir) / size.name / capacity_name(capacity);

    auto point_dir = [&](double fraction) {
      return cap_dir / fraction_dir_name(fraction) / seed_dir_name(seed);
    };
    auto is_done = [&](double fraction) {
      return fs::exists(point_dir(fraction) / "done");
    };

    auto evaluate_and_write = [&](const ModelParams& params,
                                  const fs::path& dir) {
      const ScoreMatrix eval_scores = score_split(params, corpus, Split::Eval);
      const EvalResult eval = evaluate(eval_scores, eval_labels);
      write_eval_report(eval, (dir / "eval_report.csv").string(),
                        (dir / "summary.txt").string());
      std::ofstream done(dir / "done", std::ios::binary);
      done << "ok\n";
    };

    // Teacher = fraction-0 student: trained on original labels, full mask.
    const fs::path teacher_dir = point_dir(0.0);
    const std::string teacher_ckpt = (teacher_dir / "model.mpm").string();
    try {
      if (!is_done(0.0)) {
        fs::create_directories(teacher_dir);
        const ModelParams teacher =
            train(corpus, corpus.labels, nullptr, tc, capacity, &subset);
        save_model(teacher, teacher_ckpt, tc);
        // Score and evaluate from the serialized float32 checkpoint so that
        // resumed runs (which must load it) agree bitwise with fresh runs.
        const ModelParams reloaded = load_model(teacher_ckpt);
        evaluate_and_write(reloaded, teacher_dir);
        std::lock_guard<std::mutex> lock(state_mutex);
        ++result.n_trained;
      }
    } catch (const std::exception& e) {
      std::ofstream fail(teacher_dir / "failed", std::ios::binary);
      fail << e.what() << '\n';
      std::lock_guard<std::mutex> lock(state_mutex);
      result.any_failed = true;
      return;  // students need the teacher
    }

    bool need_students = false;
    for (double f : grid)
      if (f != 0.0 && !is_done(f)) need_students = true;
    if (!need_students) return;

    const ModelParams teacher = load_model(teacher_ckpt);
    // Thresholds come from teacher scores over the clips it was trained on.
    ScoreMatrix train_scores;
    LabelTable subset_labels;
    {
      subset_labels.n_classes = corpus.labels.n_classes;
      for (std::size_t i : subset) {
        subset_labels.clip_ids.push_back(corpus.labels.clip_ids[i]);
        for (std::size_t c = 0; c < subset_labels.n_classes; ++c)
          subset_labels.states.push_back(corpus.labels.at(i, c));
        const std::vector<double> p = predict_clip(teacher, corpus.clips[i]);
        train_scores.clip_ids.push_back(corpus.clips[i].id);
        train_scores.values.insert(train_scores.values.end(), p.begin(),
                                   p.end());
      }
      train_scores.n_classes = subset_labels.n_classes;
    }

    for (double f : grid) {
      if (f == 0.0 || is_done(f)) continue;
      const fs::path dir = point_dir(f);
      try {
        fs::create_directories(dir);
        const ThresholdVector thr =
            compute_thresholds(train_scores, subset_labels, f / 100.0);
        const EnhancedLabelSet enhanced =
            flag_missing(subset_labels, train_scores, thr, teacher_ckpt);
        const MaskMatrix subset_mask = build_mask(enhanced);
        // Broadcast the subset mask back to full-corpus clip indexing.
        const std::size_t C = corpus.labels.n_classes;
        MaskMatrix mask = MaskMatrix::all_ones(corpus.labels.n_clips(), C);
        for (std::size_t row = 0; row < subset.size(); ++row)
          for (std::size_t c = 0; c < C; ++c)
            if (!subset_mask.at(row, c))
              mask.values[subset[row] * C + c] = 0;
        const ModelParams student =
            train(corpus, corpus.labels, &mask, tc, capacity, &subset);
        save_model(student, (dir / "model.mpm").string(), tc);
        const ModelParams reloaded = load_model((dir / "model.mpm").string());
        evaluate_and_write(reloaded, dir);
        std::lock_guard<std::mutex> lock(state_mutex);
        ++result.n_trained;
      } catch (const std::exception& e) {
        std::ofstream fail(dir / "failed", std::ios::binary);
        fail << e.what() << '\n';
        std::lock_guard<std::mutex> lock(state_mutex);
        result.any_failed = true;
      }
    }
  };

  if (config.workers <= 1) {
    for (const auto& chain : chains) run_chain(chain);
  } else {
    std::mutex queue_mutex;
    std::size_t next = 0;
    auto worker = [&] {
      while (true) {
        std::size_t mine;
        {
          std::lock_guard<std::mutex> lock(queue_mutex);
          if (next >= chains.size()) return;
          mine = next++;
        }
        run_chain(chains[mine]);
      }
    };
    std::vector<std::thread> pool;
    const std::size_t n_workers = std::min(config.workers, chains.size());
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Aggregate strictly from the written files for resume determinism.
  std::ofstream summary(fs::path(config.results_dir) / "summary.csv",
                        std::ios::binary);
  summary << "size,capacity,fraction_percent,seed,macro_dprime,macro_lwlrap\n";
  for (const auto& size : config.sizes) {
    for (const Capacity capacity : config.capacities) {
      SweepCurve curve;
      curve.size = size.name;
      curve.capacity = capacity;
      for (double f : grid) {
        const fs::path fraction_dir = fs::path(config.results_dir) /
                                      size.name / capacity_name(capacity) /
                                      fraction_dir_name(f);
        OperatingPoint point = load_point(fraction_dir, f, config.seeds,
                                          &summary, size.name, capacity);
        if (point.failed) result.any_failed = true;
        curve.points.push_back(std::move(point));
      }
      result.curves.push_back(std::move(curve));
    }
  }
  emit_curves(result, (fs::path(config.results_dir) / "curves").string());
  return result;
}

SweepResult aggregate_results(const std::string& results_dir) {
  if (!fs::is_directory(results_dir))
    throw ParseError("results directory not found: " + results_dir);
  SweepResult result;
  std::vector<std::string> size_names;
  for (const auto& entry : fs::directory_iterator(results_dir))
    if (entry.is_directory() && entry.path().filename() != "curves")
      size_names.push_back(entry.path().filename().string());
  std::sort(size_names.begin(), size_names.end());
  for (const auto& size_name : size_names) {
    for (const Capacity capacity : {Capacity::Linear, Capacity::Hidden}) {
      const fs::path cap_dir =
          fs::path(results_dir) / size_name / capacity_name(capacity);
      if (!fs::is_directory(cap_dir)) continue;
      SweepCurve curve;
      curve.size = size_name;
      curve.capacity = capacity;
      std::vector<std::pair<double, fs::path>> fractions;
      for (const auto& entry : fs::directory_iterator(cap_dir)) {
        const std::string name = entry.path().filename().string();
        if (!entry.is_directory() || name.empty() || name[0] != 'f') continue;
        try {
          fractions.emplace_back(std::stod(name.substr(1)), entry.path());
        } catch (const std::exception&) {
          throw ParseError("unrecognized fraction directory: " + name);
        }
      }
      std::sort(fractions.begin(), fractions.end());
      for (const auto& [fraction, dir] : fractions) {
        std::vector<std::uint64_t> seeds;
        for (const auto& entry : fs::directory_iterator(dir)) {
          const std::string name = entry.path().filename().string();
          if (entry.is_directory() && name.rfind("seed", 0) == 0)
            seeds.push_back(std::stoull(name.substr(4)));
        }
        std::sort(seeds.begin(), seeds.end());
        OperatingPoint point =
            load_point(dir, fraction, seeds, nullptr, size_name, capacity);
        if (point.failed || point.n_seeds == 0) result.any_failed = true;
        curve.points.push_back(std::move(point));
      }
      if (!curve.points.empty()) result.curves.push_back(std::move(curve));
    }
  }
  if (result.curves.empty())
    throw ParseError("no completed sweep points under: " + results_dir);
  return result;
}

const OperatingPoint& best_operating_point(const SweepCurve& curve,
                                           SweepMetric metric,
                                           bool nonzero_only) {
  const OperatingPoint* best = nullptr;
  for (const auto& p : curve.points) {
    if (p.failed || p.n_seeds == 0) continue;
    if (nonzero_only && p.fraction_percent == 0.0) continue;
    const double v =
        metric == SweepMetric::DPrime ? p.dprime_mean : p.lwlrap_mean;
    if (!best) {
      best = &p;
      continue;
    }
    const double bv =
        metric == SweepMetric::DPrime ? best->dprime_mean : best->lwlrap_mean;
    if (v > bv || (v == bv && p.fraction_percent < best->fraction_percent))
      best = &p;
  }
  if (!best) throw EvalError("best_operating_point: no usable points");
  return *best;
}

PriorGroupReport per_class_report(const OperatingPoint& baseline,
                                  const OperatingPoint& best,
                                  const std::vector<double>& priors) {
  const std::size_t C = priors.size();
  if (baseline.per_class_lwlrap_mean.size() != C ||
      best.per_class_lwlrap_mean.size() != C)
    throw DomainError("per_class_report: prior vector length mismatch");
  PriorGroupReport report;
  PriorGroupReport::Group large{"large", 0, 0, 0.0, 0.0};
  PriorGroupReport::Group medium{"medium", 0, 0, 0.0, 0.0};
  PriorGroupReport::Group small{"small", 0, 0, 0.0, 0.0};
  for (std::size_t c = 0; c < C; ++c) {
    PriorGroupReport::Group* g;
    if (priors[c] > 0.01) g = &large;
    else if (priors[c] < 0.00325) g = &small;
    else g = &medium;
    ++g->n_classes;
    const double delta =
        best.per_class_lwlrap_mean[c] - baseline.per_class_lwlrap_mean[c];
    if (delta > 0.0) {
      ++g->n_improved;
      g->mean_improvement += delta;
    }
    report.scatter.push_back({c, priors[c], baseline.per_class_lwlrap_mean[c],
                              best.per_class_lwlrap_mean[c]});
  }
  for (auto* g : {&large, &medium, &small}) {
    if (g->n_improved) g->mean_improvement /= static_cast<double>(g->n_improved);
    if (g->n_classes)
      g->pct_improved = 100.0 * static_cast<double>(g->n_improved) /
                        static_cast<double>(g->n_classes);
    report.groups.push_back(*g);
  }
  return report;
}

void write_prior_group_report(const PriorGroupReport& report,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  char buf[64];
  out << "group,n_classes,n_improved,pct_improved,mean_improvement\n";
  for (const auto& g : report.groups) {
    out << g.name << ',' << g.n_classes << ',' << g.n_improved << ',';
    std::snprintf(buf, sizeof buf, "%.9g", g.pct_improved);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.9g", g.mean_improvement);
    out << buf << '\n';
  }
  out << "\nclass_id,prior,baseline_lwlrap,best_lwlrap\n";
  for (const auto& row : report.scatter) {
    out << row.class_id << ',';
    std::snprintf(buf, sizeof buf, "%.9g", row.prior);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.9g", row.baseline);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.9g", row.best);
    out << buf << '\n';
  }
}

namespace {

struct SvgScale {
  double lo, hi, pix_lo, pix_hi;
  double operator()(double v) const {
    if (hi == lo) return (pix_lo + pix_hi) / 2;
    return pix_lo + (v - lo) / (hi - lo) * (pix_hi - pix_lo);
  }
};

}  // namespace

void emit_curves(const SweepResult& result, const std::string& out_dir) {
  fs::create_directories(out_dir);
  char buf[128];
  for (const auto& curve : result.curves) {
    const std::string stem =
        curve.size + "_" + capacity_name(curve.capacity);
    {
      std::ofstream csv(fs::path(out_dir) / (stem + ".csv"), std::ios::binary);
      csv << "fraction_percent,dprime_mean,dprime_min,dprime_max,"
             "lwlrap_mean,lwlrap_min,lwlrap_max\n";
      for (const auto& p : curve.points) {
        if (p.n_seeds == 0) continue;
        std::snprintf(buf, sizeof buf, "%g", p.fraction_percent);
        csv << buf;
        for (double v : {p.dprime_mean, p.dprime_min, p.dprime_max,
                         p.lwlrap_mean, p.lwlrap_min, p.lwlrap_max}) {
          std::snprintf(buf, sizeof buf, "%.9g", v);
          csv << ',' << buf;
        }
        csv << '\n';
      }
    }
    // Self-contained twin-axis SVG; x positions are equally spaced in
    // operating-point index rather than in discard fraction.
    std::vector<const OperatingPoint*> pts;
    for (const auto& p : curve.points)
      if (p.n_seeds > 0) pts.push_back(&p);
    std::ofstream svg(fs::path(out_dir) / (stem + ".svg"), std::ios::binary);
    const double W = 720, H = 420, ml = 70, mr = 70, mt = 40, mb = 50;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
        << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H
        << "\">\n";
    svg << "  <title>" << stem << " discard-fraction sweep</title>\n";
    if (!pts.empty()) {
      double dlo = pts[0]->dprime_min, dhi = pts[0]->dprime_max;
      double llo = pts[0]->lwlrap_min, lhi = pts[0]->lwlrap_max;
      for (const auto* p : pts) {
        dlo = std::min(dlo, p->dprime_min);
        dhi = std::max(dhi, p->dprime_max);
        llo = std::min(llo, p->lwlrap_min);
        lhi = std::max(lhi, p->lwlrap_max);
      }
      const double dpad = (dhi - dlo) * 0.08 + 1e-9;
      const double lpad = (lhi - llo) * 0.08 + 1e-9;
      const SvgScale sx{0.0, static_cast<double>(pts.size() - 1), ml, W - mr};
      const SvgScale sd{dlo - dpad, dhi + dpad, H - mb, mt};
      const SvgScale sl{llo - lpad, lhi + lpad, H - mb, mt};
      svg << "  <rect x=\"" << ml << "\" y=\"" << mt << "\" width=\""
          << (W - ml - mr) << "\" height=\"" << (H - mt - mb)
          << "\" fill=\"none\" stroke=\"#888\"/>\n";
      auto polyline = [&](const char* color, auto value, const SvgScale& sy) {
        svg << "  <polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
          std::snprintf(buf, sizeof buf, "%.2f,%.2f ",
                        sx(static_cast<double>(i)), sy(value(pts[i])));
          svg << buf;
        }
        svg << "\"/>\n";
      };
      polyline("#1f77b4", [](const OperatingPoint* p) { return p->dprime_mean; },
               sd);
      polyline("#d62728", [](const OperatingPoint* p) { return p->lwlrap_mean; },
               sl);
      // baseline (fraction 0) marked with squares, one per metric
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i]->fraction_percent != 0.0) continue;
        const double x = sx(static_cast<double>(i));
        for (auto [y, color] :
             {std::pair{sd(pts[i]->dprime_mean), "#1f77b4"},
              std::pair{sl(pts[i]->lwlrap_mean), "#d62728"}}) {
          std::snprintf(buf, sizeof buf,
                        "  <rect x=\"%.2f\" y=\"%.2f\" width=\"8\" "
                        "height=\"8\" fill=\"%s\"/>\n",
                        x - 4, y - 4, color);
          svg << buf;
        }
        svg << "  <text x=\"" << ml << "\" y=\"" << (H - 12)
            << "\" font-size=\"12\">square = baseline (all negatives kept)"
            << "</text>\n";
      }
      for (std::size_t i = 0; i < pts.size(); ++i) {
        std::snprintf(buf, sizeof buf,
                      "  <text x=\"%.2f\" y=\"%.2f\" font-size=\"10\" "
                      "text-anchor=\"middle\">%g</text>\n",
                      sx(static_cast<double>(i)), H - mb + 16,
                      pts[i]->fraction_percent);
        svg << buf;
      }
      svg << "  <text x=\"" << (W / 2) << "\" y=\"" << (H - mb + 34)
          << "\" font-size=\"12\" text-anchor=\"middle\">discarded "
             "top-scored negatives (%)</text>\n";
      svg << "  <text x=\"16\" y=\"" << (H / 2)
          << "\" font-size=\"12\" fill=\"#1f77b4\" transform=\"rotate(-90 16 "
          << (H / 2) << ")\" text-anchor=\"middle\">d-prime</text>\n";
      svg << "  <text x=\"" << (W - 16) << "\" y=\"" << (H / 2)
          << "\" font-size=\"12\" fill=\"#d62728\" transform=\"rotate(90 "
          << (W - 16) << ' ' << (H / 2)
          << ")\" text-anchor=\"middle\">lwlrap</text>\n";
    }
    svg << "</svg>\n";
  }
}

}  // namespace maskset
