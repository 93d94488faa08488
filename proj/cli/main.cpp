// maskset: teacher-student missing-label mitigation pipeline.
//
// Subcommands: synth, train, score, enhance, eval, sweep, audit, report.
// Exit status: 0 success, 1 runtime/partial-sweep failure, 2 usage or
// config error.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maskset/configfile.hpp"
#include "maskset/corpus.hpp"
#include "maskset/metrics.hpp"
#include "maskset/netcore.hpp"
#include "maskset/relabel.hpp"
#include "maskset/sweep.hpp"

namespace fs = std::filesystem;
using namespace maskset;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ConfigFile load_config(const std::string& path) {
  if (path.empty()) return ConfigFile{};
  ConfigFile file = ConfigFile::parse_file(path);
  for (const auto& [key, value] : file.entries()) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    if (section != "synth" && section != "train" && section != "sweep")
      throw ConfigError("unknown config section '" + section + "' in key '" +
                        key + "'");
  }
  return file;
}

// Every run echoes its fully resolved configuration next to its outputs so
// any artifact is reproducible from its directory alone.
void write_resolved(const fs::path& dir, const std::string& command,
                    const std::vector<std::string>& flag_echo,
                    const std::string& sections) {
  fs::create_directories(dir);
  std::ofstream out(dir / (command + "_resolved.cfg"), std::ios::binary);
  out << "# maskset " << command << "\n";
  for (const auto& line : flag_echo) out << "# " << line << "\n";
  out << sections;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Capacity parse_capacity(const std::string& name) {
  const auto cap = capacity_from_name(name);
  if (!cap) throw UsageError("unknown capacity '" + name + "'");
  return *cap;
}

// Rows of `full` matching `ids`, in ids order; unknown ids are an error.
LabelTable labels_for_ids(const LabelTable& full,
                          const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < full.n_clips(); ++i) row_of[full.clip_ids[i]] = i;
  LabelTable out;
  out.n_classes = full.n_classes;
  for (const auto& id : ids) {
    const auto it = row_of.find(id);
    if (it == row_of.end())
      throw ParseError("clip id not in corpus labels: " + id);
    out.clip_ids.push_back(id);
    for (std::size_t c = 0; c < full.n_classes; ++c)
      out.states.push_back(full.at(it->second, c));
  }
  return out;
}

std::vector<std::size_t> stride_subset(const Corpus& corpus, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw UsageError("--subsample ratio must be in (0,1]");
  const auto train = corpus.split_indices(Split::Train);
  if (ratio == 1.0) return train;
  const std::size_t stride =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1.0 / ratio)));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < train.size(); i += stride) out.push_back(train[i]);
  return out;
}

std::string default_results_dir(const std::string& config_value) {
  if (const char* env = std::getenv("MASKSET_RESULTS_DIR"); env && *env)
    return env;
  return config_value;
}

// ---- subcommand bodies ----------------------------------------------------

struct SynthArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int run_synth(const SynthArgs& a) {
  SynthConfig cfg;
  apply_synth_config(load_config(a.config), cfg);
  if (a.seed_set) cfg.seed = a.seed;
  const Corpus corpus = generate_synthetic(cfg);
  save_corpus(corpus, a.out);
  write_resolved(a.out, "synth", {"out = " + a.out}, render_synth_config(cfg));
  std::size_t train_clips = corpus.split_indices(Split::Train).size();
  std::cout << "wrote corpus " << a.out << ": " << corpus.clips.size()
            << " clips (" << train_clips << " train), " << corpus.n_classes()
            << " classes, " << corpus.injection_log.size()
            << " injected missing labels\n";
  return 0;
}

struct TrainArgs {
  std::string config, corpus, out, mask, capacity = "linear";
  std::uint64_t seed = 0;
  bool seed_set = false;
  double subsample = 1.0;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg;
  apply_train_config(load_config(a.config), cfg);
  if (a.seed_set) cfg.seed = a.seed;
  const Capacity capacity = parse_capacity(a.capacity);
  const Corpus corpus = load_corpus(a.corpus);
  const auto subset = stride_subset(corpus, a.subsample);

  LabelTable labels = corpus.labels;
  MaskMatrix mask;
  const MaskMatrix* mask_ptr = nullptr;
  if (!a.mask.empty()) {
    // Enhanced labels CSV: original labels with flagged cells set to IG.
    labels = load_labels(a.mask, corpus.labels.clip_ids,
                         corpus.labels.n_classes);
    EnhancedLabelSet enhanced;
    enhanced.table = labels;
    mask = build_mask(enhanced);
    mask_ptr = &mask;
  }
  const ModelParams params =
      train(corpus, labels, mask_ptr, cfg, capacity, &subset);
  fs::create_directories(a.out);
  const std::string ckpt = (fs::path(a.out) / "model.mpm").string();
  save_model(params, ckpt, cfg);
  write_resolved(a.out, "train",
                 {"corpus = " + a.corpus, "capacity = " + a.capacity,
                  "mask = " + (a.mask.empty() ? std::string("none") : a.mask),
                  "subsample = " + fmt_g(a.subsample)},
                 render_train_config(cfg));
  std::cout << "wrote model " << ckpt << " (" << capacity_name(capacity)
            << ", " << params.n_params() << " parameters, trained on "
            << subset.size() << " clips)\n";
  return 0;
}

struct ScoreArgs {
  std::string model, corpus, out, split = "train";
};

int run_score(const ScoreArgs& a) {
  if (a.split != "train" && a.split != "eval")
    throw UsageError("--split must be train or eval");
  const ModelParams params = load_model(a.model);
  const Corpus corpus = load_corpus(a.corpus);
  const Split split = a.split == "train" ? Split::Train : Split::Eval;
  const ScoreMatrix scores = score_split(params, corpus, split);
  save_scores(scores, a.out);
  write_resolved(fs::path(a.out).parent_path().empty()
                     ? fs::path(".")
                     : fs::path(a.out).parent_path(),
                 "score",
                 {"model = " + a.model, "corpus = " + a.corpus,
                  "split = " + a.split, "out = " + a.out},
                 "");
  std::cout << "wrote scores " << a.out << " (" << scores.n_clips()
            << " clips x " << scores.n_classes << " classes)\n";
  return 0;
}

struct EnhanceArgs {
  std::string corpus, scores, out, teacher;
  double fraction = 0.0;  // percent
};

int run_enhance(const EnhanceArgs& a) {
  if (a.fraction < 0.0 || a.fraction > 100.0)
    throw UsageError("--fraction is a percentage in [0,100]");
  const Corpus corpus = load_corpus(a.corpus);
  const ScoreMatrix scores = load_scores(a.scores);
  const LabelTable scored = labels_for_ids(corpus.labels, scores.clip_ids);
  const ThresholdVector thresholds =
      compute_thresholds(scores, scored, a.fraction / 100.0);
  const EnhancedLabelSet enhanced = flag_missing(
      scored, scores, thresholds,
      a.teacher.empty() ? fs::path(a.scores).filename().string() : a.teacher);

  // The enhanced label set is the full original table with flags merged in,
  // so discarding nothing reproduces the input labels file byte for byte.
  const LabelTable merged = merge_enhanced(corpus.labels, enhanced);
  std::size_t n_flagged = 0;
  for (std::size_t i = 0; i < enhanced.table.n_clips(); ++i)
    for (std::size_t c = 0; c < enhanced.table.n_classes; ++c)
      if (enhanced.table.at(i, c) == LabelState::Ignored) ++n_flagged;
  save_labels(merged, a.out);
  write_resolved(fs::path(a.out).parent_path().empty()
                     ? fs::path(".")
                     : fs::path(a.out).parent_path(),
                 "enhance",
                 {"corpus = " + a.corpus, "scores = " + a.scores,
                  "fraction = " + fmt_g(a.fraction),
                  "teacher = " + enhanced.teacher_id, "out = " + a.out},
                 "");
  std::cout << "wrote enhanced labels " << a.out << " (" << n_flagged
            << " cells flagged at " << fmt_g(a.fraction) << "%)\n";
  return 0;
}

struct EvalArgs {
  std::string model, corpus, out;
  bool pooled = false;
};

int run_eval(const EvalArgs& a) {
  const ModelParams params = load_model(a.model);
  const Corpus corpus = load_corpus(a.corpus);
  const ScoreMatrix scores = score_split(params, corpus, Split::Eval);
  const LabelTable eval_labels = split_labels(corpus, Split::Eval);
  const EvalResult result = evaluate(scores, eval_labels);
  fs::path summary = a.out;
  summary.replace_extension(".summary.txt");
  write_eval_report(result, a.out, summary.string());
  write_resolved(fs::path(a.out).parent_path().empty()
                     ? fs::path(".")
                     : fs::path(a.out).parent_path(),
                 "eval",
                 {"model = " + a.model, "corpus = " + a.corpus,
                  "out = " + a.out},
                 "");
  std::cout << "macro_dprime = " << fmt_g(result.macro_dprime) << "\n";
  std::cout << "macro_lwlrap = " << fmt_g(result.macro_lwlrap) << "\n";
  if (a.pooled)
    std::cout << "pooled_lwlrap = " << fmt_g(lwlrap_pooled(scores, eval_labels))
              << "\n";
  std::cout << "wrote report " << a.out << "\n";
  return 0;
}

struct SweepArgs {
  std::string config, corpus, out, capacity;
  std::vector<double> grid;
  std::vector<std::uint64_t> seeds;
  std::size_t workers = 0;
  double subsample = 0.0;
};

int run_sweep_cmd(const SweepArgs& a) {
  const ConfigFile file = load_config(a.config);
  SweepConfig cfg;
  apply_sweep_config(file, cfg);
  apply_train_config(file, cfg.train);
  if (!a.grid.empty()) cfg.grid_percent = a.grid;
  if (!a.seeds.empty()) cfg.seeds = a.seeds;
  if (!a.capacity.empty()) cfg.capacities = {parse_capacity(a.capacity)};
  if (a.workers > 0) cfg.workers = a.workers;
  if (a.subsample > 0.0) {
    if (a.subsample >= 1.0)
      throw UsageError("--subsample ratio must be in (0,1)");
    cfg.sizes = {{"large", 1.0}, {"small", a.subsample}};
  }
  cfg.results_dir = !a.out.empty() ? a.out : default_results_dir(cfg.results_dir);

  const Corpus corpus = load_corpus(a.corpus);
  write_resolved(cfg.results_dir, "sweep", {"corpus = " + a.corpus},
                 render_sweep_config(cfg) + render_train_config(cfg.train));
  const SweepResult result = run_sweep(corpus, cfg);
  std::cout << "trained " << result.n_trained << " models into "
            << cfg.results_dir << "\n";
  for (const auto& curve : result.curves) {
    const OperatingPoint* baseline = nullptr;
    for (const auto& p : curve.points)
      if (p.fraction_percent == 0.0 && p.n_seeds > 0) baseline = &p;
    if (!baseline) continue;
    const OperatingPoint& best =
        best_operating_point(curve, SweepMetric::Lwlrap);
    std::cout << curve.size << "/" << capacity_name(curve.capacity)
              << ": baseline lwlrap " << fmt_g(baseline->lwlrap_mean)
              << " dprime " << fmt_g(baseline->dprime_mean) << "; best at "
              << fmt_g(best.fraction_percent) << "% lwlrap "
              << fmt_g(best.lwlrap_mean) << " dprime "
              << fmt_g(best.dprime_mean) << "\n";
  }
  if (result.any_failed) {
    std::cerr << "warning: some sweep points failed; see failed markers under "
              << cfg.results_dir << "\n";
    return 1;
  }
  return 0;
}

struct AuditArgs {
  std::string corpus, enhanced, scores, out;
  std::size_t top_k = 50;
};

int run_audit(const AuditArgs& a) {
  const Corpus corpus = load_corpus(a.corpus);
  const ScoreMatrix scores = load_scores(a.scores);
  const LabelTable full =
      load_labels(a.enhanced, corpus.labels.clip_ids, corpus.labels.n_classes);
  EnhancedLabelSet enhanced;
  enhanced.table = labels_for_ids(full, scores.clip_ids);
  enhanced.teacher_id = fs::path(a.scores).filename().string();
  const std::vector<Injection>* log =
      corpus.injection_log.empty() ? nullptr : &corpus.injection_log;
  export_audit(enhanced, scores, a.top_k, a.out, log);
  write_resolved(fs::path(a.out).parent_path().empty()
                     ? fs::path(".")
                     : fs::path(a.out).parent_path(),
                 "audit",
                 {"corpus = " + a.corpus, "enhanced = " + a.enhanced,
                  "scores = " + a.scores,
                  "top_k = " + std::to_string(a.top_k), "out = " + a.out},
                 "");
  std::cout << "wrote audit " << a.out << "\n";
  return 0;
}

struct ReportArgs {
  std::string results, corpus, out, metric = "lwlrap", size, capacity;
};

int run_report(const ReportArgs& a) {
  if (a.metric != "lwlrap" && a.metric != "dprime")
    throw UsageError("--metric must be lwlrap or dprime");
  const std::string results_dir =
      !a.results.empty() ? a.results : default_results_dir("results");
  const Corpus corpus = load_corpus(a.corpus);
  const SweepResult all = aggregate_results(results_dir);
  const SweepCurve* curve = nullptr;
  for (const auto& c : all.curves) {
    if (!a.size.empty() && c.size != a.size) continue;
    if (!a.capacity.empty() && capacity_name(c.capacity) != a.capacity) continue;
    curve = &c;
    break;
  }
  if (!curve) throw UsageError("no matching curve under " + results_dir);
  const OperatingPoint* baseline = nullptr;
  for (const auto& p : curve->points)
    if (p.fraction_percent == 0.0 && p.n_seeds > 0) baseline = &p;
  if (!baseline)
    throw ParseError("no completed baseline (fraction 0) point under " +
                     results_dir);
  const SweepMetric metric =
      a.metric == "dprime" ? SweepMetric::DPrime : SweepMetric::Lwlrap;
  const OperatingPoint& best = best_operating_point(*curve, metric);
  const PriorGroupReport report =
      per_class_report(*baseline, best, corpus.class_priors);
  write_prior_group_report(report, a.out);
  write_resolved(fs::path(a.out).parent_path().empty()
                     ? fs::path(".")
                     : fs::path(a.out).parent_path(),
                 "report",
                 {"results = " + results_dir, "corpus = " + a.corpus,
                  "metric = " + a.metric, "size = " + curve->size,
                  "capacity = " + std::string(capacity_name(curve->capacity)),
                  "out = " + a.out},
                 "");
  std::cout << curve->size << "/" << capacity_name(curve->capacity)
            << " best operating point: " << fmt_g(best.fraction_percent)
            << "% (" << a.metric << ")\n";
  for (const auto& g : report.groups)
    std::cout << g.name << " priors: " << g.n_improved << "/" << g.n_classes
              << " classes improved (" << fmt_g(g.pct_improved)
              << "%), mean improvement " << fmt_g(g.mean_improvement) << "\n";
  std::cout << "wrote report " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maskset: teacher-student missing-label mitigation pipeline"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--config", synth_args.config, "Config file (synth.* keys)");
  synth->add_option("--out", synth_args.out, "Output corpus directory")
      ->required();
  auto* synth_seed =
      synth->add_option("--seed", synth_args.seed, "Override synth.seed");

  TrainArgs train_args;
  auto* train = app.add_subcommand(
      "train", "Train a teacher or student model on a corpus");
  train->add_option("--config", train_args.config, "Config file (train.* keys)");
  train->add_option("--corpus", train_args.corpus, "Corpus directory")
      ->required();
  train->add_option("--out", train_args.out, "Output model directory")
      ->required();
  train->add_option("--mask", train_args.mask,
                    "Enhanced labels CSV; flagged cells are loss-masked");
  train->add_option("--capacity", train_args.capacity,
                    "Model capacity: linear or hidden");
  auto* train_seed =
      train->add_option("--seed", train_args.seed, "Override train.seed");
  train->add_option("--subsample", train_args.subsample,
                    "Train-clip subsample ratio in (0,1]");

  ScoreArgs score_args;
  auto* score =
      app.add_subcommand("score", "Score a split with a trained model");
  score->add_option("--model", score_args.model, "Model checkpoint")->required();
  score->add_option("--corpus", score_args.corpus, "Corpus directory")
      ->required();
  score->add_option("--out", score_args.out, "Output scores CSV")->required();
  score->add_option("--split", score_args.split, "Split: train or eval");

  EnhanceArgs enhance_args;
  auto* enhance = app.add_subcommand(
      "enhance", "Flag top-scored implicit negatives as to-be-ignored");
  enhance->add_option("--corpus", enhance_args.corpus, "Corpus directory")
      ->required();
  enhance->add_option("--scores", enhance_args.scores, "Teacher scores CSV")
      ->required();
  enhance
      ->add_option("--fraction", enhance_args.fraction,
                   "Percent of implicit negatives to flag per class")
      ->required();
  enhance->add_option("--out", enhance_args.out, "Output enhanced labels CSV")
      ->required();
  enhance->add_option("--teacher", enhance_args.teacher,
                      "Teacher id recorded in the resolved config");

  EvalArgs eval_args;
  auto* eval_cmd =
      app.add_subcommand("eval", "Evaluate a model on the eval split");
  eval_cmd->add_option("--model", eval_args.model, "Model checkpoint")
      ->required();
  eval_cmd->add_option("--corpus", eval_args.corpus, "Corpus directory")
      ->required();
  eval_cmd->add_option("--out", eval_args.out, "Output report CSV")->required();
  eval_cmd->add_flag("--pooled", eval_args.pooled,
                     "Also print the label-pooled lwlrap variant");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "Run the discard-fraction grid: teachers, students, reports");
  sweep_cmd->add_option("--config", sweep_args.config,
                        "Config file (sweep.* and train.* keys)");
  sweep_cmd->add_option("--corpus", sweep_args.corpus, "Corpus directory")
      ->required();
  sweep_cmd->add_option("--out", sweep_args.out,
                        "Results directory (overrides MASKSET_RESULTS_DIR)");
  sweep_cmd->add_option("--grid", sweep_args.grid,
                        "Comma list of discard percentages")
      ->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_args.seeds, "Comma list of run seeds")
      ->delimiter(',');
  sweep_cmd->add_option("--capacity", sweep_args.capacity,
                        "Restrict to one capacity: linear or hidden");
  sweep_cmd->add_option("--workers", sweep_args.workers,
                        "Parallel worker threads");
  sweep_cmd->add_option("--subsample", sweep_args.subsample,
                        "Also sweep a subsampled corpus at this ratio");

  AuditArgs audit_args;
  auto* audit = app.add_subcommand(
      "audit", "Export top flagged cells per class for human review");
  audit->add_option("--corpus", audit_args.corpus, "Corpus directory")
      ->required();
  audit->add_option("--enhanced", audit_args.enhanced, "Enhanced labels CSV")
      ->required();
  audit->add_option("--scores", audit_args.scores, "Teacher scores CSV")
      ->required();
  audit->add_option("--out", audit_args.out, "Output audit CSV")->required();
  audit->add_option("--top-k", audit_args.top_k, "Flagged cells per class");

  ReportArgs report_args;
  auto* report = app.add_subcommand(
      "report", "Per-class prior-group report for a finished sweep");
  report->add_option("--results", report_args.results, "Sweep results directory");
  report->add_option("--corpus", report_args.corpus, "Corpus directory")
      ->required();
  report->add_option("--out", report_args.out, "Output report CSV")->required();
  report->add_option("--metric", report_args.metric,
                     "Best-point metric: lwlrap or dprime");
  report->add_option("--size", report_args.size, "Corpus size name to report");
  report->add_option("--capacity", report_args.capacity,
                     "Capacity to report: linear or hidden");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }
  synth_args.seed_set = synth_seed->count() > 0;
  train_args.seed_set = train_seed->count() > 0;

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (train->parsed()) return run_train(train_args);
    if (score->parsed()) return run_score(score_args);
    if (enhance->parsed()) return run_enhance(enhance_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (sweep_cmd->parsed()) return run_sweep_cmd(sweep_args);
    if (audit->parsed()) return run_audit(audit_args);
    if (report->parsed()) return run_report(report_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
