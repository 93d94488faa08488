// Python bindings for the maskset core. Containers cross the boundary as
// plain lists/tuples so the module has no numpy dependency.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "maskset/configfile.hpp"
#include "maskset/corpus.hpp"
#include "maskset/metrics.hpp"
#include "maskset/netcore.hpp"
#include "maskset/relabel.hpp"
#include "maskset/sweep.hpp"

namespace py = pybind11;
using namespace maskset;

namespace {

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "eval") return Split::Eval;
  throw ConfigError("split must be 'train' or 'eval', got '" + name + "'");
}

Capacity capacity_arg(const std::string& name) {
  const auto cap = capacity_from_name(name);
  if (!cap) throw ConfigError("capacity must be 'linear' or 'hidden'");
  return *cap;
}

std::string state_code_at(const LabelTable& t, std::size_t clip,
                          std::size_t cls) {
  if (clip >= t.n_clips() || cls >= t.n_classes)
    throw DomainError("label index out of range");
  return label_state_code(t.at(clip, cls));
}

void set_state_code(LabelTable& t, std::size_t clip, std::size_t cls,
                    const std::string& code) {
  if (clip >= t.n_clips() || cls >= t.n_classes)
    throw DomainError("label index out of range");
  const auto state = label_state_from_code(code);
  if (!state) throw DomainError("unknown state code '" + code + "'");
  t.set(clip, cls, *state);
}

LabelTable make_table(const std::vector<std::string>& clip_ids,
                      std::size_t n_classes) {
  LabelTable t;
  t.clip_ids = clip_ids;
  t.n_classes = n_classes;
  t.states.assign(clip_ids.size() * n_classes, LabelState::ImplicitNegative);
  return t;
}

}  // namespace

PYBIND11_MODULE(pymaskset, m) {
  m.doc() =
      "Teacher-student missing-label mitigation: synthetic corpora with "
      "oracle-known injected missing labels, masked-loss training, "
      "teacher-score relabeling, d'/lwlrap evaluation, and discard-fraction "
      "sweeps.";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<ParseError>(m, "ParseError");
  py::register_exception<DomainError>(m, "DomainError");
  py::register_exception<EvalError>(m, "EvalError");
  py::register_exception<DivergenceError>(m, "DivergenceError");

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("n_classes", &SynthConfig::n_classes)
      .def_readwrite("n_clips", &SynthConfig::n_clips)
      .def_readwrite("feature_dim", &SynthConfig::feature_dim)
      .def_readwrite("patches_per_clip", &SynthConfig::patches_per_clip)
      .def_readwrite("labels_min", &SynthConfig::labels_min)
      .def_readwrite("labels_max", &SynthConfig::labels_max)
      .def_readwrite("class_skew", &SynthConfig::class_skew)
      .def_readwrite("proto_scale", &SynthConfig::proto_scale)
      .def_readwrite("noise_scale", &SynthConfig::noise_scale)
      .def_readwrite("class_sim", &SynthConfig::class_sim)
      .def_readwrite("group_size", &SynthConfig::group_size)
      .def_readwrite("explicit_rating_rate", &SynthConfig::explicit_rating_rate)
      .def_readwrite("missing_rate", &SynthConfig::missing_rate)
      .def_readwrite("eval_fraction", &SynthConfig::eval_fraction)
      .def_readwrite("eval_fully_explicit", &SynthConfig::eval_fully_explicit)
      .def_readwrite("seed", &SynthConfig::seed);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("beta1", &TrainConfig::beta1)
      .def_readwrite("beta2", &TrainConfig::beta2)
      .def_readwrite("epsilon", &TrainConfig::epsilon)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("init_std", &TrainConfig::init_std)
      .def_readwrite("hidden_width", &TrainConfig::hidden_width)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<LabelTable>(m, "LabelTable")
      .def(py::init(&make_table), py::arg("clip_ids"), py::arg("n_classes"))
      .def_readonly("clip_ids", &LabelTable::clip_ids)
      .def_readonly("n_classes", &LabelTable::n_classes)
      .def_property_readonly("n_clips", &LabelTable::n_clips)
      .def("state", &state_code_at, py::arg("clip"), py::arg("cls"),
           "Two-letter state code: EP, EN, IN, or IG")
      .def("set_state", &set_state_code, py::arg("clip"), py::arg("cls"),
           py::arg("code"))
      .def("__eq__",
           [](const LabelTable& a, const LabelTable& b) { return a == b; });

  py::class_<Corpus>(m, "Corpus")
      .def_readonly("labels", &Corpus::labels)
      .def_readonly("truth", &Corpus::truth)
      .def_readonly("class_priors", &Corpus::class_priors)
      .def_property_readonly("n_classes", &Corpus::n_classes)
      .def_property_readonly(
          "n_clips", [](const Corpus& c) { return c.clips.size(); })
      .def_property_readonly("injection_log",
                             [](const Corpus& c) {
                               std::vector<std::pair<std::string, std::size_t>>
                                   out;
                               for (const auto& inj : c.injection_log)
                                 out.emplace_back(inj.clip_id, inj.class_id);
                               return out;
                             })
      .def(
          "split_clip_ids",
          [](const Corpus& c, const std::string& split) {
            std::vector<std::string> ids;
            for (std::size_t i : c.split_indices(split_from_name(split)))
              ids.push_back(c.clips[i].id);
            return ids;
          },
          py::arg("split"));

  m.def("generate_synthetic", &generate_synthetic, py::arg("config"));
  m.def("save_corpus", &save_corpus, py::arg("corpus"), py::arg("dir"));
  m.def("load_corpus", &load_corpus, py::arg("dir"));
  m.def(
      "split_labels",
      [](const Corpus& c, const std::string& split) {
        return split_labels(c, split_from_name(split));
      },
      py::arg("corpus"), py::arg("split"));

  py::class_<ModelParams>(m, "ModelParams")
      .def_property_readonly(
          "capacity",
          [](const ModelParams& p) { return capacity_name(p.capacity); })
      .def_readonly("n_classes", &ModelParams::n_classes)
      .def_readonly("dim", &ModelParams::dim)
      .def_readonly("hidden", &ModelParams::hidden)
      .def_property_readonly("n_params", &ModelParams::n_params)
      .def("__eq__",
           [](const ModelParams& a, const ModelParams& b) { return a == b; });

  m.def(
      "train",
      [](const Corpus& corpus, const TrainConfig& config,
         const std::string& capacity,
         const std::optional<LabelTable>& enhanced) {
        if (!enhanced)
          return train(corpus, corpus.labels, nullptr, config,
                       capacity_arg(capacity));
        EnhancedLabelSet set;
        set.table = *enhanced;
        const MaskMatrix mask = build_mask(set);
        return train(corpus, *enhanced, &mask, config, capacity_arg(capacity));
      },
      py::arg("corpus"), py::arg("config"), py::arg("capacity") = "linear",
      py::arg("enhanced") = py::none(),
      "Deterministic Adam training; pass enhanced labels (with IG cells) to "
      "train a masked student.");
  m.def("save_model", &save_model, py::arg("params"), py::arg("path"),
        py::arg("config"));
  m.def("load_model", &load_model, py::arg("path"));

  py::class_<ScoreMatrix>(m, "ScoreMatrix")
      .def_readonly("clip_ids", &ScoreMatrix::clip_ids)
      .def_readonly("n_classes", &ScoreMatrix::n_classes)
      .def_property_readonly("n_clips", &ScoreMatrix::n_clips)
      .def("at", &ScoreMatrix::at, py::arg("clip"), py::arg("cls"))
      .def(
          "row",
          [](const ScoreMatrix& s, std::size_t clip) {
            if (clip >= s.n_clips()) throw DomainError("row out of range");
            return std::vector<double>(
                s.values.begin() + clip * s.n_classes,
                s.values.begin() + (clip + 1) * s.n_classes);
          },
          py::arg("clip"));

  m.def(
      "score",
      [](const ModelParams& model, const Corpus& corpus,
         const std::string& split) {
        return score_split(model, corpus, split_from_name(split));
      },
      py::arg("model"), py::arg("corpus"), py::arg("split") = "eval");
  m.def("save_scores", &save_scores, py::arg("scores"), py::arg("path"));
  m.def("load_scores", &load_scores, py::arg("path"));

  py::class_<ThresholdVector>(m, "ThresholdVector")
      .def_readonly("fraction", &ThresholdVector::fraction)
      .def_readonly("t", &ThresholdVector::t)
      .def_readonly("counts", &ThresholdVector::counts);

  py::class_<EnhancedLabelSet>(m, "EnhancedLabelSet")
      .def_readonly("table", &EnhancedLabelSet::table)
      .def_readonly("fraction", &EnhancedLabelSet::fraction)
      .def_readonly("teacher_id", &EnhancedLabelSet::teacher_id);

  py::class_<MaskMatrix>(m, "MaskMatrix")
      .def_readonly("n_clips", &MaskMatrix::n_clips)
      .def_readonly("n_classes", &MaskMatrix::n_classes)
      .def("at", &MaskMatrix::at, py::arg("clip"), py::arg("cls"));

  m.def("compute_thresholds", &compute_thresholds, py::arg("scores"),
        py::arg("labels"), py::arg("fraction"));
  m.def("flag_missing", &flag_missing, py::arg("labels"), py::arg("scores"),
        py::arg("thresholds"), py::arg("teacher_id") = "");
  m.def("build_mask", &build_mask, py::arg("enhanced"));
  m.def("merge_enhanced", &merge_enhanced, py::arg("full"),
        py::arg("enhanced"),
        "Copy of `full` with the enhanced set's Ignored cells merged in.");
  m.def(
      "export_audit",
      [](const EnhancedLabelSet& enhanced, const ScoreMatrix& scores,
         std::size_t top_k, const std::string& path,
         const std::optional<std::vector<std::pair<std::string, std::size_t>>>&
             injection_log) {
        if (!injection_log)
          return export_audit(enhanced, scores, top_k, path);
        std::vector<Injection> log;
        for (const auto& [clip_id, class_id] : *injection_log)
          log.push_back({clip_id, class_id});
        export_audit(enhanced, scores, top_k, path, &log);
      },
      py::arg("enhanced"), py::arg("scores"), py::arg("top_k"), py::arg("path"),
      py::arg("injection_log") = py::none());

  py::class_<EvalResult>(m, "EvalResult")
      .def_readonly("per_class_dprime", &EvalResult::per_class_dprime)
      .def_readonly("macro_dprime", &EvalResult::macro_dprime)
      .def_readonly("n_dprime_undefined", &EvalResult::n_dprime_undefined)
      .def_readonly("per_class_lwlrap", &EvalResult::per_class_lwlrap)
      .def_readonly("macro_lwlrap", &EvalResult::macro_lwlrap)
      .def_readonly("n_clips_skipped", &EvalResult::n_clips_skipped)
      .def_readonly("n_eval_pos", &EvalResult::n_eval_pos)
      .def_readonly("n_eval_neg", &EvalResult::n_eval_neg);

  m.def("roc_auc", &roc_auc, py::arg("pos_scores"), py::arg("neg_scores"));
  m.def("inv_norm_cdf", &inv_norm_cdf, py::arg("q"));
  m.def("dprime", &dprime, py::arg("auc"));
  m.def("evaluate", &evaluate, py::arg("scores"), py::arg("eval_labels"));
  m.def("lwlrap_pooled", &lwlrap_pooled, py::arg("scores"),
        py::arg("eval_labels"));
  m.def("write_eval_report", &write_eval_report, py::arg("result"),
        py::arg("path"), py::arg("summary_path") = "");

  py::class_<SizeSpec>(m, "SizeSpec")
      .def(py::init([](const std::string& name, double ratio) {
             return SizeSpec{name, ratio};
           }),
           py::arg("name"), py::arg("ratio"))
      .def_readwrite("name", &SizeSpec::name)
      .def_readwrite("ratio", &SizeSpec::ratio);

  py::class_<SweepConfig>(m, "SweepConfig")
      .def(py::init<>())
      .def_readwrite("grid_percent", &SweepConfig::grid_percent)
      .def_readwrite("seeds", &SweepConfig::seeds)
      .def_property(
          "capacities",
          [](const SweepConfig& c) {
            std::vector<std::string> out;
            for (Capacity cap : c.capacities) out.push_back(capacity_name(cap));
            return out;
          },
          [](SweepConfig& c, const std::vector<std::string>& names) {
            c.capacities.clear();
            for (const auto& n : names) c.capacities.push_back(capacity_arg(n));
          })
      .def_readwrite("sizes", &SweepConfig::sizes)
      .def_readwrite("train", &SweepConfig::train)
      .def_readwrite("workers", &SweepConfig::workers)
      .def_readwrite("results_dir", &SweepConfig::results_dir);

  py::class_<OperatingPoint>(m, "OperatingPoint")
      .def_readonly("fraction_percent", &OperatingPoint::fraction_percent)
      .def_readonly("dprime_mean", &OperatingPoint::dprime_mean)
      .def_readonly("dprime_min", &OperatingPoint::dprime_min)
      .def_readonly("dprime_max", &OperatingPoint::dprime_max)
      .def_readonly("lwlrap_mean", &OperatingPoint::lwlrap_mean)
      .def_readonly("lwlrap_min", &OperatingPoint::lwlrap_min)
      .def_readonly("lwlrap_max", &OperatingPoint::lwlrap_max)
      .def_readonly("per_class_lwlrap_mean",
                    &OperatingPoint::per_class_lwlrap_mean)
      .def_readonly("n_seeds", &OperatingPoint::n_seeds)
      .def_readonly("failed", &OperatingPoint::failed);

  py::class_<SweepCurve>(m, "SweepCurve")
      .def_readonly("size", &SweepCurve::size)
      .def_property_readonly(
          "capacity",
          [](const SweepCurve& c) { return capacity_name(c.capacity); })
      .def_readonly("points", &SweepCurve::points);

  py::class_<SweepResult>(m, "SweepResult")
      .def_readonly("curves", &SweepResult::curves)
      .def_readonly("any_failed", &SweepResult::any_failed)
      .def_readonly("n_trained", &SweepResult::n_trained);

  m.def("run_sweep", &run_sweep, py::arg("corpus"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("aggregate_results", &aggregate_results, py::arg("results_dir"));
  m.def(
      "best_operating_point",
      [](const SweepCurve& curve, const std::string& metric,
         bool nonzero_only) {
        if (metric != "lwlrap" && metric != "dprime")
          throw ConfigError("metric must be 'lwlrap' or 'dprime'");
        return best_operating_point(curve,
                                    metric == "dprime" ? SweepMetric::DPrime
                                                       : SweepMetric::Lwlrap,
                                    nonzero_only);
      },
      py::arg("curve"), py::arg("metric") = "lwlrap",
      py::arg("nonzero_only") = false);
}
