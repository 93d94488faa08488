#include "maskset/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "maskset/rng.hpp"

namespace maskset {

const char* label_state_code(LabelState s) {
  switch (s) {
    case LabelState::ExplicitPositive: return "EP";
    case LabelState::ExplicitNegative: return "EN";
    case LabelState::ImplicitNegative: return "IN";
    case LabelState::Ignored: return "IG";
  }
  return "??";
}

std::optional<LabelState> label_state_from_code(const std::string& code) {
  if (code == "EP") return LabelState::ExplicitPositive;
  if (code == "EN") return LabelState::ExplicitNegative;
  if (code == "IN") return LabelState::ImplicitNegative;
  if (code == "IG") return LabelState::Ignored;
  return std::nullopt;
}

std::vector<std::size_t> Corpus::split_indices(Split s) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < clips.size(); ++i)
    if (clips[i].split == s) idx.push_back(i);
  return idx;
}

namespace {

void validate(const SynthConfig& c) {
  auto fail = [](const char* field) {
    throw ConfigError(std::string("invalid SynthConfig field: ") + field);
  };
  if (c.n_classes < 1) fail("n_classes");
  if (c.n_clips < 1) fail("n_clips");
  if (c.feature_dim < 1) fail("feature_dim");
  if (c.patches_per_clip < 1) fail("patches_per_clip");
  if (c.labels_min > c.labels_max) fail("labels_min");
  if (c.labels_max > c.n_classes) fail("labels_max");
  if (c.class_skew < 0.0) fail("class_skew");
  if (c.proto_scale <= 0.0) fail("proto_scale");
  if (c.noise_scale < 0.0) fail("noise_scale");
  if (c.class_sim < 0.0 || c.class_sim >= 1.0) fail("class_sim");
  if (c.group_size < 1) fail("group_size");
  if (c.explicit_rating_rate < 0.0 || c.explicit_rating_rate > 1.0)
    fail("explicit_rating_rate");
  if (c.missing_rate < 0.0 || c.missing_rate > 1.0) fail("missing_rate");
  if (c.eval_fraction < 0.0 || c.eval_fraction >= 1.0) fail("eval_fraction");
}

// Class prototypes composed from per-group orthonormal frames: every class in
// a group has exact cosine sim^2 with its siblings, so class confusability is
// a controlled property of the config rather than an accident of the draw.
std::vector<std::vector<double>> make_prototypes(const SynthConfig& c, Rng& rng) {
  const std::size_t D = c.feature_dim;
  auto draw_unit = [&](const std::vector<std::vector<double>>& against) {
    std::vector<double> v(D);
    while (true) {
      for (auto& x : v) x = rng.gauss();
      for (const auto& b : against) {
        double dot = 0.0;
        for (std::size_t d = 0; d < D; ++d) dot += v[d] * b[d];
        for (std::size_t d = 0; d < D; ++d) v[d] -= dot * b[d];
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      if (norm > 1e-12) {
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
        return v;
      }
    }
  };

  std::vector<std::vector<double>> protos(c.n_classes);
  const double amp = c.proto_scale * std::sqrt(static_cast<double>(D));
  const double along = c.class_sim;
  const double across = std::sqrt(1.0 - along * along);
  for (std::size_t g = 0; g * c.group_size < c.n_classes; ++g) {
    std::vector<std::vector<double>> basis;
    basis.push_back(draw_unit({}));
    const std::vector<double> center = basis.front();
    const std::size_t lo = g * c.group_size;
    const std::size_t hi = std::min(lo + c.group_size, c.n_classes);
    for (std::size_t cls = lo; cls < hi; ++cls) {
      basis.push_back(draw_unit(basis));
      const auto& unique = basis.back();
      auto& p = protos[cls];
      p.resize(D);
      for (std::size_t d = 0; d < D; ++d)
        p[d] = amp * (along * center[d] + across * unique[d]);
    }
  }
  return protos;
}

std::string clip_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%06zu", i);
  return buf;
}

}  // namespace

Corpus generate_synthetic(const SynthConfig& config) {
  validate(config);
  Rng rng(config.seed);
  const std::size_t C = config.n_classes, N = config.n_clips;
  const std::size_t D = config.feature_dim, K = config.patches_per_clip;
  const std::size_t n_eval =
      static_cast<std::size_t>(std::lround(config.eval_fraction * static_cast<double>(N)));
  const std::size_t n_train = N - n_eval;

  const auto protos = make_prototypes(config, rng);

  std::vector<double> weights(C);
  for (std::size_t c = 0; c < C; ++c)
    weights[c] = std::pow(static_cast<double>(c + 1), -config.class_skew);

  Corpus corpus;
  corpus.labels.clip_ids.reserve(N);
  corpus.labels.n_classes = C;
  corpus.labels.states.assign(N * C, LabelState::ImplicitNegative);
  LabelTable truth;
  truth.n_classes = C;
  truth.states.assign(N * C, LabelState::ExplicitNegative);
  corpus.clips.reserve(N);

  std::vector<double> base(D);
  for (std::size_t i = 0; i < N; ++i) {
    Clip clip;
    clip.id = clip_name(i);
    clip.dim = D;
    clip.split = i < n_train ? Split::Train : Split::Eval;

    const std::size_t span = config.labels_max - config.labels_min + 1;
    const std::size_t n_labels =
        config.labels_min + static_cast<std::size_t>(rng.uniform_int(span));
    std::vector<std::size_t> chosen;
    std::vector<double> w = weights;
    for (std::size_t pick = 0; pick < n_labels; ++pick) {
      double total = 0.0;
      for (double x : w) total += x;
      double r = rng.uniform() * total;
      std::size_t sel = C - 1;
      for (std::size_t c = 0; c < C; ++c) {
        r -= w[c];
        if (r < 0.0) { sel = c; break; }
      }
      chosen.push_back(sel);
      w[sel] = 0.0;
    }
    for (std::size_t c : chosen)
      truth.states[i * C + c] = LabelState::ExplicitPositive;

    std::fill(base.begin(), base.end(), 0.0);
    if (!chosen.empty()) {
      for (std::size_t c : chosen)
        for (std::size_t d = 0; d < D; ++d) base[d] += protos[c][d];
      for (std::size_t d = 0; d < D; ++d)
        base[d] /= static_cast<double>(chosen.size());
    }
    clip.patches.resize(K * D);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t d = 0; d < D; ++d)
        clip.patches[k * D + d] =
            static_cast<float>(base[d] + config.noise_scale * rng.gauss());

    const bool is_eval = clip.split == Split::Eval;
    for (std::size_t c = 0; c < C; ++c) {
      const bool pos = truth.states[i * C + c] == LabelState::ExplicitPositive;
      LabelState out;
      if (pos) {
        if (is_eval || rng.uniform() < 1.0 - config.missing_rate) {
          out = LabelState::ExplicitPositive;
        } else {
          out = LabelState::ImplicitNegative;
          corpus.injection_log.push_back({clip.id, c});
        }
      } else {
        const bool explicit_neg =
            (is_eval && config.eval_fully_explicit) ||
            rng.uniform() < config.explicit_rating_rate;
        out = explicit_neg ? LabelState::ExplicitNegative
                           : LabelState::ImplicitNegative;
      }
      corpus.labels.states[i * C + c] = out;
    }

    corpus.labels.clip_ids.push_back(clip.id);
    corpus.clips.push_back(std::move(clip));
  }
  truth.clip_ids = corpus.labels.clip_ids;
  corpus.truth = std::move(truth);
  corpus.class_priors = class_priors(corpus);
  return corpus;
}

std::vector<double> class_priors(const Corpus& corpus) {
  if (corpus.clips.empty()) throw DomainError("class_priors: empty corpus");
  const LabelTable& src = corpus.truth ? *corpus.truth : corpus.labels;
  const std::size_t C = src.n_classes;
  std::vector<double> priors(C, 0.0);
  for (std::size_t i = 0; i < src.n_clips(); ++i)
    for (std::size_t c = 0; c < C; ++c)
      if (src.at(i, c) == LabelState::ExplicitPositive) priors[c] += 1.0;
  for (auto& p : priors) p /= static_cast<double>(src.n_clips());
  return priors;
}

LabelTable split_labels(const Corpus& corpus, Split split) {
  LabelTable table;
  table.n_classes = corpus.labels.n_classes;
  for (std::size_t i : corpus.split_indices(split)) {
    table.clip_ids.push_back(corpus.labels.clip_ids[i]);
    for (std::size_t c = 0; c < table.n_classes; ++c)
      table.states.push_back(corpus.labels.at(i, c));
  }
  return table;
}

void save_labels(const LabelTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << "clip_id,class_id,state\n";
  // clip_ids are emitted in lexicographic order with class ascending inside
  std::vector<std::size_t> order(table.n_clips());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return table.clip_ids[a] < table.clip_ids[b];
  });
  for (std::size_t i : order)
    for (std::size_t c = 0; c < table.n_classes; ++c) {
      const LabelState s = table.at(i, c);
      if (s == LabelState::ImplicitNegative) continue;  // default state
      out << table.clip_ids[i] << ',' << c << ',' << label_state_code(s) << '\n';
    }
  if (!out) throw ParseError("write failed: " + path);
}

namespace {

struct LabelRow {
  std::string clip_id;
  std::size_t class_id;
  LabelState state;
  std::size_t lineno;
};

std::vector<LabelRow> parse_label_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "clip_id,class_id,state")
    throw ParseError(path + ":1: expected header clip_id,class_id,state");
  std::vector<LabelRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string clip, cls, code;
    if (!std::getline(ss, clip, ',') || !std::getline(ss, cls, ',') ||
        !std::getline(ss, code))
      throw ParseError(path + ':' + std::to_string(lineno) + ": malformed row");
    std::size_t class_id = 0;
    try {
      class_id = std::stoul(cls);
    } catch (const std::exception&) {
      throw ParseError(path + ':' + std::to_string(lineno) +
                       ": bad class id '" + cls + "'");
    }
    const auto state = label_state_from_code(code);
    if (!state)
      throw ParseError(path + ':' + std::to_string(lineno) +
                       ": unknown state code '" + code + "'");
    rows.push_back({clip, class_id, *state, lineno});
  }
  return rows;
}

}  // namespace

LabelTable load_labels(const std::string& path) {
  const auto rows = parse_label_rows(path);
  std::map<std::string, std::size_t> clip_index;
  std::size_t n_classes = 0;
  for (const auto& r : rows) {
    clip_index.emplace(r.clip_id, 0);
    n_classes = std::max(n_classes, r.class_id + 1);
  }
  LabelTable table;
  table.n_classes = n_classes;
  table.clip_ids.reserve(clip_index.size());
  for (auto& [id, idx] : clip_index) {
    idx = table.clip_ids.size();
    table.clip_ids.push_back(id);
  }
  table.states.assign(table.n_clips() * n_classes, LabelState::ImplicitNegative);
  std::vector<bool> seen(table.states.size(), false);
  for (const auto& r : rows) {
    const std::size_t cell = clip_index[r.clip_id] * n_classes + r.class_id;
    if (seen[cell])
      throw ParseError(path + ':' + std::to_string(r.lineno) +
                       ": duplicate cell (" + r.clip_id + ", " +
                       std::to_string(r.class_id) + ")");
    seen[cell] = true;
    table.states[cell] = r.state;
  }
  return table;
}

LabelTable load_labels(const std::string& path,
                       const std::vector<std::string>& clip_ids,
                       std::size_t n_classes) {
  const auto rows = parse_label_rows(path);
  std::map<std::string, std::size_t> clip_index;
  for (std::size_t i = 0; i < clip_ids.size(); ++i) clip_index[clip_ids[i]] = i;
  LabelTable table;
  table.clip_ids = clip_ids;
  table.n_classes = n_classes;
  table.states.assign(clip_ids.size() * n_classes, LabelState::ImplicitNegative);
  std::vector<bool> seen(table.states.size(), false);
  for (const auto& r : rows) {
    const auto it = clip_index.find(r.clip_id);
    if (it == clip_index.end())
      throw ParseError(path + ':' + std::to_string(r.lineno) +
                       ": unknown clip_id '" + r.clip_id + "'");
    if (r.class_id >= n_classes)
      throw ParseError(path + ':' + std::to_string(r.lineno) + ": class id " +
                       std::to_string(r.class_id) + " out of range");
    const std::size_t cell = it->second * n_classes + r.class_id;
    if (seen[cell])
      throw ParseError(path + ':' + std::to_string(r.lineno) +
                       ": duplicate cell (" + r.clip_id + ", " +
                       std::to_string(r.class_id) + ")");
    seen[cell] = true;
    table.states[cell] = r.state;
  }
  return table;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(path + ": truncated file");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 |
         static_cast<std::uint32_t>(b[3]) << 24;
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(std::istream& in, const std::string& path) {
  const std::uint32_t bits = get_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_features(const std::vector<Clip>& clips, Split split,
                   const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  std::vector<const Clip*> sel;
  for (const auto& c : clips)
    if (c.split == split) sel.push_back(&c);
  const std::uint32_t dim = sel.empty() ? 0 : static_cast<std::uint32_t>(sel[0]->dim);
  out.write("MLC1", 4);
  put_u32(out, static_cast<std::uint32_t>(sel.size()));
  put_u32(out, dim);
  for (const Clip* c : sel) {
    if (c->dim != dim)
      throw ParseError("save_features: inconsistent feature dimension");
    put_u32(out, static_cast<std::uint32_t>(c->id.size()));
    out.write(c->id.data(), static_cast<std::streamsize>(c->id.size()));
    put_u32(out, static_cast<std::uint32_t>(c->n_patches()));
    for (float v : c->patches) put_f32(out, v);
  }
  if (!out) throw ParseError("write failed: " + path);
}

std::vector<Clip> load_features(const std::string& path, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MLC1", 4) != 0)
    throw ParseError(path + ": bad magic, expected MLC1");
  const std::uint32_t n_clips = get_u32(in, path);
  const std::uint32_t dim = get_u32(in, path);
  std::vector<Clip> clips;
  clips.reserve(n_clips);
  for (std::uint32_t i = 0; i < n_clips; ++i) {
    Clip clip;
    clip.dim = dim;
    clip.split = split;
    const std::uint32_t id_len = get_u32(in, path);
    clip.id.resize(id_len);
    if (!in.read(clip.id.data(), id_len))
      throw ParseError(path + ": truncated file");
    const std::uint32_t k = get_u32(in, path);
    if (k == 0) throw ParseError(path + ": clip with zero patches");
    clip.patches.resize(static_cast<std::size_t>(k) * dim);
    for (auto& v : clip.patches) v = get_f32(in, path);
    clips.push_back(std::move(clip));
  }
  char extra;
  if (in.read(&extra, 1))
    throw ParseError(path + ": trailing bytes after last clip");
  return clips;
}

void save_injections(const std::vector<Injection>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << "clip_id,class_id\n";
  for (const auto& inj : log)
    out << inj.clip_id << ',' << inj.class_id << '\n';
  if (!out) throw ParseError("write failed: " + path);
}

std::vector<Injection> load_injections(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "clip_id,class_id")
    throw ParseError(path + ":1: expected header clip_id,class_id");
  std::vector<Injection> log;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError(path + ':' + std::to_string(lineno) + ": malformed row");
    try {
      log.push_back({line.substr(0, comma), std::stoul(line.substr(comma + 1))});
    } catch (const std::exception&) {
      throw ParseError(path + ':' + std::to_string(lineno) + ": bad class id");
    }
  }
  return log;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_features(corpus.clips, Split::Train, dir + "/features_train.bin");
  save_features(corpus.clips, Split::Eval, dir + "/features_eval.bin");
  save_labels(corpus.labels, dir + "/labels.csv");
  if (corpus.truth) save_labels(*corpus.truth, dir + "/truth.csv");
  save_injections(corpus.injection_log, dir + "/injections.csv");
  std::ofstream pri(dir + "/priors.csv", std::ios::binary);
  pri << "class_id,prior\n";
  char buf[64];
  for (std::size_t c = 0; c < corpus.class_priors.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", c, corpus.class_priors[c]);
    pri << buf;
  }
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  Corpus corpus;
  corpus.clips = load_features(dir + "/features_train.bin", Split::Train);
  auto eval_clips = load_features(dir + "/features_eval.bin", Split::Eval);
  corpus.clips.insert(corpus.clips.end(),
                      std::make_move_iterator(eval_clips.begin()),
                      std::make_move_iterator(eval_clips.end()));
  std::vector<std::string> roster;
  roster.reserve(corpus.clips.size());
  for (const auto& c : corpus.clips) roster.push_back(c.id);

  std::size_t n_classes = 0;
  if (fs::exists(dir + "/priors.csv")) {
    std::ifstream pri(dir + "/priors.csv", std::ios::binary);
    std::string line;
    std::getline(pri, line);  // header
    while (std::getline(pri, line))
      if (!line.empty()) ++n_classes;
  }
  if (n_classes == 0) {
    const LabelTable probe = load_labels(dir + "/labels.csv");
    n_classes = probe.n_classes;
  }
  corpus.labels = load_labels(dir + "/labels.csv", roster, n_classes);
  if (fs::exists(dir + "/truth.csv"))
    corpus.truth = load_labels(dir + "/truth.csv", roster, n_classes);
  if (fs::exists(dir + "/injections.csv"))
    corpus.injection_log = load_injections(dir + "/injections.csv");
  corpus.class_priors = class_priors(corpus);
  return corpus;
}

}  // namespace maskset
