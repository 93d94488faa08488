#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskset {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Label provenance states. Ignored is produced only by the relabel module.
enum class LabelState : std::uint8_t {
  ExplicitPositive,
  ExplicitNegative,
  ImplicitNegative,
  Ignored,
};

const char* label_state_code(LabelState s);                 // "EP" "EN" "IN" "IG"
std::optional<LabelState> label_state_from_code(const std::string& code);

// Training target y_c for the masked loss: positive iff ExplicitPositive.
inline double label_target(LabelState s) {
  return s == LabelState::ExplicitPositive ? 1.0 : 0.0;
}

// Dense clip x class state matrix with a clip-id roster for file alignment.
struct LabelTable {
  std::vector<std::string> clip_ids;
  std::size_t n_classes = 0;
  std::vector<LabelState> states;  // row-major, n_clips x n_classes

  std::size_t n_clips() const { return clip_ids.size(); }
  LabelState at(std::size_t clip, std::size_t cls) const {
    return states[clip * n_classes + cls];
  }
  void set(std::size_t clip, std::size_t cls, LabelState s) {
    states[clip * n_classes + cls] = s;
  }
  bool operator==(const LabelTable&) const = default;
};

enum class Split : std::uint8_t { Train, Eval };

struct Clip {
  std::string id;
  std::size_t dim = 0;              // D
  std::vector<float> patches;       // patch-major, n_patches x dim
  Split split = Split::Train;

  std::size_t n_patches() const { return dim == 0 ? 0 : patches.size() / dim; }
  const float* patch(std::size_t k) const { return patches.data() + k * dim; }
};

struct Injection {
  std::string clip_id;
  std::size_t class_id;
  bool operator==(const Injection&) const = default;
};

struct Corpus {
  std::vector<Clip> clips;
  LabelTable labels;
  std::optional<LabelTable> truth;      // exhaustive ground truth (synthetic)
  std::vector<Injection> injection_log; // cells demoted to ImplicitNegative
  std::vector<double> class_priors;     // rho_c over all clips

  std::size_t n_classes() const { return labels.n_classes; }
  std::vector<std::size_t> split_indices(Split s) const;
};

struct SynthConfig {
  std::size_t n_classes = 20;
  std::size_t n_clips = 8000;
  std::size_t feature_dim = 32;
  std::size_t patches_per_clip = 3;
  std::size_t labels_min = 0;       // labels per clip, uniform in [min, max]
  std::size_t labels_max = 2;
  double class_skew = 0.3;          // class c weight (c+1)^-skew
  double proto_scale = 1.0;         // prototype separation scale
  double noise_scale = 1.2;         // per-patch Gaussian noise
  double class_sim = 0.8;           // within-group prototype similarity in [0,1)
  std::size_t group_size = 4;       // classes per similarity group
  double explicit_rating_rate = 0.005;  // true negatives rated explicitly
  double missing_rate = 0.3;        // rho_miss: train positives demoted to IN
  double eval_fraction = 0.375;     // tail fraction of clips held out for eval
  bool eval_fully_explicit = true;  // false: eval negatives also mostly implicit
  std::uint64_t seed = 511;
};

// Deterministic synthetic corpus with oracle-known injected missing labels.
Corpus generate_synthetic(const SynthConfig& config);

// rho_c from truth when present, else from ExplicitPositive counts.
std::vector<double> class_priors(const Corpus& corpus);

// Label-table rows of one split, in corpus clip order.
LabelTable split_labels(const Corpus& corpus, Split split);

// Labels CSV: header clip_id,class_id,state; absent cells default to IN.
void save_labels(const LabelTable& table, const std::string& path);
LabelTable load_labels(const std::string& path);
// Alignment-preserving load against a known clip roster and class count.
LabelTable load_labels(const std::string& path,
                       const std::vector<std::string>& clip_ids,
                       std::size_t n_classes);

// Features file: magic MLC1, u32 n_clips, u32 D, then per clip
// u32 id_len, id bytes, u32 K, K x D float32 little-endian.
void save_features(const std::vector<Clip>& clips, Split split,
                   const std::string& path);
std::vector<Clip> load_features(const std::string& path, Split split);

void save_injections(const std::vector<Injection>& log, const std::string& path);
std::vector<Injection> load_injections(const std::string& path);

// Corpus directory convention: features_train.bin, features_eval.bin,
// labels.csv, truth.csv, injections.csv, priors.csv.
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace maskset
