#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maskset/corpus.hpp"

namespace maskset {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Capacity : std::uint8_t { Linear, Hidden };

const char* capacity_name(Capacity c);                       // "linear" "hidden"
std::optional<Capacity> capacity_from_name(const std::string& name);

// Parameters are held in 64-bit floats; checkpoints serialize 32-bit.
// Linear: logits = W x + b.    Hidden: logits = W2 relu(W1 x + b1) + b2.
struct ModelParams {
  Capacity capacity = Capacity::Linear;
  std::size_t n_classes = 0;  // C
  std::size_t dim = 0;        // D
  std::size_t hidden = 0;     // H, 0 for Linear
  std::vector<double> w1;     // Linear: C x D; Hidden: H x D
  std::vector<double> b1;     // Linear: C;     Hidden: H
  std::vector<double> w2;     // Hidden: C x H
  std::vector<double> b2;     // Hidden: C

  std::size_t n_params() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
  }
  bool operator==(const ModelParams&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double init_std = 0.05;
  std::size_t hidden_width = 64;
  std::uint64_t seed = 1;
};

// Per-example targets and loss-mask values for one batch row.
struct BatchTargets {
  std::vector<double> y;       // y_c in {0,1}
  std::vector<std::uint8_t> m; // M_c in {0,1}
};

// Loss mask per (clip, class); broadcast to all patches of a clip in train().
struct MaskMatrix {
  std::size_t n_clips = 0;
  std::size_t n_classes = 0;
  std::vector<std::uint8_t> values;  // row-major

  std::uint8_t at(std::size_t clip, std::size_t cls) const {
    return values[clip * n_classes + cls];
  }
  static MaskMatrix all_ones(std::size_t n_clips, std::size_t n_classes) {
    return {n_clips, n_classes,
            std::vector<std::uint8_t>(n_clips * n_classes, 1)};
  }
};

ModelParams init_params(Capacity capacity, std::size_t n_classes,
                        std::size_t dim, const TrainConfig& config);

// Sigmoid probabilities for one feature vector.
std::vector<double> forward(const ModelParams& params, const double* x);
std::vector<double> forward(const ModelParams& params,
                            const std::vector<double>& x);

// Binary cross-entropy with the mask gating the negative term; p clamped
// to [1e-7, 1-1e-7]; sum over classes.
double masked_bce(const std::vector<double>& p, const BatchTargets& t);

// Analytic gradient of mean masked_bce over the batch, laid out as
// ModelParams (same field order). Output-logit gradient per class:
// (p-y) when M=1, y*(p-1) when M=0.
ModelParams gradient(const ModelParams& params,
                     const std::vector<std::vector<double>>& xs,
                     const std::vector<BatchTargets>& ts);

// Deterministic Adam training on patch-level examples; each patch inherits
// its clip's targets and mask row. clip_subset (indices into corpus.clips)
// restricts training to a subset of the train split; empty means all.
ModelParams train(const Corpus& corpus, const LabelTable& labels,
                  const MaskMatrix* mask, const TrainConfig& config,
                  Capacity capacity,
                  const std::vector<std::size_t>* clip_subset = nullptr);

// Mean over patch-level forward outputs, per class.
std::vector<double> predict_clip(const ModelParams& params, const Clip& clip);

// Checkpoint: magic MPM1, u32 capacity tag, dims, float32 params in field
// order; text sidecar at path + ".txt" echoes seed and config.
void save_model(const ModelParams& params, const std::string& path,
                const TrainConfig& config);
ModelParams load_model(const std::string& path);

}  // namespace maskset
