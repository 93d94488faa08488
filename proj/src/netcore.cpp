#include "maskset/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "maskset/rng.hpp"

namespace maskset {

const char* capacity_name(Capacity c) {
  return c == Capacity::Linear ? "linear" : "hidden";
}

std::optional<Capacity> capacity_from_name(const std::string& name) {
  if (name == "linear") return Capacity::Linear;
  if (name == "hidden") return Capacity::Hidden;
  return std::nullopt;
}

namespace {

constexpr double kProbClamp = 1e-7;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp_prob(double p) {
  // p first in both calls so a NaN propagates instead of being clamped,
  // letting the train loop's divergence guard see it.
  return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

void check_dims(const ModelParams& params, std::size_t dim) {
  if (params.dim != dim)
    throw DomainError("feature dimension mismatch: model expects " +
                      std::to_string(params.dim) + ", got " +
                      std::to_string(dim));
}

// Logits and, for Hidden, the rectified activations needed by backprop.
void forward_raw(const ModelParams& p, const double* x, std::vector<double>& z,
                 std::vector<double>* act) {
  if (p.capacity == Capacity::Linear) {
    z.assign(p.n_classes, 0.0);
    for (std::size_t c = 0; c < p.n_classes; ++c) {
      double acc = p.b1[c];
      const double* row = p.w1.data() + c * p.dim;
      for (std::size_t d = 0; d < p.dim; ++d) acc += row[d] * x[d];
      z[c] = acc;
    }
    return;
  }
  std::vector<double> local;
  std::vector<double>& a = act ? *act : local;
  a.assign(p.hidden, 0.0);
  for (std::size_t h = 0; h < p.hidden; ++h) {
    double acc = p.b1[h];
    const double* row = p.w1.data() + h * p.dim;
    for (std::size_t d = 0; d < p.dim; ++d) acc += row[d] * x[d];
    a[h] = acc > 0.0 ? acc : 0.0;
  }
  z.assign(p.n_classes, 0.0);
  for (std::size_t c = 0; c < p.n_classes; ++c) {
    double acc = p.b2[c];
    const double* row = p.w2.data() + c * p.hidden;
    for (std::size_t h = 0; h < p.hidden; ++h) acc += row[h] * a[h];
    z[c] = acc;
  }
}

}  // namespace

ModelParams init_params(Capacity capacity, std::size_t n_classes,
                        std::size_t dim, const TrainConfig& config) {
  ModelParams p;
  p.capacity = capacity;
  p.n_classes = n_classes;
  p.dim = dim;
  Rng rng(config.seed);
  auto fill = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (auto& x : v) x = config.init_std * rng.gauss();
  };
  if (capacity == Capacity::Linear) {
    fill(p.w1, n_classes * dim);
    fill(p.b1, n_classes);
  } else {
    p.hidden = config.hidden_width;
    fill(p.w1, p.hidden * dim);
    fill(p.b1, p.hidden);
    fill(p.w2, n_classes * p.hidden);
    fill(p.b2, n_classes);
  }
  return p;
}

std::vector<double> forward(const ModelParams& params, const double* x) {
  std::vector<double> z;
  forward_raw(params, x, z, nullptr);
  for (auto& v : z) v = sigmoid(v);
  return z;
}

std::vector<double> forward(const ModelParams& params,
                            const std::vector<double>& x) {
  check_dims(params, x.size());
  return forward(params, x.data());
}

double masked_bce(const std::vector<double>& p, const BatchTargets& t) {
  if (p.size() != t.y.size() || p.size() != t.m.size())
    throw DomainError("masked_bce: shape mismatch");
  double loss = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double pc = clamp_prob(p[c]);
    loss -= t.y[c] * std::log(pc);
    if (t.m[c]) loss -= (1.0 - t.y[c]) * std::log(1.0 - pc);
  }
  return loss;
}

namespace {

// Accumulates the gradient of one example's masked_bce into g.
void accumulate_gradient(const ModelParams& p, const double* x,
                         const BatchTargets& t, ModelParams& g) {
  std::vector<double> z, act;
  forward_raw(p, x, z, &act);
  std::vector<double> gz(p.n_classes);
  for (std::size_t c = 0; c < p.n_classes; ++c) {
    const double pc = clamp_prob(sigmoid(z[c]));
    gz[c] = t.m[c] ? pc - t.y[c] : t.y[c] * (pc - 1.0);
  }
  if (p.capacity == Capacity::Linear) {
    for (std::size_t c = 0; c < p.n_classes; ++c) {
      double* row = g.w1.data() + c * p.dim;
      for (std::size_t d = 0; d < p.dim; ++d) row[d] += gz[c] * x[d];
      g.b1[c] += gz[c];
    }
    return;
  }
  std::vector<double> ga(p.hidden, 0.0);
  for (std::size_t c = 0; c < p.n_classes; ++c) {
    double* row = g.w2.data() + c * p.hidden;
    const double* w2row = p.w2.data() + c * p.hidden;
    for (std::size_t h = 0; h < p.hidden; ++h) {
      row[h] += gz[c] * act[h];
      ga[h] += gz[c] * w2row[h];
    }
    g.b2[c] += gz[c];
  }
  for (std::size_t h = 0; h < p.hidden; ++h) {
    if (act[h] <= 0.0) continue;  // rectifier gate
    double* row = g.w1.data() + h * p.dim;
    for (std::size_t d = 0; d < p.dim; ++d) row[d] += ga[h] * x[d];
    g.b1[h] += ga[h];
  }
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams g = p;
  std::fill(g.w1.begin(), g.w1.end(), 0.0);
  std::fill(g.b1.begin(), g.b1.end(), 0.0);
  std::fill(g.w2.begin(), g.w2.end(), 0.0);
  std::fill(g.b2.begin(), g.b2.end(), 0.0);
  return g;
}

void scale_params(ModelParams& g, double s) {
  for (auto* v : {&g.w1, &g.b1, &g.w2, &g.b2})
    for (auto& x : *v) x *= s;
}

struct Adam {
  ModelParams m, v;
  double beta1, beta2, eps, lr;
  std::uint64_t t = 0;

  Adam(const ModelParams& shape, const TrainConfig& c)
      : m(zeros_like(shape)), v(zeros_like(shape)),
        beta1(c.beta1), beta2(c.beta2), eps(c.epsilon), lr(c.learning_rate) {}

  void step(ModelParams& p, const ModelParams& g) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto upd = [&](std::vector<double>& pv, const std::vector<double>& gv,
                   std::vector<double>& mv, std::vector<double>& vv) {
      for (std::size_t i = 0; i < pv.size(); ++i) {
        mv[i] = beta1 * mv[i] + (1.0 - beta1) * gv[i];
        vv[i] = beta2 * vv[i] + (1.0 - beta2) * gv[i] * gv[i];
        pv[i] -= lr * (mv[i] / bc1) / (std::sqrt(vv[i] / bc2) + eps);
      }
    };
    upd(p.w1, g.w1, m.w1, v.w1);
    upd(p.b1, g.b1, m.b1, v.b1);
    upd(p.w2, g.w2, m.w2, v.w2);
    upd(p.b2, g.b2, m.b2, v.b2);
  }
};

void validate_train_config(const TrainConfig& c) {
  auto fail = [](const char* field) {
    throw ConfigError(std::string("invalid TrainConfig field: ") + field);
  };
  if (!(c.learning_rate >= 0.0)) fail("learning_rate");  // lr 0 = frozen init
  if (c.beta1 <= 0.0 || c.beta1 >= 1.0) fail("beta1");
  if (c.beta2 <= 0.0 || c.beta2 >= 1.0) fail("beta2");
  if (c.epsilon <= 0.0) fail("epsilon");
  if (c.batch_size < 1) fail("batch_size");
  if (c.init_std < 0.0) fail("init_std");
  if (c.hidden_width < 1) fail("hidden_width");
}

}  // namespace

ModelParams gradient(const ModelParams& params,
                     const std::vector<std::vector<double>>& xs,
                     const std::vector<BatchTargets>& ts) {
  if (xs.empty() || xs.size() != ts.size())
    throw DomainError("gradient: empty or mismatched batch");
  ModelParams g = zeros_like(params);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    check_dims(params, xs[i].size());
    accumulate_gradient(params, xs[i].data(), ts[i], g);
  }
  scale_params(g, 1.0 / static_cast<double>(xs.size()));
  return g;
}

ModelParams train(const Corpus& corpus, const LabelTable& labels,
                  const MaskMatrix* mask, const TrainConfig& config,
                  Capacity capacity,
                  const std::vector<std::size_t>* clip_subset) {
  validate_train_config(config);
  std::vector<std::size_t> clips =
      clip_subset ? *clip_subset : corpus.split_indices(Split::Train);
  if (clips.empty()) throw DomainError("train: no train clips");
  const std::size_t C = labels.n_classes;
  const std::size_t D = corpus.clips[clips[0]].dim;
  if (mask && (mask->n_clips != labels.n_clips() || mask->n_classes != C))
    throw DomainError("train: mask shape mismatch");

  // Examples are patches; each carries its clip row index for target lookup.
  struct Example {
    const float* x;
    std::size_t clip;
  };
  std::vector<Example> examples;
  for (std::size_t i : clips) {
    const Clip& clip = corpus.clips[i];
    if (clip.dim != D) throw DomainError("train: inconsistent feature dim");
    for (std::size_t k = 0; k < clip.n_patches(); ++k)
      examples.push_back({clip.patch(k), i});
  }

  ModelParams params = init_params(capacity, C, D, config);
  Adam adam(params, config);
  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> x(D);
  BatchTargets targets;
  targets.y.resize(C);
  targets.m.resize(C);
  ModelParams grad = zeros_like(params);
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the project RNG so the permutation is pinned
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + config.batch_size);
      scale_params(grad, 0.0);
      double batch_loss = 0.0;
      for (std::size_t idx = start; idx < stop; ++idx) {
        const Example& ex = examples[order[idx]];
        for (std::size_t d = 0; d < D; ++d)
          x[d] = static_cast<double>(ex.x[d]);
        for (std::size_t c = 0; c < C; ++c) {
          targets.y[c] = label_target(labels.at(ex.clip, c));
          targets.m[c] = mask ? mask->at(ex.clip, c) : 1;
        }
        std::vector<double> p = forward(params, x.data());
        batch_loss += masked_bce(p, targets);
        accumulate_gradient(params, x.data(), targets, grad);
      }
      if (!std::isfinite(batch_loss))
        throw DivergenceError("non-finite loss at step " +
                              std::to_string(step));
      scale_params(grad, 1.0 / static_cast<double>(stop - start));
      adam.step(params, grad);
      ++step;
    }
  }
  return params;
}

std::vector<double> predict_clip(const ModelParams& params, const Clip& clip) {
  if (clip.n_patches() == 0) throw DomainError("predict_clip: empty clip");
  check_dims(params, clip.dim);
  std::vector<double> mean(params.n_classes, 0.0);
  std::vector<double> x(clip.dim);
  for (std::size_t k = 0; k < clip.n_patches(); ++k) {
    const float* px = clip.patch(k);
    for (std::size_t d = 0; d < clip.dim; ++d) x[d] = static_cast<double>(px[d]);
    const std::vector<double> p = forward(params, x.data());
    for (std::size_t c = 0; c < params.n_classes; ++c) mean[c] += p[c];
  }
  const double inv = 1.0 / static_cast<double>(clip.n_patches());
  for (auto& v : mean) v *= inv;
  return mean;
}

namespace {

void put_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(path + ": truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 |
         static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

void save_model(const ModelParams& params, const std::string& path,
                const TrainConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out.write("MPM1", 4);
  put_u32le(out, params.capacity == Capacity::Linear ? 0u : 1u);
  put_u32le(out, static_cast<std::uint32_t>(params.n_classes));
  put_u32le(out, static_cast<std::uint32_t>(params.dim));
  put_u32le(out, static_cast<std::uint32_t>(params.hidden));
  for (const auto* v : {&params.w1, &params.b1, &params.w2, &params.b2})
    for (double d : *v) {
      const float f = static_cast<float>(d);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32le(out, bits);
    }
  if (!out) throw ParseError("write failed: " + path);

  std::ofstream side(path + ".txt", std::ios::binary);
  char buf[128];
  side << "capacity = " << capacity_name(params.capacity) << '\n';
  side << "n_classes = " << params.n_classes << '\n';
  side << "dim = " << params.dim << '\n';
  side << "hidden = " << params.hidden << '\n';
  side << "seed = " << config.seed << '\n';
  std::snprintf(buf, sizeof buf, "learning_rate = %.9g\n", config.learning_rate);
  side << buf;
  std::snprintf(buf, sizeof buf, "beta1 = %.9g\nbeta2 = %.9g\nepsilon = %.9g\n",
                config.beta1, config.beta2, config.epsilon);
  side << buf;
  side << "epochs = " << config.epochs << '\n';
  side << "batch_size = " << config.batch_size << '\n';
  std::snprintf(buf, sizeof buf, "init_std = %.9g\n", config.init_std);
  side << buf;
  side << "hidden_width = " << config.hidden_width << '\n';
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MPM1", 4) != 0)
    throw ParseError(path + ": bad magic, expected MPM1");
  ModelParams p;
  const std::uint32_t tag = get_u32le(in, path);
  if (tag > 1) throw ParseError(path + ": unknown capacity tag");
  p.capacity = tag == 0 ? Capacity::Linear : Capacity::Hidden;
  p.n_classes = get_u32le(in, path);
  p.dim = get_u32le(in, path);
  p.hidden = get_u32le(in, path);
  const bool linear = p.capacity == Capacity::Linear;
  if (linear && p.hidden != 0)
    throw ParseError(path + ": linear checkpoint with hidden width");
  p.w1.resize(linear ? p.n_classes * p.dim : p.hidden * p.dim);
  p.b1.resize(linear ? p.n_classes : p.hidden);
  p.w2.resize(linear ? 0 : p.n_classes * p.hidden);
  p.b2.resize(linear ? 0 : p.n_classes);
  for (auto* v : {&p.w1, &p.b1, &p.w2, &p.b2})
    for (auto& d : *v) {
      const std::uint32_t bits = get_u32le(in, path);
      float f;
      std::memcpy(&f, &bits, 4);
      d = static_cast<double>(f);
    }
  char extra;
  if (in.read(&extra, 1))
    throw ParseError(path + ": trailing bytes in checkpoint");
  return p;
}

}  // namespace maskset
