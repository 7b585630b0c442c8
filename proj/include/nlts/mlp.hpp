#pragma once

// Feed-forward reward model: raw context -> ReLU hidden layers -> one linear
// output per arm. The last hidden activations are the features the linear
// posterior works on, and each output row is a linear read-out of them.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "nlts/error.hpp"
#include "nlts/linalg.hpp"
#include "nlts/replay.hpp"
#include "nlts/rng.hpp"

namespace nlts {

struct DenseLayer {
  Mat weights;  // out x in
  Vec bias;     // out
};

struct MlpParams {
  std::vector<DenseLayer> layers;  // hidden layers..., output layer

  std::size_t input_dim() const { return layers.front().weights.cols(); }
  std::size_t num_outputs() const { return layers.back().weights.rows(); }
  std::size_t feature_dim() const { return layers.back().weights.cols(); }
  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  bool operator==(const MlpParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t k = 0; k < layers.size(); ++k)
      if (!(layers[k].weights == o.layers[k].weights) ||
          layers[k].bias != o.layers[k].bias)
        return false;
    return true;
  }
};

/// Hidden weights uniform in +-1/sqrt(fan_in), zero biases, zero output layer.
inline MlpParams make_mlp(std::size_t input_dim,
                          const std::vector<std::size_t>& hidden,
                          std::size_t num_arms, Rng& rng) {
  require(input_dim > 0 && num_arms > 0, ErrorCode::kInvalidParameter,
          "mlp dimensions must be positive");
  require(!hidden.empty(), ErrorCode::kInvalidParameter,
          "mlp needs at least one hidden layer (it supplies the features)");
  MlpParams p;
  std::size_t fan_in = input_dim;
  for (std::size_t width : hidden) {
    require(width > 0, ErrorCode::kInvalidParameter, "zero-width layer");
    DenseLayer layer{Mat(width, fan_in), Vec(width, 0.0)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& w : layer.weights.data()) w = (2.0 * rng.uniform() - 1.0) * bound;
    p.layers.push_back(std::move(layer));
    fan_in = width;
  }
  p.layers.push_back({Mat(num_arms, fan_in), Vec(num_arms, 0.0)});
  return p;
}

namespace detail {

inline void dense_forward(const DenseLayer& layer, std::span<const double> in,
                          std::span<double> out, bool relu) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double z = layer.bias[i] + dot(layer.weights.row(i), in);
    out[i] = relu ? (z > 0.0 ? z : 0.0) : z;
  }
}

// Activations of every layer; acts[0] is the input.
inline std::vector<Vec> forward_all(const MlpParams& p,
                                    std::span<const double> x) {
  require(x.size() == p.input_dim(), ErrorCode::kDimensionMismatch,
          "context has dimension " + std::to_string(x.size()) +
              ", model expects " + std::to_string(p.input_dim()));
  std::vector<Vec> acts;
  acts.reserve(p.layers.size() + 1);
  acts.emplace_back(x.begin(), x.end());
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    Vec out(p.layers[k].weights.rows());
    dense_forward(p.layers[k], acts.back(), out, k + 1 < p.layers.size());
    acts.push_back(std::move(out));
  }
  return acts;
}

}  // namespace detail

/// Last hidden layer activations.
inline Vec features(const MlpParams& p, std::span<const double> x) {
  auto acts = detail::forward_all(p, x);
  return std::move(acts[acts.size() - 2]);
}

/// Per-arm reward predictions.
inline Vec forward(const MlpParams& p, std::span<const double> x) {
  auto acts = detail::forward_all(p, x);
  return std::move(acts.back());
}

inline Vec last_layer_weights(const MlpParams& p, std::size_t arm) {
  require(arm < p.num_outputs(), ErrorCode::kInvalidArm,
          "arm " + std::to_string(arm) + " out of range");
  auto row = p.layers.back().weights.row(arm);
  return Vec(row.begin(), row.end());
}

/// Zero-initialized container shaped like `p`, used for gradients and
/// optimizer accumulators.
inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z;
  for (const auto& l : p.layers)
    z.layers.push_back({Mat(l.weights.rows(), l.weights.cols()),
                        Vec(l.bias.size(), 0.0)});
  return z;
}

/// Mean over the batch of (D(b)_a - r)^2 where only the played arm's output
/// enters the loss. Writes the gradient into `grad` (reshaped as needed).
inline double masked_mse_grad(const MlpParams& p,
                              std::span<const Experience* const> batch,
                              MlpParams& grad) {
  require(!batch.empty(), ErrorCode::kEmptyBuffer, "empty training batch");
  grad = zeros_like(p);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const std::size_t depth = p.layers.size();
  double loss = 0.0;
  for (const Experience* e : batch) {
    require(e->arm < p.num_outputs(), ErrorCode::kInvalidArm,
            "experience arm out of range");
    const auto acts = detail::forward_all(p, e->context);
    const double err = acts.back()[e->arm] - e->reward;
    loss += err * err * inv_n;

    // Output layer: only row `arm` receives gradient.
    const double d_out = 2.0 * err * inv_n;
    const Vec& h_last = acts[depth - 1];
    axpy(d_out, h_last, grad.layers.back().weights.row(e->arm));
    grad.layers.back().bias[e->arm] += d_out;
    Vec delta(h_last.size());
    {
      auto w_row = p.layers.back().weights.row(e->arm);
      for (std::size_t j = 0; j < delta.size(); ++j)
        delta[j] = h_last[j] > 0.0 ? d_out * w_row[j] : 0.0;
    }
    for (std::size_t k = depth - 1; k-- > 0;) {
      const Vec& in = acts[k];
      auto& g = grad.layers[k];
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (delta[i] == 0.0) continue;
        axpy(delta[i], in, g.weights.row(i));
        g.bias[i] += delta[i];
      }
      if (k == 0) break;
      Vec next(in.size(), 0.0);
      const Mat& w = p.layers[k].weights;
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (delta[i] != 0.0) axpy(delta[i], w.row(i), next);
      for (std::size_t j = 0; j < next.size(); ++j)
        if (!(in[j] > 0.0)) next[j] = 0.0;
      delta = std::move(next);
    }
  }
  return loss;
}

inline double masked_mse(const MlpParams& p,
                         std::span<const Experience* const> batch) {
  require(!batch.empty(), ErrorCode::kEmptyBuffer, "empty batch");
  double loss = 0.0;
  for (const Experience* e : batch) {
    const double err = forward(p, e->context)[e->arm] - e->reward;
    loss += err * err;
  }
  return loss / static_cast<double>(batch.size());
}

struct TrainConfig {
  std::size_t minibatches = 400;  // P
  std::size_t batch_size = 64;
  std::size_t interval = 200;     // L
  double learning_rate = 1e-3;
  double decay = 0.95;            // RMSProp averaging of squared gradients
  double epsilon = 1e-8;
};

inline void validate(const TrainConfig& c) {
  require(c.interval >= 1, ErrorCode::kInvalidParameter,
          "training interval must be >= 1");
  require(c.batch_size >= 1, ErrorCode::kInvalidParameter,
          "batch size must be >= 1");
  require(c.learning_rate > 0.0 && c.decay >= 0.0 && c.decay < 1.0 &&
              c.epsilon > 0.0,
          ErrorCode::kInvalidParameter, "invalid optimizer hyperparameters");
}

/// Model parameters plus the RMSProp accumulators that persist across
/// training phases.
struct RewardModel {
  MlpParams params;
  MlpParams sq_grad_avg;

  RewardModel() = default;
  explicit RewardModel(MlpParams p)
      : params(std::move(p)), sq_grad_avg(zeros_like(params)) {}
};

inline void rmsprop_step(RewardModel& m, const MlpParams& grad,
                         const TrainConfig& cfg) {
  auto apply = [&](std::span<double> w, std::span<double> v,
                   std::span<const double> g) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg.decay * v[i] + (1.0 - cfg.decay) * g[i] * g[i];
      w[i] -= cfg.learning_rate * g[i] / (std::sqrt(v[i]) + cfg.epsilon);
    }
  };
  for (std::size_t k = 0; k < m.params.layers.size(); ++k) {
    apply(m.params.layers[k].weights.data(),
          m.sq_grad_avg.layers[k].weights.data(),
          grad.layers[k].weights.data());
    apply(m.params.layers[k].bias, m.sq_grad_avg.layers[k].bias,
          grad.layers[k].bias);
  }
}

struct TrainReport {
  std::size_t steps = 0;
  double probe_loss_before = 0.0;
  double probe_loss_after = 0.0;
};

/// cfg.minibatches RMSProp steps on minibatches drawn from the buffer. The
/// probe loss is measured on every tuple held by the buffer.
inline TrainReport train(RewardModel& model, const ReplayBuffer& buffer,
                         const TrainConfig& cfg, Rng& rng) {
  validate(cfg);
  require(!buffer.empty(), ErrorCode::kEmptyBuffer,
          "cannot train on an empty replay buffer");
  std::vector<const Experience*> probe;
  probe.reserve(buffer.size());
  for (const auto& e : buffer.items()) probe.push_back(&e);

  TrainReport report;
  report.probe_loss_before = masked_mse(model.params, probe);
  MlpParams grad;
  for (std::size_t step = 0; step < cfg.minibatches; ++step) {
    const auto batch = buffer.sample_minibatch(rng, cfg.batch_size);
    masked_mse_grad(model.params, batch, grad);
    rmsprop_step(model, grad, cfg);
    ++report.steps;
  }
  report.probe_loss_after = cfg.minibatches == 0
                                ? report.probe_loss_before
                                : masked_mse(model.params, probe);
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: "NLTSMLP1", u64 layer count, then per layer u64 rows, u64 cols,
// rows*cols f64 weights (row-major), rows f64 biases. Host byte order.

inline constexpr char kCheckpointMagic[8] = {'N', 'L', 'T', 'S',
                                             'M', 'L', 'P', '1'};

inline void save_checkpoint(const MlpParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), ErrorCode::kIo, "cannot open " + path);
  auto put_u64 = [&](std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64(p.layers.size());
  for (const auto& l : p.layers) {
    put_u64(l.weights.rows());
    put_u64(l.weights.cols());
    os.write(reinterpret_cast<const char*>(l.weights.data().data()),
             static_cast<std::streamsize>(l.weights.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(l.bias.data()),
             static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
  }
  require(bool(os), ErrorCode::kIo, "write failed: " + path);
}

inline MlpParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), ErrorCode::kIo, "cannot open " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  require(is && std::memcmp(magic, kCheckpointMagic, sizeof magic) == 0,
          ErrorCode::kParseError, "bad checkpoint magic in " + path);
  auto get_u64 = [&] {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    require(bool(is), ErrorCode::kParseError, "truncated checkpoint " + path);
    return v;
  };
  MlpParams p;
  const auto n_layers = get_u64();
  require(n_layers >= 2 && n_layers < 64, ErrorCode::kParseError,
          "implausible layer count in " + path);
  for (std::uint64_t k = 0; k < n_layers; ++k) {
    const auto rows = get_u64();
    const auto cols = get_u64();
    require(rows > 0 && cols > 0 && rows * cols < (1ULL << 28),
            ErrorCode::kParseError, "implausible layer shape in " + path);
    std::vector<double> w(rows * cols);
    Vec b(rows);
    is.read(reinterpret_cast<char*>(w.data()),
            static_cast<std::streamsize>(w.size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(b.data()),
            static_cast<std::streamsize>(b.size() * sizeof(double)));
    require(bool(is), ErrorCode::kParseError, "truncated checkpoint " + path);
    if (!p.layers.empty())
      require(p.layers.back().weights.rows() == cols, ErrorCode::kParseError,
              "layer shapes do not chain in " + path);
    p.layers.push_back({Mat(rows, cols, std::move(w)), std::move(b)});
  }
  return p;
}

}  // namespace nlts
