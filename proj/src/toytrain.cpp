#include "ckstab/toytrain.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "ckstab/error.hpp"
#include "ckstab/parallel.hpp"

namespace ckstab::toy {
namespace {

[[noreturn]] void BadConfig(const std::string& what) {
  throw Error(ErrorCode::kInvalidConfig, what);
}

// Sub-stream ids.
constexpr std::uint64_t kCenterStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kEvalStream = 3;
constexpr std::uint64_t kNoiseStream = 4;
constexpr std::uint64_t kShuffleStream = 5;

void FillMixture(SplitMix64& rng, const std::vector<double>& centers, int k,
                 int d, int count, std::vector<float>& x, std::vector<int>& y) {
  x.resize(static_cast<std::size_t>(count) * d);
  y.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int label = static_cast<int>(rng.Below(static_cast<std::uint64_t>(k)));
    y[i] = label;
    for (int j = 0; j < d; ++j) {
      x[static_cast<std::size_t>(i) * d + j] =
          static_cast<float>(centers[static_cast<std::size_t>(label) * d + j] + rng.Normal());
    }
  }
}

void CheckDims(const ToyModel& model, std::size_t x_size) {
  if (model.input_dim <= 0 || model.n_classes <= 0 ||
      model.weights.size() != static_cast<std::size_t>(model.n_classes) * model.input_dim ||
      model.bias.size() != static_cast<std::size_t>(model.n_classes)) {
    throw Error(ErrorCode::kDimensionMismatch, "model tensors do not match its shape");
  }
  if (x_size % static_cast<std::size_t>(model.input_dim) != 0) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input of " + std::to_string(x_size) + " values is not a multiple of " +
                    std::to_string(model.input_dim));
  }
}

void Softmax(std::vector<double>& z) {
  const double max = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - max);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

}  // namespace

std::uint64_t SplitMix64::Next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SplitMix64::Uniform() {
  return static_cast<double>(Next() >> 11) * 0x1.0p-53;
}

double SplitMix64::Normal() {
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SplitMix64::Below(std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = Next();
  while (v >= limit) v = Next();
  return v % n;
}

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 mix(seed ^ (stream * 0xD1B54A32D192ED03ULL));
  return mix.Next();
}

void ToyTaskConfig::Validate() const {
  if (n_classes < 2) BadConfig("n_classes must be >= 2");
  if (input_dim < 1) BadConfig("input_dim must be >= 1");
  if (train_size < 1) BadConfig("train_size must be >= 1");
  if (eval_size < 1) BadConfig("eval_size must be >= 1");
  if (!(spread >= 0.0) || !std::isfinite(spread)) BadConfig("spread must be finite and >= 0");
  if (!(label_noise_rate >= 0.0 && label_noise_rate < 1.0)) {
    BadConfig("label_noise_rate must be in [0, 1)");
  }
}

std::span<const float> Dataset::TrainRow(std::size_t i) const {
  return std::span<const float>(train_x).subspan(i * input_dim, input_dim);
}

std::span<const float> Dataset::EvalRow(std::size_t i) const {
  return std::span<const float>(eval_x).subspan(i * input_dim, input_dim);
}

Dataset GenTask(const ToyTaskConfig& config) {
  config.Validate();
  const int k = config.n_classes;
  const int d = config.input_dim;
  Dataset data;
  data.n_classes = k;
  data.input_dim = d;

  SplitMix64 center_rng(DeriveSeed(config.seed, kCenterStream));
  std::vector<double> centers(static_cast<std::size_t>(k) * d);
  for (auto& c : centers) c = config.spread * center_rng.Normal();

  SplitMix64 train_rng(DeriveSeed(config.seed, kTrainStream));
  FillMixture(train_rng, centers, k, d, config.train_size, data.train_x,
              data.train_clean_y);
  SplitMix64 eval_rng(DeriveSeed(config.seed, kEvalStream));
  FillMixture(eval_rng, centers, k, d, config.eval_size, data.eval_x, data.eval_y);

  SplitMix64 noise_rng(DeriveSeed(config.seed, kNoiseStream));
  data.train_y = data.train_clean_y;
  for (auto& y : data.train_y) {
    if (noise_rng.Uniform() < config.label_noise_rate) {
      const int shift = 1 + static_cast<int>(noise_rng.Below(static_cast<std::uint64_t>(k - 1)));
      y = (y + shift) % k;
    }
  }

  data.eval_ids.reserve(static_cast<std::size_t>(config.eval_size));
  for (int i = 0; i < config.eval_size; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "e%05d", i);
    data.eval_ids.emplace_back(buf);
  }
  return data;
}

ToyModel ToyModel::Zeros(int n_classes, int input_dim) {
  return {n_classes, input_dim,
          std::vector<float>(static_cast<std::size_t>(n_classes) * input_dim, 0.0f),
          std::vector<float>(static_cast<std::size_t>(n_classes), 0.0f)};
}

std::vector<double> Logits(const ToyModel& model, std::span<const float> x) {
  CheckDims(model, x.size());
  if (x.size() != static_cast<std::size_t>(model.input_dim)) {
    throw Error(ErrorCode::kDimensionMismatch, "expected a single input row");
  }
  std::vector<double> z(static_cast<std::size_t>(model.n_classes));
  for (int c = 0; c < model.n_classes; ++c) {
    double acc = model.bias[c];
    const float* w = model.weights.data() + static_cast<std::size_t>(c) * model.input_dim;
    for (int j = 0; j < model.input_dim; ++j) {
      acc += static_cast<double>(w[j]) * static_cast<double>(x[j]);
    }
    z[c] = acc;
  }
  return z;
}

std::vector<double> Forward(const ToyModel& model, std::span<const float> x) {
  auto z = Logits(model, x);
  Softmax(z);
  return z;
}

int Predict(const ToyModel& model, std::span<const float> x) {
  const auto z = Logits(model, x);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

LossAndGrad LossAndGradient(const ToyModel& model, std::span<const float> x,
                            std::span<const int> labels) {
  CheckDims(model, x.size());
  const auto d = static_cast<std::size_t>(model.input_dim);
  if (labels.empty()) throw Error(ErrorCode::kEmptyInput, "empty batch");
  if (x.size() != labels.size() * d) {
    throw Error(ErrorCode::kDimensionMismatch, "batch inputs and labels disagree in count");
  }
  LossAndGrad out;
  out.d_weights.assign(model.weights.size(), 0.0);
  out.d_bias.assign(model.bias.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= model.n_classes) {
      throw Error(ErrorCode::kDimensionMismatch, "label out of range");
    }
    const auto row = x.subspan(i * d, d);
    auto p = Logits(model, row);
    const double max = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double v : p) sum += std::exp(v - max);
    out.loss += -(p[y] - max - std::log(sum));
    for (auto& v : p) v = std::exp(v - max) / sum;
    p[y] -= 1.0;
    for (int c = 0; c < model.n_classes; ++c) {
      out.d_bias[c] += p[c];
      double* g = out.d_weights.data() + static_cast<std::size_t>(c) * d;
      for (std::size_t j = 0; j < d; ++j) g[j] += p[c] * static_cast<double>(row[j]);
    }
  }
  const double inv = 1.0 / static_cast<double>(labels.size());
  out.loss *= inv;
  for (auto& g : out.d_weights) g *= inv;
  for (auto& g : out.d_bias) g *= inv;
  return out;
}

ckpt::Checkpoint ToCheckpoint(const ToyModel& model, const std::string& run_id,
                              std::int64_t step, bool initial) {
  return {run_id,
          step,
          initial,
          {{"bias", {model.n_classes}, model.bias},
           {"weights", {model.n_classes, model.input_dim}, model.weights}}};
}

ToyModel FromCheckpoint(const ckpt::Checkpoint& checkpoint) {
  const auto& w = checkpoint.Tensor("weights");
  const auto& b = checkpoint.Tensor("bias");
  if (w.shape.size() != 2 || b.shape.size() != 1 || w.shape[0] != b.shape[0]) {
    throw Error(ErrorCode::kShapeMismatch, "checkpoint is not a linear classifier");
  }
  return {static_cast<int>(w.shape[0]), static_cast<int>(w.shape[1]), w.data, b.data};
}

std::size_t TrainConfig::CheckpointCount() const {
  if (checkpoint_interval <= 0) return 0;
  return static_cast<std::size_t>(total_steps / checkpoint_interval);
}

double TrainConfig::LearningRate(std::int64_t step) const {
  if (schedule == LrSchedule::kConstant) return learning_rate;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return learning_rate * (1.0 - (1.0 - final_lr_fraction) * progress);
}

void TrainConfig::Validate() const {
  if (total_steps < 1) BadConfig("total_steps must be >= 1");
  if (batch_size < 1) BadConfig("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    BadConfig("learning_rate must be finite and > 0");
  }
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) {
    BadConfig("final_lr_fraction must be in [0, 1]");
  }
  if (checkpoint_interval < 1) BadConfig("checkpoint_interval must be >= 1");
  if (CheckpointCount() < kMinCheckpoints) {
    BadConfig("total_steps / checkpoint_interval gives " +
              std::to_string(CheckpointCount()) + " checkpoints, need at least " +
              std::to_string(kMinCheckpoints));
  }
  if (run_id.empty()) BadConfig("run_id must not be empty");
}

TrainResult Train(const Dataset& data, const TrainConfig& config,
                  const ckpt::Store& store) {
  config.Validate();
  if (data.train_size() == 0) BadConfig("empty training set");
  const auto d = static_cast<std::size_t>(data.input_dim);
  ToyModel model = ToyModel::Zeros(data.n_classes, data.input_dim);
  store.Put("0", ToCheckpoint(model, config.run_id, 0, true));

  SplitMix64 shuffle_rng(DeriveSeed(config.seed, kShuffleStream));
  std::vector<std::size_t> order(data.train_size());
  std::size_t cursor = order.size();  // forces a shuffle on the first step

  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<float> bx(batch * d);
  std::vector<int> by(batch);
  std::vector<CheckpointRef> refs;
  TrainResult result;
  double interval_loss = 0.0;

  for (std::int64_t step = 1; step <= config.total_steps; ++step) {
    for (std::size_t i = 0; i < batch; ++i) {
      if (cursor == order.size()) {
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        // Fisher-Yates with the portable generator.
        for (std::size_t k = order.size(); k > 1; --k) {
          std::swap(order[k - 1], order[shuffle_rng.Below(k)]);
        }
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      std::copy_n(data.train_x.begin() + static_cast<std::ptrdiff_t>(idx * d), d,
                  bx.begin() + static_cast<std::ptrdiff_t>(i * d));
      by[i] = data.train_y[idx];
    }
    const LossAndGrad lg = LossAndGradient(model, bx, by);
    if (!std::isfinite(lg.loss)) {
      throw Error(ErrorCode::kDivergedTraining,
                  "non-finite loss at step " + std::to_string(step));
    }
    interval_loss += lg.loss;
    const double lr = config.LearningRate(step);
    for (std::size_t k = 0; k < model.weights.size(); ++k) {
      model.weights[k] -= static_cast<float>(lr * lg.d_weights[k]);
    }
    for (std::size_t k = 0; k < model.bias.size(); ++k) {
      model.bias[k] -= static_cast<float>(lr * lg.d_bias[k]);
    }
    for (float w : model.weights) {
      if (!std::isfinite(w)) {
        throw Error(ErrorCode::kDivergedTraining,
                    "non-finite weight at step " + std::to_string(step));
      }
    }
    if (step % config.checkpoint_interval == 0) {
      const std::string id = std::to_string(step);
      store.Put(id, ToCheckpoint(model, config.run_id, step, false));
      refs.push_back({step, id});
      result.interval_losses.push_back(interval_loss /
                                       static_cast<double>(config.checkpoint_interval));
      interval_loss = 0.0;
    }
  }
  result.trajectory = Trajectory(config.run_id, std::move(refs));
  return result;
}

EvalRun EvaluateToEvalRun(const Trajectory& trajectory, const Dataset& data,
                          const ckpt::Store& store) {
  const auto& refs = trajectory.checkpoints();
  std::vector<std::vector<int>> predictions(refs.size());
  ParallelFor(refs.size(), [&](std::size_t s) {
    const ToyModel model = FromCheckpoint(store.Get(refs[s].id));
    if (model.input_dim != data.input_dim || model.n_classes != data.n_classes) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "checkpoint " + refs[s].id + " does not match the task dimensions");
    }
    auto& out = predictions[s];
    out.resize(data.eval_size());
    for (std::size_t i = 0; i < data.eval_size(); ++i) out[i] = Predict(model, data.EvalRow(i));
  });

  std::vector<ExampleOutcome> records;
  records.reserve(refs.size() * data.eval_size());
  for (std::size_t s = 0; s < refs.size(); ++s) {
    for (std::size_t i = 0; i < data.eval_size(); ++i) {
      const std::string gold = std::to_string(data.eval_y[i]);
      records.push_back({refs[s].step, kToyTaskName, data.eval_ids[i],
                         std::to_string(predictions[s][i]), {gold}, gold});
    }
  }
  return IngestEvalRun(std::move(records), trajectory,
                       {{kToyTaskName, TaskInfo{scoring::ScoreFnKind::kExactMatch, true}}});
}

// ---------------------------------------------------------------------------

namespace {

const std::set<std::string>& KnownKeys() {
  static const std::set<std::string> keys = {
      "n_classes", "input_dim", "train_size", "eval_size", "spread",
      "label_noise_rate", "task_seed", "total_steps", "batch_size",
      "learning_rate", "lr_schedule", "final_lr_fraction",
      "checkpoint_interval", "train_seed", "run_id"};
  return keys;
}

template <typename T>
void Read(const YAML::Node& root, const char* key, T& out) {
  const YAML::Node node = root[key];
  if (!node) return;
  try {
    out = node.as<T>();
  } catch (const YAML::Exception&) {
    BadConfig(std::string("bad value for '") + key + "'");
  }
}

}  // namespace

ToyConfig ParseToyConfig(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    BadConfig(std::string("malformed config: ") + e.what());
  }
  ToyConfig cfg;
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) BadConfig("config must be a mapping of keys to values");
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (!KnownKeys().count(key)) BadConfig("unknown config key '" + key + "'");
  }
  Read(root, "n_classes", cfg.task.n_classes);
  Read(root, "input_dim", cfg.task.input_dim);
  Read(root, "train_size", cfg.task.train_size);
  Read(root, "eval_size", cfg.task.eval_size);
  Read(root, "spread", cfg.task.spread);
  Read(root, "label_noise_rate", cfg.task.label_noise_rate);
  Read(root, "task_seed", cfg.task.seed);
  Read(root, "total_steps", cfg.train.total_steps);
  Read(root, "batch_size", cfg.train.batch_size);
  Read(root, "learning_rate", cfg.train.learning_rate);
  Read(root, "final_lr_fraction", cfg.train.final_lr_fraction);
  Read(root, "checkpoint_interval", cfg.train.checkpoint_interval);
  Read(root, "train_seed", cfg.train.seed);
  Read(root, "run_id", cfg.train.run_id);
  std::string schedule = "constant";
  Read(root, "lr_schedule", schedule);
  if (schedule == "constant") {
    cfg.train.schedule = LrSchedule::kConstant;
  } else if (schedule == "linear") {
    cfg.train.schedule = LrSchedule::kLinear;
  } else {
    BadConfig("lr_schedule must be 'constant' or 'linear'");
  }
  cfg.task.Validate();
  cfg.train.Validate();
  return cfg;
}

ToyConfig LoadToyConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ParseToyConfig(text);
}

}  // namespace ckstab::toy
