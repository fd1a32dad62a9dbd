#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ckstab/ckpt_store.hpp"
#include "ckstab/trajectory.hpp"

namespace ckstab::toy {

// splitmix64. Portable: identical streams on every platform, unlike the
// standard library distributions.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t Next();
  // Uniform in [0, 1) with 53 random bits.
  double Uniform();
  // Standard normal by Box-Muller (one value per call, no caching).
  double Normal();
  // Uniform integer in [0, n), n > 0, rejection sampled.
  std::uint64_t Below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

// Independent sub-stream of `seed`, e.g. one for data and one for shuffling.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream);

struct ToyTaskConfig {
  int n_classes = 4;
  int input_dim = 16;
  int train_size = 2000;
  int eval_size = 1000;
  double spread = 1.0;            // std of class-center coordinates
  double label_noise_rate = 0.15; // fraction of training labels reassigned
  std::uint64_t seed = 1;

  void Validate() const;  // throws kInvalidConfig
};

struct Dataset {
  int n_classes = 0;
  int input_dim = 0;
  std::vector<float> train_x;          // train_size x input_dim, row-major
  std::vector<int> train_y;            // possibly noisy
  std::vector<int> train_clean_y;
  std::vector<float> eval_x;
  std::vector<int> eval_y;             // clean
  std::vector<std::string> eval_ids;   // "e00000", ...

  std::size_t train_size() const { return train_y.size(); }
  std::size_t eval_size() const { return eval_y.size(); }
  std::span<const float> TrainRow(std::size_t i) const;
  std::span<const float> EvalRow(std::size_t i) const;

  bool operator==(const Dataset&) const = default;
};

// Gaussian mixture, one unit-variance component per class around a center
// drawn from N(0, spread^2 I). Each training label is, with probability
// label_noise_rate, replaced by a uniformly chosen different class.
// Evaluation labels are clean.
Dataset GenTask(const ToyTaskConfig& config);

// Linear softmax classifier.
struct ToyModel {
  int n_classes = 0;
  int input_dim = 0;
  std::vector<float> weights;  // n_classes x input_dim
  std::vector<float> bias;     // n_classes

  static ToyModel Zeros(int n_classes, int input_dim);
  bool operator==(const ToyModel&) const = default;
};

std::vector<double> Logits(const ToyModel& model, std::span<const float> x);
std::vector<double> Forward(const ToyModel& model, std::span<const float> x);
// argmax of the logits; ties go to the lowest class index.
int Predict(const ToyModel& model, std::span<const float> x);

struct LossAndGrad {
  double loss = 0.0;              // mean cross-entropy
  std::vector<double> d_weights;  // same layout as ToyModel::weights
  std::vector<double> d_bias;
};

// `x` holds labels.size() rows. Throws kDimensionMismatch, kEmptyInput.
LossAndGrad LossAndGradient(const ToyModel& model, std::span<const float> x,
                            std::span<const int> labels);

// Tensors "bias" [K] and "weights" [K, d].
ckpt::Checkpoint ToCheckpoint(const ToyModel& model, const std::string& run_id,
                              std::int64_t step, bool initial);
ToyModel FromCheckpoint(const ckpt::Checkpoint& checkpoint);

enum class LrSchedule { kConstant, kLinear };

inline constexpr std::size_t kMinCheckpoints = 25;

struct TrainConfig {
  std::int64_t total_steps = 2000;
  int batch_size = 16;
  double learning_rate = 0.5;
  LrSchedule schedule = LrSchedule::kConstant;
  double final_lr_fraction = 0.1;  // linear schedule ends at lr * this
  std::int64_t checkpoint_interval = 20;
  std::uint64_t seed = 1;
  std::string run_id = "toy";

  std::size_t CheckpointCount() const;  // excluding step 0
  double LearningRate(std::int64_t step) const;
  void Validate() const;  // throws kInvalidConfig
};

struct TrainResult {
  Trajectory trajectory;  // step 0 excluded
  // Mean minibatch loss over each checkpoint interval, in step order.
  std::vector<double> interval_losses;
};

// Minibatch SGD over epochs of seeded shuffles. Writes "0" (flagged
// initial) and one checkpoint every checkpoint_interval steps, with id =
// decimal step. Throws kDivergedTraining on a non-finite loss.
TrainResult Train(const Dataset& data, const TrainConfig& config,
                  const ckpt::Store& store);

inline constexpr const char* kToyTaskName = "toy";

// One outcome per (checkpoint, eval example): the predicted class as a
// decimal string, gold label and single reference = true class. The task is
// an exact-match label task.
EvalRun EvaluateToEvalRun(const Trajectory& trajectory, const Dataset& data,
                          const ckpt::Store& store);

struct ToyConfig {
  ToyTaskConfig task;
  TrainConfig train;
};

// Flat YAML mapping; see configs/toy_default.yaml for the keys.
ToyConfig LoadToyConfig(const std::filesystem::path& path);
ToyConfig ParseToyConfig(const std::string& yaml_text);

}  // namespace ckstab::toy
