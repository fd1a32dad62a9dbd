#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ckstab/metrics.hpp"
#include "ckstab/toytrain.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace ckstab;
using namespace ckstab::toy;
using testing::CodeOf;
using testing::TempDir;

namespace {

ToyTaskConfig SmallTask() {
  ToyTaskConfig c;
  c.train_size = 600;
  c.eval_size = 200;
  c.seed = 5;
  return c;
}

TrainConfig SmallTrain() {
  TrainConfig c;
  c.total_steps = 500;
  c.checkpoint_interval = 20;
  c.seed = 9;
  c.run_id = "small";
  return c;
}

std::string FileBytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Argmax of W x + b computed directly, lowest index on ties.
int OraclePredict(const ToyModel& m, std::span<const float> x) {
  int best = 0;
  double best_logit = 0;
  for (int k = 0; k < m.n_classes; ++k) {
    double z = m.bias[static_cast<std::size_t>(k)];
    for (int j = 0; j < m.input_dim; ++j) {
      z += static_cast<double>(m.weights[static_cast<std::size_t>(k * m.input_dim + j)]) * x[static_cast<std::size_t>(j)];
    }
    if (k == 0 || z > best_logit) {
      best = k;
      best_logit = z;
    }
  }
  return best;
}

ToyModel RandomModel(testing::TestRng& rng, int k, int d, double scale) {
  ToyModel m = ToyModel::Zeros(k, d);
  for (float& w : m.weights) w = static_cast<float>((rng.Uniform() - 0.5) * 2 * scale);
  for (float& b : m.bias) b = static_cast<float>((rng.Uniform() - 0.5) * 2 * scale);
  return m;
}

}  // namespace

TEST_CASE("splitmix64 reference values") {
  // First outputs for seed 0 from the reference implementation.
  SplitMix64 rng(0);
  CHECK(rng.Next() == 0xE220A8397B1DCDAFull);
  CHECK(rng.Next() == 0x6E789E6AA1B965F4ull);
  CHECK(rng.Next() == 0x06C45D188009454Full);
  SplitMix64 u(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.Uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(u.Below(7) < 7u);
  }
  CHECK(DeriveSeed(1, 2) != DeriveSeed(1, 3));
  CHECK(DeriveSeed(1, 2) != DeriveSeed(2, 2));
}

TEST_CASE("generated task") {
  const ToyTaskConfig cfg = SmallTask();
  const Dataset a = GenTask(cfg), b = GenTask(cfg);
  CHECK(a == b);
  CHECK(a.train_x.size() == 600u * 16);
  CHECK(a.eval_ids.front() == "e00000");
  CHECK(a.eval_ids.back() == "e00199");

  ToyTaskConfig other = cfg;
  other.seed = 6;
  CHECK_FALSE(GenTask(other) == a);

  ToyTaskConfig noisy = cfg;
  noisy.train_size = 4000;
  noisy.label_noise_rate = 0.2;
  const Dataset n = GenTask(noisy);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < n.train_size(); ++i) {
    flipped += n.train_y[i] != n.train_clean_y[i];
    CHECK(n.train_y[i] >= 0);
    CHECK(n.train_y[i] < 4);
  }
  const double rate = static_cast<double>(flipped) / n.train_size();
  CHECK(rate >= 0.16);
  CHECK(rate <= 0.24);

  ToyTaskConfig clean = cfg;
  clean.label_noise_rate = 0.0;
  const Dataset c = GenTask(clean);
  CHECK(c.train_y == c.train_clean_y);
}

TEST_CASE("separable task is learned") {
  ToyTaskConfig cfg = SmallTask();
  cfg.spread = 8.0;
  cfg.label_noise_rate = 0.0;
  const Dataset data = GenTask(cfg);
  TempDir dir;
  const ckpt::Store store(dir / "ckpt");
  TrainConfig tc = SmallTrain();
  const TrainResult r = Train(data, tc, store);
  const ToyModel m = FromCheckpoint(store.Get(r.trajectory.checkpoints().back().id));
  std::size_t right = 0;
  for (std::size_t i = 0; i < data.train_size(); ++i) right += Predict(m, data.TrainRow(i)) == data.train_y[i];
  CHECK(static_cast<double>(right) / data.train_size() >= 0.99);
}

TEST_CASE("model forward pass") {
  const ToyModel zero = ToyModel::Zeros(4, 3);
  const std::vector<float> x{0.3f, -1.0f, 2.0f};
  for (double p : Forward(zero, x)) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(Predict(zero, x) == 0);
  const std::vector<int> labels{2};
  CHECK(LossAndGradient(zero, x, labels).loss == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  testing::TestRng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    ToyModel m = RandomModel(rng, 5, 3, 30.0);
    const auto p = Forward(m, x);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : p) CHECK(std::isfinite(v));
    // Shifting every logit by the same amount keeps the argmax.
    const int before = Predict(m, x);
    for (float& b : m.bias) b += 7.0f;
    CHECK(Predict(m, x) == before);
  }

  const std::vector<float> two_rows(6, 0.0f);
  const std::vector<int> one_label{1};
  CHECK(CodeOf([&] { LossAndGradient(zero, two_rows, one_label); }) ==
        ErrorCode::kDimensionMismatch);
  CHECK(CodeOf([&] { LossAndGradient(zero, {}, {}); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("gradient matches finite differences") {
  testing::TestRng rng(31);
  const Dataset data = GenTask(SmallTask());
  for (int point = 0; point < 20; ++point) {
    const ToyModel m = RandomModel(rng, data.n_classes, data.input_dim, 0.5);
    const std::size_t start = rng.Below(data.train_size() - 16);
    const std::span<const float> x(data.train_x.data() + start * data.input_dim, 16 * data.input_dim);
    const std::span<const int> y(data.train_y.data() + start, 16);
    const auto check = testing::CheckGradient(m, x, y);
    CHECK(check.relative_error < 1e-4);
    CHECK(check.parameters == 4u * 16 + 4);
  }
}

TEST_CASE("confident correct predictions have near-zero loss") {
  ToyModel m = ToyModel::Zeros(3, 1);
  m.bias = {40.0f, 0.0f, 0.0f};
  const std::vector<float> x{1.0f};
  const std::vector<int> y{0};
  const auto lg = LossAndGradient(m, x, y);
  CHECK(lg.loss < 1e-12);
  CHECK(lg.loss >= 0.0);
}

TEST_CASE("checkpoint conversion") {
  testing::TestRng rng(3);
  const ToyModel m = RandomModel(rng, 4, 16, 1.0);
  const ckpt::Checkpoint c = ToCheckpoint(m, "r", 40, false);
  CHECK(c.tensors[0].name == "bias");
  CHECK(c.tensors[1].shape == std::vector<std::int64_t>{4, 16});
  CHECK(FromCheckpoint(c) == m);
}

TEST_CASE("training is deterministic and learns") {
  const Dataset data = GenTask(SmallTask());
  const TrainConfig tc = SmallTrain();
  CHECK(tc.CheckpointCount() == 25);
  TempDir dir;
  const ckpt::Store s1(dir / "a"), s2(dir / "b");
  const TrainResult r1 = Train(data, tc, s1);
  const TrainResult r2 = Train(data, tc, s2);
  CHECK(r1.trajectory.steps().size() == 25);
  CHECK(r1.trajectory.steps().front() == 20);
  CHECK(r1.trajectory.steps().back() == 500);
  CHECK(r1.interval_losses == r2.interval_losses);
  CHECK(s1.Get("0").initial);
  CHECK(FromCheckpoint(s1.Get("0")) == ToyModel::Zeros(4, 16));
  for (const auto& ref : r1.trajectory.checkpoints()) {
    CHECK(FileBytes(s1.PathFor(ref.id)) == FileBytes(s2.PathFor(ref.id)));
  }
  CHECK(r1.interval_losses.back() < r1.interval_losses.front());

  const EvalRun run = EvaluateToEvalRun(r1.trajectory, data, s1);
  CHECK(run.TaskNames() == std::vector<std::string>{"toy"});
  CHECK(run.Info("toy").label_task);
  CHECK(run.OutcomeCount() == 25u * 200);
  CHECK(EvaluateToEvalRun(r1.trajectory, data, s2) == run);

  // Independent re-forward of sampled cells.
  const auto& table = run.Task("toy");
  testing::TestRng rng(8);
  for (int i = 0; i < 100; ++i) {
    const std::size_t e = rng.Below(table.example_ids.size());
    const std::size_t t = rng.Below(25);
    const auto& cell = table.cells[e][t];
    const ToyModel m = FromCheckpoint(s1.Get(r1.trajectory.checkpoints()[t].id));
    const std::size_t row = std::stoul(cell.example_id.substr(1));
    CHECK(cell.output == std::to_string(OraclePredict(m, data.EvalRow(row))));
    CHECK(*cell.gold_label == std::to_string(data.eval_y[row]));
    CHECK(cell.references == std::vector<std::string>{*cell.gold_label});
  }

  // Enough examples change correctness along the trajectory.
  std::size_t flippy = 0;
  for (const auto& id : table.example_ids) {
    const auto s = ExampleScoreSeries(run, "toy", id, scoring::ScoreFnKind::kExactMatch);
    int flips = 0;
    for (std::size_t i = 1; i < s.size(); ++i) flips += s.values[i] != s.values[i - 1];
    flippy += flips >= 2;
  }
  CHECK(static_cast<double>(flippy) / table.example_ids.size() >= 0.10);
}

TEST_CASE("zero model predicts class 0") {
  ToyTaskConfig cfg = SmallTask();
  cfg.eval_size = 20;
  const Dataset data = GenTask(cfg);
  TempDir dir;
  const ckpt::Store store(dir / "c");
  store.Put("1", ToCheckpoint(ToyModel::Zeros(4, 16), "z", 1, false));
  store.Put("2", ToCheckpoint(ToyModel::Zeros(4, 16), "z", 2, false));
  const EvalRun run = EvaluateToEvalRun(Trajectory::FromSteps("z", {1, 2}), data, store);
  for (const auto& o : run.Outcomes()) CHECK(o.output == "0");
}

TEST_CASE("learning rate schedule") {
  TrainConfig c = SmallTrain();
  CHECK(c.LearningRate(0) == 0.5);
  CHECK(c.LearningRate(499) == 0.5);
  c.schedule = LrSchedule::kLinear;
  CHECK(c.LearningRate(0) == doctest::Approx(0.5));
  CHECK(c.LearningRate(500) == doctest::Approx(0.05));
  CHECK(c.LearningRate(250) == doctest::Approx(0.275));
}

TEST_CASE("config parsing and validation") {
  const ToyConfig c = ParseToyConfig(
      "n_classes: 3\ninput_dim: 5\ntask_seed: 7\ntrain_seed: 8\nlr_schedule: linear\n"
      "total_steps: 1000\ncheckpoint_interval: 40\nrun_id: abc\n");
  CHECK(c.task.n_classes == 3);
  CHECK(c.task.input_dim == 5);
  CHECK(c.task.seed == 7);
  CHECK(c.train.seed == 8);
  CHECK(c.train.schedule == LrSchedule::kLinear);
  CHECK(c.train.run_id == "abc");
  CHECK(c.train.CheckpointCount() == 25);

  CHECK(CodeOf([] { ParseToyConfig("bogus_key: 1\n"); }) == ErrorCode::kInvalidConfig);
  CHECK(CodeOf([] { ParseToyConfig("n_classes: one\n"); }) == ErrorCode::kInvalidConfig);
  CHECK(CodeOf([] { ParseToyConfig("n_classes: 1\n"); }) == ErrorCode::kInvalidConfig);
  CHECK(CodeOf([] { ParseToyConfig("label_noise_rate: 1.5\n"); }) == ErrorCode::kInvalidConfig);
  CHECK(CodeOf([] { ParseToyConfig("lr_schedule: cosine\n"); }) == ErrorCode::kInvalidConfig);
  CHECK(CodeOf([] { ParseToyConfig("total_steps: 480\ncheckpoint_interval: 20\n"); }) ==
        ErrorCode::kInvalidConfig);
  CHECK(CodeOf([] { ParseToyConfig("[1, 2]\n"); }) == ErrorCode::kInvalidConfig);
  CHECK(CodeOf([] { LoadToyConfig("/nonexistent/toy.yaml"); }) == ErrorCode::kIoError);

  const ToyConfig bundled = LoadToyConfig(CKSTAB_CONFIG_DIR "/toy_default.yaml");
  CHECK(bundled.train.CheckpointCount() >= 50);
}

TEST_CASE("divergence is reported") {
  ToyTaskConfig cfg = SmallTask();
  cfg.spread = 50.0;
  const Dataset data = GenTask(cfg);
  TrainConfig tc = SmallTrain();
  tc.learning_rate = 1e38;
  TempDir dir;
  const ckpt::Store store(dir / "c");
  CHECK(CodeOf([&] { Train(data, tc, store); }) == ErrorCode::kDivergedTraining);
}

TEST_CASE("results do not depend on the worker count") {
  ToyTaskConfig task = SmallTask();
  task.eval_size = 60;
  const Dataset data = GenTask(task);
  TempDir dir;
  const ckpt::Store store(dir / "c");
  const TrainResult r = Train(data, SmallTrain(), store);

  ::setenv("CKPT_STAB_THREADS", "1", 1);
  const EvalRun serial = EvaluateToEvalRun(r.trajectory, data, store);
  const double is_serial = metrics::TaskInstability(serial, "toy", scoring::ScoreFnKind::kExactMatch);
  ::setenv("CKPT_STAB_THREADS", "4", 1);
  const EvalRun parallel = EvaluateToEvalRun(r.trajectory, data, store);
  const double is_parallel = metrics::TaskInstability(parallel, "toy", scoring::ScoreFnKind::kExactMatch);
  ::unsetenv("CKPT_STAB_THREADS");
  CHECK(serial == parallel);
  CHECK(is_serial == is_parallel);
}
