#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blockshampoo/matrix.hpp"
#include "blockshampoo/shampoo.hpp"

namespace blockshampoo {

/// Small synthetic objective with hand-written gradients. Everything is a
/// pure function of the construction seed.
class ToyTask {
 public:
  virtual ~ToyTask() = default;
  virtual std::string name() const = 0;
  virtual std::vector<LayerShape> shapes() const = 0;
  virtual std::vector<Matrix> initial_params() const = 0;
  /// Loss at `params`; `grads` is resized and overwritten.
  virtual double loss_and_grad(std::span<const Matrix> params, std::vector<Matrix>& grads) const = 0;
  double loss(std::span<const Matrix> params) const;
};

enum class TaskKind { Quadratic, LogisticRegression, TinyMLP };

/// quadratic, logreg, mlp
TaskKind parse_task_kind(std::string_view name);
const char* to_string(TaskKind kind) noexcept;

/// Quadratic: 0.5 tr(Theta^T H Theta) for a 32x32 Theta and SPD H with
/// eigenvalues log-spaced in [0.1, 10].
/// LogisticRegression: 4-class softmax regression on 256 Gaussian points in
/// 16 dimensions labelled by a random teacher (weights 4x16 plus bias).
/// TinyMLP: 8-16-1 tanh network fit to a random teacher network by mean
/// squared error on 128 points.
std::unique_ptr<ToyTask> make_task(TaskKind kind, std::uint64_t seed);

struct TrainRecord {
  std::size_t step = 0;
  double loss = 0.0;       // before the update
  double grad_norm = 0.0;  // over all layers
  double update_norm = 0.0;
  bool refreshed = false;
};

struct TrainResult {
  std::vector<TrainRecord> records;
  std::vector<Matrix> params;
  double final_loss = 0.0;
};

/// Runs `steps` optimizer steps from the task's initial parameters.
/// Throws NumericalError if the loss stops being finite.
TrainResult train(const ToyTask& task, const ShampooConfig& cfg, std::size_t steps);

struct LrSweepResult {
  double best_lr = 0.0;
  double best_final_loss = 0.0;
  std::vector<std::pair<double, double>> trials;  // (lr, final loss); NaN when the run failed
};

/// Trains once per candidate learning rate and keeps the lowest final loss.
/// Throws NumericalError if every candidate fails.
LrSweepResult sweep_learning_rate(const ToyTask& task, const ShampooConfig& cfg, std::size_t steps,
                                  std::span<const double> candidates);

/// Default sweep grid: 1e-3 to 1 in half-decade steps.
std::vector<double> default_lr_grid();

}  // namespace blockshampoo
