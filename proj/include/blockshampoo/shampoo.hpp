#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "blockshampoo/blocking.hpp"
#include "blockshampoo/inverse_root.hpp"
#include "blockshampoo/matrix.hpp"

namespace blockshampoo {

struct LearningRate {
  enum class Kind { Constant, Linear, Cosine };
  Kind kind = Kind::Constant;
  double base = 1e-3;
  /// Horizon for the decaying schedules; ignored for Constant.
  std::size_t total_steps = 0;

  /// eta at 0-based step t. Linear and Cosine decay to 0 at total_steps.
  double at(std::size_t t) const;
};

struct GraftConfig {
  /// Momentum on the grafting gradient; 0 grafts from the raw gradient.
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ShampooConfig {
  double beta_lr = 0.95;
  double epsilon = 1e-10;
  LearningRate lr;
  std::size_t update_freq = 1;
  SolverConfig solver;
  std::size_t block_size = 1024;
  GraftConfig graft;
  std::uint64_t seed = 0;
};

/// A trainable parameter. Vector layers are (length, 1) matrices and only get
/// a left preconditioner.
struct LayerShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool vector_layer = false;
};

struct StepStats {
  std::size_t step = 0;
  bool refreshed = false;
  double update_norm = 0.0;
};

/// ||P||_F / ||U||_F, or 0 when U is zero. Shapes must agree.
double graft_scale(const Matrix& u, const Matrix& p);

/// Blocked Shampoo with Adam grafting.
///
/// Preconditioner blocks of equal dimension and root order across all
/// layers live in one stacked tensor per group, and their inverse roots are
/// recomputed with one batched solver call per group whenever the 0-based
/// step counter is a multiple of update_freq. In between, the cached roots
/// are reused unchanged.
class ShampooOptimizer {
 public:
  ShampooOptimizer(std::vector<LayerShape> layers, ShampooConfig cfg);

  /// L <- beta L + (1 - beta) G G^T and R <- beta R + (1 - beta) G^T G per
  /// block (then symmetrized), plus the Adam second moment. Does not advance
  /// the step counter.
  void accumulate(std::span<const Matrix> grads);

  /// Recomputes every cached root if step() % update_freq == 0; returns
  /// whether it did. Throws NumericalError naming the layer and block if a
  /// solver fails.
  bool refresh_inverse_roots();
  /// Recomputes regardless of the step counter.
  void force_refresh();

  /// One full update: accumulate, maybe refresh, precondition, graft, apply.
  StepStats step(std::span<Matrix> params, std::span<const Matrix> grads);

  /// Shampoo direction U for one layer from the cached roots.
  Matrix shampoo_direction(std::size_t layer, const Matrix& grad) const;
  /// Adam grafting direction P from the current moments.
  Matrix graft_direction(std::size_t layer, const Matrix& grad) const;

  std::size_t step_count() const noexcept { return step_; }
  const ShampooConfig& config() const noexcept { return cfg_; }
  const std::vector<LayerShape>& layers() const noexcept { return layers_; }
  const PartitionPlan& plan(std::size_t layer) const { return plans_.at(layer); }
  const std::vector<StackGroup>& groups() const noexcept { return groups_; }
  const BatchedTensor& group_roots(std::size_t group) const { return roots_.at(group); }

  Matrix preconditioner(std::size_t layer, Side side, std::size_t block) const;
  Matrix inverse_root(std::size_t layer, Side side, std::size_t block) const;
  const Matrix& second_moment(std::size_t layer) const { return second_moment_.at(layer); }

  /// Text checkpoint; the format is described in docs/checkpoint.md.
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  /// Restores state written by save(). The optimizer must have been built
  /// with the same layer shapes and block size.
  void load(std::istream& in);
  void load(const std::filesystem::path& path);

 private:
  struct Slot {
    std::size_t group = 0;
    std::size_t index = 0;
  };

  void check_grads(std::span<const Matrix> grads) const;
  const Slot& slot(std::size_t layer, Side side, std::size_t block) const;
  void refresh();

  ShampooConfig cfg_;
  std::vector<LayerShape> layers_;
  std::vector<PartitionPlan> plans_;
  std::vector<StackGroup> groups_;
  std::vector<BatchedTensor> roots_;
  std::vector<std::vector<Slot>> left_;
  std::vector<std::vector<Slot>> right_;
  std::vector<Matrix> second_moment_;
  std::vector<Matrix> momentum_;
  std::size_t step_ = 0;
  std::size_t accumulated_ = 0;
};

}  // namespace blockshampoo
