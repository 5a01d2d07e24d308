#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "blockshampoo/matrix.hpp"

namespace blockshampoo {

/// Region of the original layer covered by one block.
struct BlockPlacement {
  std::size_t row0 = 0;
  std::size_t rows = 0;
  std::size_t col0 = 0;
  std::size_t cols = 0;

  friend bool operator==(const BlockPlacement&, const BlockPlacement&) = default;
};

/// Shape-only description of how a rows x cols layer splits into blocks.
///
/// Block order: the blocks_down * blocks_across full B x B blocks first, in
/// row-major order over (block-row, block-col); then the ragged edge blocks
/// in row-major order of the block grid (right-edge (B, c) blocks, then the
/// bottom row of (r, B) blocks followed by the (r, c) corner).
///
/// A vector layer is planned as a (length, 1) column and only gets a left
/// preconditioner, inverted with exponent -1/2.
struct PartitionPlan {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t block_size = 0;
  std::size_t blocks_down = 0;    // N_m = floor(rows / B)
  std::size_t blocks_across = 0;  // N_n = floor(cols / B)
  bool vector_layer = false;
  std::vector<BlockPlacement> placements;

  std::size_t full_count() const noexcept { return blocks_down * blocks_across; }
  std::size_t block_count() const noexcept { return placements.size(); }
  /// Exponent p of the inverse root applied to this layer's preconditioners.
  int root_order() const noexcept { return vector_layer ? 2 : 4; }
};

/// Throws std::invalid_argument for block_size == 0 or an empty layer.
PartitionPlan plan_partition(std::size_t rows, std::size_t cols, std::size_t block_size);
PartitionPlan plan_vector_partition(std::size_t length, std::size_t block_size);

struct RemainderBlock {
  std::size_t index = 0;  // position in the plan's block order
  Matrix block;
};

/// A layer's gradient split per its plan.
struct BlockPartition {
  PartitionPlan plan;
  BatchedTensor full_blocks;                   // (N_m * N_n, B, B)
  std::vector<RemainderBlock> remainder_blocks;

  Matrix block(std::size_t index) const;
};

BlockPartition partition(const Matrix& g, std::size_t block_size);
/// Partitions `g` along an existing plan (same shape required).
BlockPartition partition(const Matrix& g, const PartitionPlan& plan);

/// Copies block `index` of `plan` out of `g` without materializing the rest.
Matrix extract_block(const Matrix& g, const PartitionPlan& plan, std::size_t index);

/// Rebuilds the layer from (block index, block) pairs given in any order.
/// Throws std::invalid_argument on a missing, duplicate or mis-shaped block.
Matrix reassemble(const PartitionPlan& plan, std::span<const std::pair<std::size_t, Matrix>> blocks);
Matrix reassemble(const BlockPartition& p);

struct PreconditionerShapes {
  std::vector<std::size_t> left;   // dimension of L per block
  std::vector<std::size_t> right;  // dimension of R per block; empty for vector layers
};

PreconditionerShapes preconditioner_shapes(const PartitionPlan& plan);

enum class Side { Left, Right };

struct StackMember {
  std::size_t layer = 0;
  Side side = Side::Left;
  std::size_t block = 0;

  friend auto operator<=>(const StackMember&, const StackMember&) = default;
};

/// Preconditioner blocks of one shape (and root order) processed by a single
/// batched solver call. `tensor` is filled by the owner (the optimizer);
/// grouping itself is metadata only.
struct StackGroup {
  std::size_t dim = 0;
  int root_order = 4;
  std::vector<StackMember> members;  // sorted by (layer, side, block)
  BatchedTensor tensor;
};

struct LayerPlan {
  std::size_t layer = 0;
  PartitionPlan plan;
};

/// Groups every preconditioner block across all layers by (dimension, root
/// order). Groups come out by descending dimension, then descending root
/// order; the result does not depend on the order of `layers`.
std::vector<StackGroup> build_stack_groups(std::span<const LayerPlan> layers);

/// Several same-length 1-D layers (e.g. normalization gains) cut into
/// (B, 1) column chunks; a trailing chunk of length E mod B is kept ragged.
struct NormChunk {
  std::size_t layer = 0;
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct NormStack {
  std::size_t block_size = 0;
  std::size_t layer_length = 0;
  std::size_t layer_count = 0;
  std::vector<NormChunk> chunks;
  std::vector<Matrix> blocks;  // chunk i as a (length, 1) column
};

/// Throws std::invalid_argument for an empty list, zero block size or
/// layers of differing length.
NormStack stack_norm_layers(std::span<const std::vector<double>> layers, std::size_t block_size);

/// Scatters per-chunk columns back into per-layer vectors.
std::vector<std::vector<double>> scatter_norm_layers(const NormStack& meta, std::span<const Matrix> blocks);

}  // namespace blockshampoo
