#include "blockshampoo/blocking.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>

namespace blockshampoo {

PartitionPlan plan_partition(std::size_t rows, std::size_t cols, std::size_t block_size) {
  if (block_size == 0) throw std::invalid_argument("plan_partition: block size must be >= 1");
  if (rows == 0 || cols == 0) throw std::invalid_argument("plan_partition: empty layer");
  PartitionPlan plan;
  plan.rows = rows;
  plan.cols = cols;
  plan.block_size = block_size;
  plan.blocks_down = rows / block_size;
  plan.blocks_across = cols / block_size;
  const std::size_t b = block_size;
  const std::size_t r = rows % b;
  const std::size_t c = cols % b;

  for (std::size_t i = 0; i < plan.blocks_down; ++i)
    for (std::size_t j = 0; j < plan.blocks_across; ++j) plan.placements.push_back({i * b, b, j * b, b});

  if (c != 0) {
    for (std::size_t i = 0; i < plan.blocks_down; ++i)
      plan.placements.push_back({i * b, b, plan.blocks_across * b, c});
  }
  if (r != 0) {
    const std::size_t row0 = plan.blocks_down * b;
    for (std::size_t j = 0; j < plan.blocks_across; ++j) plan.placements.push_back({row0, r, j * b, b});
    if (c != 0) plan.placements.push_back({row0, r, plan.blocks_across * b, c});
  }
  return plan;
}

PartitionPlan plan_vector_partition(std::size_t length, std::size_t block_size) {
  PartitionPlan plan = plan_partition(length, 1, block_size);
  plan.vector_layer = true;
  return plan;
}

Matrix extract_block(const Matrix& g, const PartitionPlan& plan, std::size_t index) {
  const BlockPlacement& pl = plan.placements.at(index);
  Matrix out(pl.rows, pl.cols);
  for (std::size_t i = 0; i < pl.rows; ++i)
    for (std::size_t j = 0; j < pl.cols; ++j) out(i, j) = g(pl.row0 + i, pl.col0 + j);
  return out;
}

BlockPartition partition(const Matrix& g, const PartitionPlan& plan) {
  if (g.rows() != plan.rows || g.cols() != plan.cols) throw std::invalid_argument("partition: shape differs from plan");
  BlockPartition out;
  out.plan = plan;
  out.full_blocks = BatchedTensor(plan.full_count(), plan.block_size);
  for (std::size_t i = 0; i < plan.full_count(); ++i) out.full_blocks.set_block(i, extract_block(g, plan, i));
  for (std::size_t i = plan.full_count(); i < plan.block_count(); ++i) {
    out.remainder_blocks.push_back({i, extract_block(g, plan, i)});
  }
  return out;
}

BlockPartition partition(const Matrix& g, std::size_t block_size) {
  return partition(g, plan_partition(g.rows(), g.cols(), block_size));
}

Matrix BlockPartition::block(std::size_t index) const {
  if (index < plan.full_count()) return full_blocks.block(index);
  for (const auto& rb : remainder_blocks)
    if (rb.index == index) return rb.block;
  throw std::out_of_range("BlockPartition::block: no block " + std::to_string(index));
}

Matrix reassemble(const PartitionPlan& plan, std::span<const std::pair<std::size_t, Matrix>> blocks) {
  Matrix out(plan.rows, plan.cols);
  std::vector<std::uint8_t> seen(plan.block_count(), 0);
  for (const auto& [index, block] : blocks) {
    if (index >= plan.block_count()) throw std::invalid_argument("reassemble: block index out of range");
    if (seen[index]) throw std::invalid_argument("reassemble: duplicate block " + std::to_string(index));
    const BlockPlacement& pl = plan.placements[index];
    if (block.rows() != pl.rows || block.cols() != pl.cols) {
      throw std::invalid_argument("reassemble: block " + std::to_string(index) + " has the wrong shape");
    }
    seen[index] = 1;
    for (std::size_t i = 0; i < pl.rows; ++i)
      for (std::size_t j = 0; j < pl.cols; ++j) out(pl.row0 + i, pl.col0 + j) = block(i, j);
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw std::invalid_argument("reassemble: missing block " + std::to_string(i));
  }
  return out;
}

Matrix reassemble(const BlockPartition& p) {
  std::vector<std::pair<std::size_t, Matrix>> blocks;
  blocks.reserve(p.plan.block_count());
  for (std::size_t i = 0; i < p.plan.full_count(); ++i) blocks.emplace_back(i, p.full_blocks.block(i));
  for (const auto& rb : p.remainder_blocks) blocks.emplace_back(rb.index, rb.block);
  return reassemble(p.plan, blocks);
}

PreconditionerShapes preconditioner_shapes(const PartitionPlan& plan) {
  PreconditionerShapes shapes;
  for (const auto& pl : plan.placements) {
    shapes.left.push_back(pl.rows);
    if (!plan.vector_layer) shapes.right.push_back(pl.cols);
  }
  return shapes;
}

std::vector<StackGroup> build_stack_groups(std::span<const LayerPlan> layers) {
  // Key sorts descending by dimension, then by root order.
  using Key = std::tuple<std::size_t, int>;
  std::map<Key, std::vector<StackMember>, std::greater<>> groups;
  for (const auto& [layer, plan] : layers) {
    const PreconditionerShapes shapes = preconditioner_shapes(plan);
    for (std::size_t b = 0; b < shapes.left.size(); ++b)
      groups[{shapes.left[b], plan.root_order()}].push_back({layer, Side::Left, b});
    for (std::size_t b = 0; b < shapes.right.size(); ++b)
      groups[{shapes.right[b], plan.root_order()}].push_back({layer, Side::Right, b});
  }
  std::vector<StackGroup> out;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end());
    out.push_back({std::get<0>(key), std::get<1>(key), std::move(members), {}});
  }
  return out;
}

NormStack stack_norm_layers(std::span<const std::vector<double>> layers, std::size_t block_size) {
  if (layers.empty()) throw std::invalid_argument("stack_norm_layers: no layers");
  if (block_size == 0) throw std::invalid_argument("stack_norm_layers: block size must be >= 1");
  const std::size_t length = layers.front().size();
  if (length == 0) throw std::invalid_argument("stack_norm_layers: empty layer");
  NormStack out;
  out.block_size = block_size;
  out.layer_length = length;
  out.layer_count = layers.size();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].size() != length) throw std::invalid_argument("stack_norm_layers: layers differ in length");
    for (std::size_t off = 0; off < length; off += block_size) {
      const std::size_t len = std::min(block_size, length - off);
      out.chunks.push_back({l, off, len});
      out.blocks.push_back(Matrix::column(std::span<const double>(layers[l]).subspan(off, len)));
    }
  }
  return out;
}

std::vector<std::vector<double>> scatter_norm_layers(const NormStack& meta, std::span<const Matrix> blocks) {
  if (blocks.size() != meta.chunks.size()) throw std::invalid_argument("scatter_norm_layers: chunk count mismatch");
  std::vector<std::vector<double>> out(meta.layer_count, std::vector<double>(meta.layer_length, 0.0));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const NormChunk& ch = meta.chunks[i];
    if (blocks[i].rows() != ch.length || blocks[i].cols() != 1) {
      throw std::invalid_argument("scatter_norm_layers: chunk " + std::to_string(i) + " has the wrong shape");
    }
    for (std::size_t k = 0; k < ch.length; ++k) out[ch.layer][ch.offset + k] = blocks[i](k, 0);
  }
  return out;
}

}  // namespace blockshampoo
