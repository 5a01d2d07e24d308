#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace blockshampoo {

struct LayerSize {
  std::uint64_t id = 0;
  std::uint64_t params = 0;
};

struct WorkerLoad {
  std::vector<std::uint64_t> layers;  // in assignment order
  std::uint64_t load = 0;
};

struct Assignment {
  std::vector<WorkerLoad> workers;
};

/// Greedy layer-to-worker placement: layers by descending parameter count
/// (ties by ascending id) each go to the currently least-loaded worker
/// (ties to the lowest worker index).
///
/// Throws std::invalid_argument for an empty layer list, zero workers, a
/// zero-size layer or a duplicate id.
Assignment greedy_balance(std::span<const LayerSize> layers, std::size_t workers);

struct SyncCost {
  std::uint64_t makespan = 0;          // largest worker load
  std::uint64_t broadcast_volume = 0;  // parameters sent after the update
};

SyncCost simulate_sync_cost(const Assignment& assignment);

/// Parses "id params" lines; blank lines and '#' comments are skipped.
std::vector<LayerSize> read_layer_sizes(std::istream& in);

}  // namespace blockshampoo
