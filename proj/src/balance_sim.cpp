#include "blockshampoo/balance_sim.hpp"

#include <algorithm>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace blockshampoo {

Assignment greedy_balance(std::span<const LayerSize> layers, std::size_t workers) {
  if (layers.empty()) throw std::invalid_argument("greedy_balance: no layers");
  if (workers == 0) throw std::invalid_argument("greedy_balance: need at least one worker");
  std::set<std::uint64_t> ids;
  for (const auto& l : layers) {
    if (l.params == 0) throw std::invalid_argument("greedy_balance: layer " + std::to_string(l.id) + " is empty");
    if (!ids.insert(l.id).second) throw std::invalid_argument("greedy_balance: duplicate id " + std::to_string(l.id));
  }
  std::vector<LayerSize> order(layers.begin(), layers.end());
  std::sort(order.begin(), order.end(), [](const LayerSize& a, const LayerSize& b) {
    return a.params != b.params ? a.params > b.params : a.id < b.id;
  });

  Assignment out;
  out.workers.resize(workers);
  for (const auto& l : order) {
    // min_element returns the first minimum, i.e. the lowest index.
    auto it = std::min_element(out.workers.begin(), out.workers.end(),
                               [](const WorkerLoad& a, const WorkerLoad& b) { return a.load < b.load; });
    it->layers.push_back(l.id);
    it->load += l.params;
  }
  return out;
}

SyncCost simulate_sync_cost(const Assignment& assignment) {
  SyncCost cost;
  for (const auto& w : assignment.workers) {
    cost.makespan = std::max(cost.makespan, w.load);
    cost.broadcast_volume += w.load;
  }
  return cost;
}

std::vector<LayerSize> read_layer_sizes(std::istream& in) {
  std::vector<LayerSize> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    LayerSize l;
    std::string rest;
    try {
      std::size_t pos = 0;
      l.id = std::stoull(first, &pos);
      if (pos != first.size() || first[0] == '-') throw std::invalid_argument("id");
      std::string second;
      if (!(ls >> second) || second[0] == '-') throw std::invalid_argument("params");
      l.params = std::stoull(second, &pos);
      if (pos != second.size()) throw std::invalid_argument("params");
    } catch (const std::exception&) {
      throw std::runtime_error("layer sizes: line " + std::to_string(lineno) + " must be 'id params'");
    }
    if (ls >> rest) throw std::runtime_error("layer sizes: trailing data on line " + std::to_string(lineno));
    out.push_back(l);
  }
  return out;
}

}  // namespace blockshampoo
