#include "blockshampoo/shampoo.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "blockshampoo/errors.hpp"
#include "blockshampoo/matrix_io.hpp"

namespace blockshampoo {

double LearningRate::at(std::size_t t) const {
  if (kind == Kind::Constant || total_steps == 0) return base;
  const double frac = std::min(1.0, static_cast<double>(t) / static_cast<double>(total_steps));
  if (kind == Kind::Linear) return base * (1.0 - frac);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double graft_scale(const Matrix& u, const Matrix& p) {
  if (u.rows() != p.rows() || u.cols() != p.cols()) throw std::invalid_argument("graft_scale: shape mismatch");
  const double un = frobenius_norm(u);
  if (un == 0.0) return 0.0;
  return frobenius_norm(p) / un;
}

ShampooOptimizer::ShampooOptimizer(std::vector<LayerShape> layers, ShampooConfig cfg)
    : cfg_(std::move(cfg)), layers_(std::move(layers)) {
  if (!(cfg_.beta_lr >= 0.0 && cfg_.beta_lr < 1.0)) throw std::invalid_argument("shampoo: beta_lr must be in [0, 1)");
  if (!(cfg_.epsilon > 0.0)) throw std::invalid_argument("shampoo: epsilon must be > 0");
  if (cfg_.update_freq == 0) throw std::invalid_argument("shampoo: update frequency must be >= 1");
  if (!(cfg_.graft.beta1 >= 0.0 && cfg_.graft.beta1 < 1.0) || !(cfg_.graft.beta2 >= 0.0 && cfg_.graft.beta2 < 1.0)) {
    throw std::invalid_argument("shampoo: grafting betas must be in [0, 1)");
  }
  std::vector<LayerPlan> layer_plans;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerShape& s = layers_[l];
    if (s.vector_layer && s.cols != 1) throw std::invalid_argument("shampoo: vector layers must have one column");
    plans_.push_back(s.vector_layer ? plan_vector_partition(s.rows, cfg_.block_size)
                                    : plan_partition(s.rows, s.cols, cfg_.block_size));
    layer_plans.push_back({l, plans_.back()});
    second_moment_.emplace_back(s.rows, s.cols);
    if (cfg_.graft.beta1 > 0.0) momentum_.emplace_back(s.rows, s.cols);
  }
  groups_ = build_stack_groups(layer_plans);
  left_.resize(layers_.size());
  right_.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    left_[l].resize(plans_[l].block_count());
    if (!layers_[l].vector_layer) right_[l].resize(plans_[l].block_count());
  }
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    StackGroup& group = groups_[g];
    group.tensor = BatchedTensor(group.members.size(), group.dim);
    roots_.emplace_back(group.members.size(), group.dim);
    for (std::size_t i = 0; i < group.members.size(); ++i) {
      const StackMember& m = group.members[i];
      (m.side == Side::Left ? left_ : right_)[m.layer][m.block] = {g, i};
    }
  }
}

const ShampooOptimizer::Slot& ShampooOptimizer::slot(std::size_t layer, Side side, std::size_t block) const {
  const auto& table = side == Side::Left ? left_ : right_;
  return table.at(layer).at(block);
}

Matrix ShampooOptimizer::preconditioner(std::size_t layer, Side side, std::size_t block) const {
  const Slot& s = slot(layer, side, block);
  return groups_[s.group].tensor.block(s.index);
}

Matrix ShampooOptimizer::inverse_root(std::size_t layer, Side side, std::size_t block) const {
  const Slot& s = slot(layer, side, block);
  return roots_[s.group].block(s.index);
}

void ShampooOptimizer::check_grads(std::span<const Matrix> grads) const {
  if (grads.size() != layers_.size()) throw std::invalid_argument("shampoo: expected one gradient per layer");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    if (grads[l].rows() != layers_[l].rows || grads[l].cols() != layers_[l].cols) {
      throw std::invalid_argument("shampoo: gradient " + std::to_string(l) + " has the wrong shape");
    }
  }
}

namespace {

// dst <- beta dst + (1 - beta) * (x x^T or x^T x), symmetrized.
void ema_outer(std::span<double> dst, const Matrix& x, bool left, double beta) {
  const std::size_t n = left ? x.rows() : x.cols();
  const std::size_t k = left ? x.cols() : x.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += left ? x(i, t) * x(j, t) : x(t, i) * x(t, j);
      const double v = 0.5 * ((beta * dst[i * n + j] + (1.0 - beta) * s) + (beta * dst[j * n + i] + (1.0 - beta) * s));
      dst[i * n + j] = v;
      dst[j * n + i] = v;
    }
  }
}

}  // namespace

void ShampooOptimizer::accumulate(std::span<const Matrix> grads) {
  check_grads(grads);
  const double beta = cfg_.beta_lr;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const PartitionPlan& plan = plans_[l];
    for (std::size_t b = 0; b < plan.block_count(); ++b) {
      const Matrix g = extract_block(grads[l], plan, b);
      const Slot& ls = left_[l][b];
      ema_outer(groups_[ls.group].tensor.block_data(ls.index), g, true, beta);
      if (!layers_[l].vector_layer) {
        const Slot& rs = right_[l][b];
        ema_outer(groups_[rs.group].tensor.block_data(rs.index), g, false, beta);
      }
    }
    const double b2 = cfg_.graft.beta2;
    auto a = second_moment_[l].data();
    auto gd = grads[l].data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = b2 * a[i] + (1.0 - b2) * gd[i] * gd[i];
    if (!momentum_.empty()) {
      const double b1 = cfg_.graft.beta1;
      auto m = momentum_[l].data();
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = b1 * m[i] + (1.0 - b1) * gd[i];
    }
  }
  ++accumulated_;
}

void ShampooOptimizer::refresh() {
  const std::uint64_t step_seed = block_seed(cfg_.seed, step_);
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const StackGroup& group = groups_[g];
    BatchedRoots r = batched_inverse_root(group.tensor, group.root_order, cfg_.epsilon, cfg_.solver,
                                          block_seed(step_seed, g + 1));
    if (const auto bad = first_failure(r.reports)) {
      const StackMember& m = group.members[*bad];
      throw NumericalError(std::string("inverse root failed (") + to_string(r.reports[*bad].status) + ") for layer " +
                           std::to_string(m.layer) + (m.side == Side::Left ? " L" : " R") + " block " +
                           std::to_string(m.block) + " at step " + std::to_string(step_));
    }
    roots_[g] = std::move(r.roots);
  }
}

bool ShampooOptimizer::refresh_inverse_roots() {
  if (step_ % cfg_.update_freq != 0) return false;
  refresh();
  return true;
}

void ShampooOptimizer::force_refresh() { refresh(); }

Matrix ShampooOptimizer::shampoo_direction(std::size_t layer, const Matrix& grad) const {
  const PartitionPlan& plan = plans_.at(layer);
  std::vector<std::pair<std::size_t, Matrix>> blocks;
  blocks.reserve(plan.block_count());
  for (std::size_t b = 0; b < plan.block_count(); ++b) {
    Matrix u = matmul(inverse_root(layer, Side::Left, b), extract_block(grad, plan, b));
    if (!layers_[layer].vector_layer) u = matmul(u, inverse_root(layer, Side::Right, b));
    blocks.emplace_back(b, std::move(u));
  }
  return reassemble(plan, blocks);
}

Matrix ShampooOptimizer::graft_direction(std::size_t layer, const Matrix& grad) const {
  const double t = static_cast<double>(std::max<std::size_t>(accumulated_, 1));
  const double c2 = 1.0 - std::pow(cfg_.graft.beta2, t);
  const bool use_momentum = !momentum_.empty();
  const double c1 = use_momentum ? 1.0 - std::pow(cfg_.graft.beta1, t) : 1.0;
  Matrix p(grad.rows(), grad.cols());
  auto out = p.data();
  auto a = second_moment_.at(layer).data();
  auto g = use_momentum ? momentum_.at(layer).data() : grad.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (g[i] / c1) / (cfg_.graft.eps + std::sqrt(a[i] / c2));
  return p;
}

StepStats ShampooOptimizer::step(std::span<Matrix> params, std::span<const Matrix> grads) {
  check_grads(grads);
  if (params.size() != layers_.size()) throw std::invalid_argument("shampoo: expected one parameter per layer");
  for (std::size_t l = 0; l < params.size(); ++l) {
    if (params[l].rows() != layers_[l].rows || params[l].cols() != layers_[l].cols) {
      throw std::invalid_argument("shampoo: parameter " + std::to_string(l) + " has the wrong shape");
    }
  }
  accumulate(grads);
  StepStats stats;
  stats.step = step_;
  stats.refreshed = refresh_inverse_roots();

  const double eta = cfg_.lr.at(step_);
  double update_sq = 0.0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const PartitionPlan& plan = plans_[l];
    const Matrix u = shampoo_direction(l, grads[l]);
    const Matrix p = graft_direction(l, grads[l]);
    for (std::size_t b = 0; b < plan.block_count(); ++b) {
      const BlockPlacement& pl = plan.placements[b];
      const double s = graft_scale(extract_block(u, plan, b), extract_block(p, plan, b));
      for (std::size_t i = 0; i < pl.rows; ++i)
        for (std::size_t j = 0; j < pl.cols; ++j) {
          const double delta = eta * s * u(pl.row0 + i, pl.col0 + j);
          params[l](pl.row0 + i, pl.col0 + j) -= delta;
          update_sq += delta * delta;
        }
    }
  }
  stats.update_norm = std::sqrt(update_sq);
  ++step_;
  return stats;
}

namespace {

const char* side_tag(Side side) { return side == Side::Left ? "L" : "R"; }

void write_section(std::ostream& out, const std::string& header, const Matrix& m) {
  out << '[' << header << "]\n";
  write_matrix(out, m);
}

Matrix read_section(std::istream& in, const std::string& header) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line != '[' + header + ']') {
      throw std::runtime_error("checkpoint: expected section [" + header + "], found '" + line + "'");
    }
    return read_matrix(in);
  }
  throw std::runtime_error("checkpoint: missing section [" + header + "]");
}

}  // namespace

void ShampooOptimizer::save(std::ostream& out) const {
  out << "blockshampoo-checkpoint 1\n";
  out << std::setprecision(17);
  out << "# method = " << to_string(cfg_.solver.method) << '\n';
  out << "# block_size = " << cfg_.block_size << '\n';
  out << "# beta_lr = " << cfg_.beta_lr << '\n';
  out << "# epsilon = " << cfg_.epsilon << '\n';
  out << "# update_freq = " << cfg_.update_freq << '\n';
  out << "# seed = " << cfg_.seed << '\n';
  out << "step " << step_ << ' ' << accumulated_ << '\n';
  out << "layers " << layers_.size() << '\n';
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (std::size_t b = 0; b < plans_[l].block_count(); ++b) {
      for (Side side : {Side::Left, Side::Right}) {
        if (side == Side::Right && layers_[l].vector_layer) continue;
        const std::string id = std::to_string(l) + ' ' + side_tag(side) + ' ' + std::to_string(b);
        write_section(out, "layer " + id, preconditioner(l, side, b));
        write_section(out, "root " + id, inverse_root(l, side, b));
      }
    }
    write_section(out, "adam " + std::to_string(l), second_moment_[l]);
    if (!momentum_.empty()) write_section(out, "momentum " + std::to_string(l), momentum_[l]);
  }
}

void ShampooOptimizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save(out);
}

void ShampooOptimizer::load(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (line != "blockshampoo-checkpoint 1") throw std::runtime_error("checkpoint: unrecognized header");
  std::size_t step = 0;
  std::size_t accumulated = 0;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "step") {
      if (!(ls >> step >> accumulated)) throw std::runtime_error("checkpoint: bad step line");
    } else if (key == "layers") {
      if (!(ls >> count)) throw std::runtime_error("checkpoint: bad layers line");
      break;
    } else {
      throw std::runtime_error("checkpoint: unexpected line '" + line + "'");
    }
  }
  if (count != layers_.size()) throw std::runtime_error("checkpoint: layer count differs from the optimizer");

  // Read into copies so a failed load leaves the optimizer untouched.
  std::vector<StackGroup> groups = groups_;
  std::vector<BatchedTensor> roots = roots_;
  std::vector<Matrix> second = second_moment_;
  std::vector<Matrix> momentum = momentum_;
  auto expect_shape = [](const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols) throw std::runtime_error("checkpoint: " + what + " has the wrong shape");
  };
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (std::size_t b = 0; b < plans_[l].block_count(); ++b) {
      for (Side side : {Side::Left, Side::Right}) {
        if (side == Side::Right && layers_[l].vector_layer) continue;
        const std::string id = std::to_string(l) + ' ' + side_tag(side) + ' ' + std::to_string(b);
        const Slot& s = slot(l, side, b);
        const std::size_t dim = groups[s.group].dim;
        const Matrix pre = read_section(in, "layer " + id);
        expect_shape(pre, dim, dim, "layer " + id);
        groups[s.group].tensor.set_block(s.index, pre);
        const Matrix root = read_section(in, "root " + id);
        expect_shape(root, dim, dim, "root " + id);
        roots[s.group].set_block(s.index, root);
      }
    }
    second[l] = read_section(in, "adam " + std::to_string(l));
    expect_shape(second[l], layers_[l].rows, layers_[l].cols, "adam " + std::to_string(l));
    if (!momentum.empty()) {
      momentum[l] = read_section(in, "momentum " + std::to_string(l));
      expect_shape(momentum[l], layers_[l].rows, layers_[l].cols, "momentum " + std::to_string(l));
    }
  }
  groups_ = std::move(groups);
  roots_ = std::move(roots);
  second_moment_ = std::move(second);
  momentum_ = std::move(momentum);
  step_ = step;
  accumulated_ = accumulated;
}

void ShampooOptimizer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  load(in);
}

}  // namespace blockshampoo
