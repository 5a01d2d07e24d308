#include "blockshampoo/toy_tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "blockshampoo/errors.hpp"

namespace blockshampoo {

double ToyTask::loss(std::span<const Matrix> params) const {
  std::vector<Matrix> scratch;
  return loss_and_grad(params, scratch);
}

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

// Orthonormal columns via modified Gram-Schmidt on a Gaussian matrix.
Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  Matrix q = gaussian(n, n, rng);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

class QuadraticTask final : public ToyTask {
 public:
  explicit QuadraticTask(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    constexpr std::size_t n = 32;
    const Matrix q = random_orthogonal(n, rng);
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) d(i, i) = 0.1 * std::pow(100.0, static_cast<double>(i) / (n - 1));
    h_ = symmetrize(matmul(matmul(q, d), q.transposed()));
    theta0_ = gaussian(n, n, rng);
  }
  std::string name() const override { return "quadratic"; }
  std::vector<LayerShape> shapes() const override { return {{32, 32, false}}; }
  std::vector<Matrix> initial_params() const override { return {theta0_}; }
  double loss_and_grad(std::span<const Matrix> params, std::vector<Matrix>& grads) const override {
    const Matrix g = matmul(h_, params[0]);
    double loss = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) loss += 0.5 * params[0].data()[i] * g.data()[i];
    grads.assign({g});
    return loss;
  }
  const Matrix& hessian() const { return h_; }

 private:
  Matrix h_;
  Matrix theta0_;
};

class LogisticTask final : public ToyTask {
 public:
  static constexpr std::size_t kSamples = 256;
  static constexpr std::size_t kDims = 16;
  static constexpr std::size_t kClasses = 4;

  explicit LogisticTask(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    x_ = gaussian(kSamples, kDims, rng);
    const Matrix teacher = gaussian(kClasses, kDims, rng);
    const Matrix scores = matmul(x_, teacher.transposed());
    labels_.resize(kSamples);
    for (std::size_t i = 0; i < kSamples; ++i) {
      const auto row = scores.row(i);
      labels_[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
  }
  std::string name() const override { return "logreg"; }
  std::vector<LayerShape> shapes() const override { return {{kClasses, kDims, false}, {kClasses, 1, true}}; }
  std::vector<Matrix> initial_params() const override { return {Matrix(kClasses, kDims), Matrix(kClasses, 1)}; }
  double loss_and_grad(std::span<const Matrix> params, std::vector<Matrix>& grads) const override {
    const Matrix& w = params[0];
    const Matrix& b = params[1];
    Matrix gw(kClasses, kDims);
    Matrix gb(kClasses, 1);
    const Matrix logits = matmul(x_, w.transposed());
    double loss = 0.0;
    std::vector<double> p(kClasses);
    for (std::size_t i = 0; i < kSamples; ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < kClasses; ++c) {
        p[c] = logits(i, c) + b(c, 0);
        top = std::max(top, p[c]);
      }
      double z = 0.0;
      for (double& v : p) z += (v = std::exp(v - top));
      loss += -(std::log(p[labels_[i]] / z));
      for (std::size_t c = 0; c < kClasses; ++c) {
        const double r = (p[c] / z - (c == labels_[i] ? 1.0 : 0.0)) / kSamples;
        gb(c, 0) += r;
        for (std::size_t k = 0; k < kDims; ++k) gw(c, k) += r * x_(i, k);
      }
    }
    grads.assign({gw, gb});
    return loss / kSamples;
  }

 private:
  Matrix x_;
  std::vector<std::size_t> labels_;
};

class MlpTask final : public ToyTask {
 public:
  static constexpr std::size_t kIn = 8;
  static constexpr std::size_t kHidden = 16;
  static constexpr std::size_t kSamples = 128;

  explicit MlpTask(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    x_ = gaussian(kSamples, kIn, rng);
    const Matrix t1 = gaussian(kHidden, kIn, rng, 1.0 / std::sqrt(kIn));
    const Matrix t2 = gaussian(1, kHidden, rng, 1.0 / std::sqrt(kHidden));
    y_ = Matrix(kSamples, 1);
    for (std::size_t i = 0; i < kSamples; ++i) {
      double out = 0.0;
      for (std::size_t h = 0; h < kHidden; ++h) {
        double a = 0.0;
        for (std::size_t k = 0; k < kIn; ++k) a += t1(h, k) * x_(i, k);
        out += t2(0, h) * std::tanh(a);
      }
      y_(i, 0) = out;
    }
    w1_ = gaussian(kHidden, kIn, rng, 1.0 / std::sqrt(kIn));
    w2_ = gaussian(1, kHidden, rng, 1.0 / std::sqrt(kHidden));
  }
  std::string name() const override { return "mlp"; }
  std::vector<LayerShape> shapes() const override {
    return {{kHidden, kIn, false}, {kHidden, 1, true}, {1, kHidden, false}, {1, 1, true}};
  }
  std::vector<Matrix> initial_params() const override { return {w1_, Matrix(kHidden, 1), w2_, Matrix(1, 1)}; }
  double loss_and_grad(std::span<const Matrix> params, std::vector<Matrix>& grads) const override {
    const Matrix& w1 = params[0];
    const Matrix& b1 = params[1];
    const Matrix& w2 = params[2];
    const Matrix& b2 = params[3];
    Matrix g1(kHidden, kIn);
    Matrix gb1(kHidden, 1);
    Matrix g2(1, kHidden);
    Matrix gb2(1, 1);
    double loss = 0.0;
    std::vector<double> h(kHidden);
    for (std::size_t i = 0; i < kSamples; ++i) {
      double out = b2(0, 0);
      for (std::size_t j = 0; j < kHidden; ++j) {
        double a = b1(j, 0);
        for (std::size_t k = 0; k < kIn; ++k) a += w1(j, k) * x_(i, k);
        h[j] = std::tanh(a);
        out += w2(0, j) * h[j];
      }
      const double err = out - y_(i, 0);
      loss += 0.5 * err * err;
      const double d = err / kSamples;
      gb2(0, 0) += d;
      for (std::size_t j = 0; j < kHidden; ++j) {
        g2(0, j) += d * h[j];
        const double dh = d * w2(0, j) * (1.0 - h[j] * h[j]);
        gb1(j, 0) += dh;
        for (std::size_t k = 0; k < kIn; ++k) g1(j, k) += dh * x_(i, k);
      }
    }
    grads.assign({g1, gb1, g2, gb2});
    return loss / kSamples;
  }

 private:
  Matrix x_;
  Matrix y_;
  Matrix w1_;
  Matrix w2_;
};

}  // namespace

TaskKind parse_task_kind(std::string_view name) {
  if (name == "quadratic") return TaskKind::Quadratic;
  if (name == "logreg") return TaskKind::LogisticRegression;
  if (name == "mlp") return TaskKind::TinyMLP;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

const char* to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::Quadratic:
      return "quadratic";
    case TaskKind::LogisticRegression:
      return "logreg";
    case TaskKind::TinyMLP:
      return "mlp";
  }
  return "unknown";
}

std::unique_ptr<ToyTask> make_task(TaskKind kind, std::uint64_t seed) {
  switch (kind) {
    case TaskKind::Quadratic:
      return std::make_unique<QuadraticTask>(seed);
    case TaskKind::LogisticRegression:
      return std::make_unique<LogisticTask>(seed);
    case TaskKind::TinyMLP:
      return std::make_unique<MlpTask>(seed);
  }
  throw std::invalid_argument("unknown task kind");
}

TrainResult train(const ToyTask& task, const ShampooConfig& cfg, std::size_t steps) {
  ShampooOptimizer opt(task.shapes(), cfg);
  TrainResult result;
  result.params = task.initial_params();
  std::vector<Matrix> grads;
  for (std::size_t t = 0; t < steps; ++t) {
    const double loss = task.loss_and_grad(result.params, grads);
    if (!std::isfinite(loss)) throw NumericalError("loss is not finite at step " + std::to_string(t));
    double gsq = 0.0;
    for (const Matrix& g : grads) gsq += frobenius_norm(g) * frobenius_norm(g);
    const StepStats stats = opt.step(result.params, grads);
    result.records.push_back({t, loss, std::sqrt(gsq), stats.update_norm, stats.refreshed});
  }
  result.final_loss = task.loss(result.params);
  if (!std::isfinite(result.final_loss)) throw NumericalError("loss is not finite after step " + std::to_string(steps));
  return result;
}

std::vector<double> default_lr_grid() { return {1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0}; }

LrSweepResult sweep_learning_rate(const ToyTask& task, const ShampooConfig& cfg, std::size_t steps,
                                  std::span<const double> candidates) {
  LrSweepResult out;
  out.best_final_loss = std::numeric_limits<double>::infinity();
  for (double lr : candidates) {
    ShampooConfig trial = cfg;
    trial.lr.base = lr;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    try {
      final_loss = train(task, trial, steps).final_loss;
    } catch (const NumericalError&) {
    }
    out.trials.emplace_back(lr, final_loss);
    if (std::isfinite(final_loss) && final_loss < out.best_final_loss) {
      out.best_final_loss = final_loss;
      out.best_lr = lr;
    }
  }
  if (!std::isfinite(out.best_final_loss)) throw NumericalError("learning-rate sweep: every candidate failed");
  return out;
}

}  // namespace blockshampoo
