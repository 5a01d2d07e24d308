#include <doctest.h>

#include <cmath>

#include "blockshampoo/errors.hpp"
#include "blockshampoo/toy_tasks.hpp"

using namespace blockshampoo;

namespace {

// Central differences over every parameter entry.
double max_gradient_mismatch(const ToyTask& task, std::vector<Matrix> params) {
  std::vector<Matrix> grads;
  task.loss_and_grad(params, grads);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t l = 0; l < params.size(); ++l) {
    for (std::size_t i = 0; i < params[l].size(); ++i) {
      double& v = params[l].data()[i];
      const double saved = v;
      v = saved + h;
      const double up = task.loss(params);
      v = saved - h;
      const double down = task.loss(params);
      v = saved;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - grads[l].data()[i]) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

std::vector<Matrix> perturbed(const ToyTask& task, std::uint64_t seed) {
  std::vector<Matrix> params = task.initial_params();
  std::uint64_t state = seed;
  for (Matrix& m : params)
    for (double& v : m.data()) {
      state = state * 6364136223846793005ULL + 1442695040888963407ULL;
      v += 0.3 * (static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5);
    }
  return params;
}

}  // namespace

TEST_CASE("toy task gradients match central differences") {
  for (TaskKind kind : {TaskKind::Quadratic, TaskKind::LogisticRegression, TaskKind::TinyMLP}) {
    CAPTURE(to_string(kind));
    const auto task = make_task(kind, 7);
    CHECK(max_gradient_mismatch(*task, perturbed(*task, 3)) < 1e-6);
  }
}

TEST_CASE("toy task shapes agree with parameters and gradients") {
  for (TaskKind kind : {TaskKind::Quadratic, TaskKind::LogisticRegression, TaskKind::TinyMLP}) {
    const auto task = make_task(kind, 1);
    const auto shapes = task->shapes();
    const auto params = task->initial_params();
    std::vector<Matrix> grads;
    task->loss_and_grad(params, grads);
    REQUIRE(shapes.size() == params.size());
    REQUIRE(grads.size() == params.size());
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      CHECK(params[l].rows() == shapes[l].rows);
      CHECK(params[l].cols() == shapes[l].cols);
      CHECK(grads[l].rows() == shapes[l].rows);
      CHECK(grads[l].cols() == shapes[l].cols);
      if (shapes[l].vector_layer) CHECK(shapes[l].cols == 1);
    }
  }
}

TEST_CASE("toy tasks are deterministic in the seed") {
  const auto a = make_task(TaskKind::TinyMLP, 11);
  const auto b = make_task(TaskKind::TinyMLP, 11);
  const auto c = make_task(TaskKind::TinyMLP, 12);
  CHECK(a->loss(a->initial_params()) == b->loss(b->initial_params()));
  CHECK(a->loss(a->initial_params()) != c->loss(c->initial_params()));
}

TEST_CASE("task names round trip") {
  for (TaskKind kind : {TaskKind::Quadratic, TaskKind::LogisticRegression, TaskKind::TinyMLP})
    CHECK(parse_task_kind(to_string(kind)) == kind);
  CHECK_THROWS_AS(parse_task_kind("resnet"), std::invalid_argument);
}

TEST_CASE("training descends on every toy task") {
  ShampooConfig cfg;
  cfg.block_size = 32;
  cfg.lr.base = 0.03;
  for (TaskKind kind : {TaskKind::Quadratic, TaskKind::LogisticRegression, TaskKind::TinyMLP}) {
    CAPTURE(to_string(kind));
    const auto task = make_task(kind, 0);
    const TrainResult r = train(*task, cfg, 40);
    REQUIRE(r.records.size() == 40);
    CHECK(r.final_loss < 0.5 * r.records.front().loss);
    for (std::size_t t = 0; t < r.records.size(); ++t) {
      CHECK(r.records[t].step == t);
      CHECK(r.records[t].refreshed);  // update_freq 1
    }
  }
}

TEST_CASE("zero training steps leave the initial loss") {
  const auto task = make_task(TaskKind::Quadratic, 0);
  const TrainResult r = train(*task, ShampooConfig{}, 0);
  CHECK(r.records.empty());
  CHECK(r.final_loss == task->loss(task->initial_params()));
}

TEST_CASE("refresh flags follow the update frequency") {
  ShampooConfig cfg;
  cfg.update_freq = 4;
  cfg.lr.base = 0.01;
  const auto task = make_task(TaskKind::LogisticRegression, 0);
  const TrainResult r = train(*task, cfg, 10);
  for (const auto& rec : r.records) CHECK(rec.refreshed == (rec.step % 4 == 0));
}

TEST_CASE("a runaway learning rate is reported as a numerical error") {
  ShampooConfig cfg;
  cfg.lr.base = 1e200;
  cfg.block_size = 32;
  const auto task = make_task(TaskKind::Quadratic, 0);
  CHECK_THROWS_AS(train(*task, cfg, 20), NumericalError);
}

TEST_CASE("learning-rate sweep keeps the best candidate") {
  ShampooConfig cfg;
  cfg.block_size = 32;
  const auto task = make_task(TaskKind::Quadratic, 0);
  const std::vector<double> grid{1e-3, 3e-2, 1e200};
  const LrSweepResult r = sweep_learning_rate(*task, cfg, 30, grid);
  REQUIRE(r.trials.size() == 3);
  CHECK(r.best_lr == 3e-2);
  CHECK(std::isnan(r.trials[2].second));
  CHECK(r.best_final_loss < r.trials[0].second);
}
