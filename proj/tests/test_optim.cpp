#include <doctest.h>

#include "safn/common.hpp"
#include "safn/optim.hpp"

#include <cmath>
#include <random>

using namespace safn;

TEST_CASE("adamw: zero gradient applies only the decoupled decay") {
  OptimConfig cfg;
  std::vector<double> params = {1.0};
  OptimState state = OptimState::init(params);
  adamw_step(params, {0.0}, state, 2e-4, cfg);
  CHECK(params[0] == doctest::Approx(1.0 - 2e-8).epsilon(1e-12));
  CHECK(state.step == 1);
}

TEST_CASE("adamw: first step with a constant gradient moves by about lr*sign") {
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  for (double g : {0.5, -2.0, 13.0}) {
    std::vector<double> params = {0.0};
    OptimState state = OptimState::init(params);
    adamw_step(params, {g}, state, cfg.lr, cfg);
    // Bias correction makes m_hat = g and v_hat = g^2 on step one.
    const double expected = -cfg.lr * g / (std::fabs(g) + cfg.adam_eps);
    CHECK(params[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::fabs(params[0] + cfg.lr * (g > 0 ? 1.0 : -1.0)) < 1e-9);
  }
}

TEST_CASE("adamw: zero rate leaves parameters unchanged") {
  OptimConfig cfg;
  std::vector<double> params = {0.3, -0.7};
  OptimState state = OptimState::init(params);
  adamw_step(params, {1.0, -2.0}, state, 0.0, cfg);
  CHECK(params[0] == 0.3);
  CHECK(params[1] == -0.7);
}

TEST_CASE("gradient clipping") {
  std::vector<double> small = {0.3, 0.4};
  CHECK(clip_gradients(small, 1.0) == doctest::Approx(0.5));
  CHECK(small[0] == 0.3);

  std::vector<double> big = {3.0, 4.0};
  CHECK(clip_gradients(big, 1.0) == doctest::Approx(5.0));
  CHECK(big[0] == doctest::Approx(0.6));
  CHECK(big[1] == doctest::Approx(0.8));

  std::vector<double> bad = {1.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(clip_gradients(bad, 1.0), NumericError);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> grads(17);
    for (auto& g : grads) g = gauss(rng);
    clip_gradients(grads, 1.0);
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    CHECK(std::sqrt(sq) <= 1.0 + 1e-12);
  }
}

TEST_CASE("warmup-cosine schedule boundary values") {
  OptimConfig cfg;
  cfg.lr = 2e-4;
  cfg.warmup_fraction = 0.10;
  const long total = 100;
  const long warmup = 10;

  CHECK(lr_at(0, total, cfg) == doctest::Approx(cfg.lr / warmup));
  CHECK(lr_at(warmup - 1, total, cfg) == doctest::Approx(cfg.lr));  // warmup apex
  CHECK(lr_at(warmup, total, cfg) == doctest::Approx(cfg.lr));      // cosine start
  CHECK(lr_at(total - 1, total, cfg) == doctest::Approx(0.0).epsilon(1e-12));
  // Cosine midpoint: progress 0.5 between warmup end and the final step.
  const long mid = warmup + (total - 1 - warmup) / 2;
  const double progress = static_cast<double>(mid - warmup) / (total - 1 - warmup);
  CHECK(lr_at(mid, total, cfg) ==
        doctest::Approx(cfg.lr * 0.5 * (1.0 + std::cos(M_PI * progress))));
  if ((total - 1 - warmup) % 2 == 0) {
    CHECK(lr_at(mid, total, cfg) == doctest::Approx(cfg.lr / 2.0));
  }

  CHECK_THROWS_AS(lr_at(-1, total, cfg), DataError);
  CHECK_THROWS_AS(lr_at(total, total, cfg), DataError);
}

TEST_CASE("ema update and geometric convergence") {
  std::vector<double> shadow = {0.0};
  ema_update(shadow, {1.0}, 1.0);
  CHECK(shadow[0] == 0.0);  // degenerate decay

  shadow = {0.0};
  ema_update(shadow, {1.0}, 0.999);
  CHECK(shadow[0] == doctest::Approx(0.001));

  // Constant parameters: shadow - param shrinks by decay each step.
  shadow = {0.0};
  const double decay = 0.9;
  for (int k = 1; k <= 20; ++k) {
    ema_update(shadow, {1.0}, decay);
    CHECK(1.0 - shadow[0] == doctest::Approx(std::pow(decay, k)).epsilon(1e-12));
  }
}

TEST_CASE("ema shadow lies on the segment between old shadow and parameters") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> shadow = {unif(rng)};
    std::vector<double> params = {unif(rng)};
    const double before = shadow[0];
    ema_update(shadow, params, 0.999);
    const double lo = std::min(before, params[0]);
    const double hi = std::max(before, params[0]);
    CHECK(shadow[0] >= lo - 1e-15);
    CHECK(shadow[0] <= hi + 1e-15);
  }
}

TEST_CASE("optim config validation") {
  OptimConfig cfg;
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = OptimConfig{};
  cfg.patience = cfg.epochs + 1;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = OptimConfig{};
  cfg.warmup_fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
}
