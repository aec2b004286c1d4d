#include "safn/optim.hpp"

#include "safn/common.hpp"

#include <algorithm>
#include <cmath>

namespace safn {

void OptimConfig::validate() const {
  if (lr <= 0.0 || weight_decay < 0.0) throw DataError("OptimConfig: bad lr/weight_decay");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw DataError("OptimConfig: Adam betas outside (0,1)");
  }
  if (adam_eps <= 0.0 || clip_norm <= 0.0) throw DataError("OptimConfig: bad eps/clip_norm");
  if (!(ema_decay > 0.0 && ema_decay <= 1.0)) throw DataError("OptimConfig: bad ema_decay");
  if (epochs <= 0 || batch_size <= 0) throw DataError("OptimConfig: bad epochs/batch_size");
  if (patience < 1 || patience > epochs) throw DataError("OptimConfig: patience outside [1, epochs]");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw DataError("OptimConfig: warmup_fraction outside (0,1)");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw DataError("OptimConfig: bad threshold");
}

OptimState OptimState::init(const std::vector<double>& params) {
  OptimState state;
  state.m.assign(params.size(), 0.0);
  state.v.assign(params.size(), 0.0);
  state.ema = params;
  state.step = 0;
  return state;
}

void adamw_step(std::vector<double>& params, const std::vector<double>& grads, OptimState& state,
                double lr_t, const OptimConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DataError("adamw_step: layout mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr_t * config.weight_decay * params[i];
    params[i] -= lr_t * m_hat / (std::sqrt(v_hat) + config.adam_eps);
  }
}

double clip_gradients(std::vector<double>& grads, double clip_norm) {
  double sq = 0.0;
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("clip_gradients: non-finite gradient");
    sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > clip_norm && norm > 0.0) {
    const double scale = clip_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

double lr_at(long step, long total_steps, const OptimConfig& config) {
  if (step < 0 || step >= total_steps) throw DataError("lr_at: step out of range");
  const long warmup_steps =
      std::max<long>(1, std::lround(config.warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup_steps) {
    return config.lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const long decay_span = total_steps - 1 - warmup_steps;
  if (decay_span <= 0) return 0.0;
  const double progress = static_cast<double>(step - warmup_steps) / decay_span;
  return config.lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void ema_update(std::vector<double>& shadow, const std::vector<double>& params, double decay) {
  if (shadow.size() != params.size()) throw DataError("ema_update: layout mismatch");
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    shadow[i] = decay * shadow[i] + (1.0 - decay) * params[i];
  }
}

}  // namespace safn
