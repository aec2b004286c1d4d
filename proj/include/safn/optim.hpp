#pragma once

#include <cstdint>
#include <vector>

namespace safn {

struct OptimConfig {
  double lr = 2e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  double ema_decay = 0.999;
  int epochs = 60;
  int patience = 12;
  int batch_size = 64;
  double warmup_fraction = 0.10;
  double threshold = 0.5;
  uint64_t seed = 42;

  void validate() const;
};

/// Adam moments plus the EMA shadow, congruent with the flat parameter
/// layout. The shadow starts at the initial parameters.
struct OptimState {
  std::vector<double> m;
  std::vector<double> v;
  std::vector<double> ema;
  long step = 0;

  static OptimState init(const std::vector<double>& params);
};

/// Decoupled weight decay plus bias-corrected Adam update.
void adamw_step(std::vector<double>& params, const std::vector<double>& grads, OptimState& state,
                double lr_t, const OptimConfig& config);

/// Scales gradients to the clip norm when the global l2 norm exceeds it.
/// Returns the pre-clip norm. Non-finite gradients raise NumericError.
double clip_gradients(std::vector<double>& grads, double clip_norm);

/// Linear warmup to lr over the first warmup_fraction of steps (rate
/// lr*(step+1)/warmup_steps), then cosine decay to zero at the last step.
double lr_at(long step, long total_steps, const OptimConfig& config);

/// shadow <- decay * shadow + (1 - decay) * params.
void ema_update(std::vector<double>& shadow, const std::vector<double>& params, double decay);

}  // namespace safn
