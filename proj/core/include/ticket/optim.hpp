#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ticket/nn.hpp"
#include "ticket/tensor.hpp"

namespace ticket {

enum class ScheduleKind { Constant, Step, WarmupStep, WarmupConstant };

/// Piecewise learning-rate schedule. Step drops multiply by 0.1 at
/// floor(0.5*T) and floor(0.75*T). Warmup is linear per-epoch from
/// warmup_start_lr to base_lr over warmup_epochs, then behaves like Step
/// (WarmupStep) or stays at base_lr (WarmupConstant).
struct Schedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double base_lr = 0.1;
  double warmup_start_lr = 0.01;
  int warmup_epochs = 0;
  int total_epochs = 1;

  static Schedule constant(double lr, int total_epochs);
  static Schedule step(double base_lr, int total_epochs);
  static Schedule warmup_step(double start_lr, double base_lr, int warmup_epochs,
                              int total_epochs);
  static Schedule warmup_constant(double start_lr, double base_lr, int warmup_epochs,
                                  int total_epochs);
};

double lr_at(const Schedule& sched, int epoch);

/// SGD with momentum; weight decay applies to weights only, never biases.
///   v <- momentum * v + g + weight_decay * w ;  w <- w - lr * v
struct SgdState {
  std::vector<Tensor> velocity;  // aligned with ParamSet entries
};

SgdState make_sgd_state(const ParamSet& params);

void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, double lr, double momentum,
              double weight_decay, SgdState& state);

/// Patience-based early stopping on a maximized metric. should_stop fires
/// after `patience` consecutive epochs without improvement; an improvement
/// must exceed the previous best by more than `min_delta` to count.
struct EarlyStop {
  int patience = 5;
  double min_delta = 0.0;
  double best_metric = -1.0;
  int best_epoch = -1;
  bool seen_any = false;
};

bool early_stop_update(EarlyStop& es, int epoch, double metric);

}  // namespace ticket
