#include "ticket/optim.hpp"

#include <cmath>

namespace ticket {

Schedule Schedule::constant(double lr, int total_epochs) {
  return Schedule{ScheduleKind::Constant, lr, lr, 0, total_epochs};
}

Schedule Schedule::step(double base_lr, int total_epochs) {
  return Schedule{ScheduleKind::Step, base_lr, base_lr, 0, total_epochs};
}

Schedule Schedule::warmup_step(double start_lr, double base_lr, int warmup_epochs,
                               int total_epochs) {
  return Schedule{ScheduleKind::WarmupStep, base_lr, start_lr, warmup_epochs, total_epochs};
}

Schedule Schedule::warmup_constant(double start_lr, double base_lr, int warmup_epochs,
                                   int total_epochs) {
  return Schedule{ScheduleKind::WarmupConstant, base_lr, start_lr, warmup_epochs, total_epochs};
}

double lr_at(const Schedule& sched, int epoch) {
  check(epoch >= 0 && epoch < sched.total_epochs,
        "lr_at: epoch " + std::to_string(epoch) + " outside [0," +
            std::to_string(sched.total_epochs) + ")");
  check(sched.base_lr > 0.0, "lr_at: base_lr must be positive");

  if (sched.kind == ScheduleKind::Constant) return sched.base_lr;

  const bool has_warmup =
      sched.kind == ScheduleKind::WarmupStep || sched.kind == ScheduleKind::WarmupConstant;
  if (has_warmup && epoch < sched.warmup_epochs) {
    const double t = static_cast<double>(epoch) / sched.warmup_epochs;
    return sched.warmup_start_lr + t * (sched.base_lr - sched.warmup_start_lr);
  }
  if (sched.kind == ScheduleKind::WarmupConstant) return sched.base_lr;

  double lr = sched.base_lr;
  const int half = sched.total_epochs / 2;
  const int three_quarters = (3 * sched.total_epochs) / 4;
  if (epoch >= half) lr *= 0.1;
  if (epoch >= three_quarters) lr *= 0.1;
  return lr;
}

SgdState make_sgd_state(const ParamSet& params) {
  SgdState state;
  state.velocity.reserve(params.entries.size());
  for (const auto& e : params.entries) state.velocity.emplace_back(e.value.shape);
  return state;
}

void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, double lr, double momentum,
              double weight_decay, SgdState& state) {
  check(grads.size() == params.entries.size(), "sgd_step: gradient count mismatch");
  check(state.velocity.size() == params.entries.size(), "sgd_step: state mismatch");
  for (std::size_t p = 0; p < params.entries.size(); ++p) {
    auto& entry = params.entries[p];
    const Tensor& g = grads[p];
    check_same_shape(entry.value, g, "sgd_step gradient for " + entry.name);
    if (!all_finite(g)) {
      throw NumericError("non-finite gradient for parameter " + entry.name);
    }
    Tensor& v = state.velocity[p];
    const float wd = entry.prunable ? static_cast<float>(weight_decay) : 0.0f;
    const float mom = static_cast<float>(momentum);
    const float flr = static_cast<float>(lr);
    for (std::int64_t i = 0; i < entry.value.size(); ++i) {
      v.data[i] = mom * v.data[i] + g.data[i] + wd * entry.value.data[i];
      entry.value.data[i] -= flr * v.data[i];
    }
  }
}

bool early_stop_update(EarlyStop& es, int epoch, double metric) {
  check(std::isfinite(metric), "early_stop_update: metric must be finite");
  check(es.min_delta >= 0.0, "early_stop_update: min_delta must be non-negative");
  if (!es.seen_any || metric > es.best_metric + es.min_delta) {
    es.best_metric = metric;
    es.best_epoch = epoch;
    es.seen_any = true;
    return false;
  }
  return epoch - es.best_epoch >= es.patience;
}

}  // namespace ticket
