#pragma once

#include <cstdint>
#include <vector>

#include "ticket/data.hpp"
#include "ticket/nn.hpp"
#include "ticket/tensor.hpp"

namespace ticket {

enum class AttackLoss { CrossEntropy, CwMargin };

/// l-inf threat model in raw input units; MNIST defaults follow the common
/// 8/255 radius with 2/255 steps.
struct AttackConfig {
  float epsilon = 8.0f / 255.0f;
  float step_size = 2.0f / 255.0f;
  int steps = 10;
  bool random_start = true;
  AttackLoss loss = AttackLoss::CrossEntropy;
  float lo = 0.0f;
  float hi = 1.0f;

  static AttackConfig fgsm_default();    // eps 8/255, single step, alpha = eps
  static AttackConfig pgd10_default();   // training-time PGD
  static AttackConfig pgd20_default();   // reporting-time PGD

  void validate() const;
};

/// Clamp into the eps-ball around x_orig, then into [lo, hi].
Tensor project(const Tensor& x_candidate, const Tensor& x_orig, float epsilon, float lo,
               float hi);

/// k-step signed-gradient ascent with projection after every step, optionally
/// from a uniform random start in the ball. Parameter gradients computed along
/// the way are discarded. Deterministic given seed.
Tensor pgd(const ParamSet& params, const ModelSpec& spec, const Tensor& x,
           const std::vector<int>& y, const AttackConfig& cfg, std::uint64_t seed = 0);

/// Single signed-gradient step: exactly pgd with k=1, no random start, and
/// alpha = epsilon.
Tensor fgsm(const ParamSet& params, const ModelSpec& spec, const Tensor& x,
            const std::vector<int>& y, const AttackConfig& cfg);

/// Per-example margin z_y - max_{j != y} z_j. Negative iff misclassified.
std::vector<float> cw_margin_loss(const Tensor& logits, const std::vector<int>& y);

/// Crafts adversarial examples against `source` and measures accuracy of
/// `target` on them.
double transfer_eval(const ParamSet& source, const ParamSet& target, const ModelSpec& spec,
                     const Dataset& data, const AttackConfig& cfg, std::uint64_t seed = 0,
                     int batch_size = 256);

}  // namespace ticket
