#include "ticket/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ticket/rng.hpp"

namespace ticket {

AttackConfig AttackConfig::fgsm_default() {
  AttackConfig cfg;
  cfg.step_size = cfg.epsilon;
  cfg.steps = 1;
  cfg.random_start = false;
  return cfg;
}

AttackConfig AttackConfig::pgd10_default() { return AttackConfig{}; }

AttackConfig AttackConfig::pgd20_default() {
  AttackConfig cfg;
  cfg.steps = 20;
  return cfg;
}

void AttackConfig::validate() const {
  check(epsilon >= 0.0f, "attack: epsilon must be >= 0");
  check(step_size > 0.0f, "attack: step size must be > 0");
  check(steps >= 1, "attack: steps must be >= 1");
  check(lo < hi, "attack: empty input domain");
}

Tensor project(const Tensor& x_candidate, const Tensor& x_orig, float epsilon, float lo,
               float hi) {
  check_same_shape(x_candidate, x_orig, "project");
  Tensor out = x_candidate;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const float o = x_orig.data[i];
    out.data[i] = std::clamp(std::clamp(out.data[i], o - epsilon, o + epsilon), lo, hi);
  }
  return out;
}

namespace {

// Gradient of the attack loss with respect to the input batch. Parameter
// gradients are computed on the tape but never read.
Tensor input_gradient(const ParamSet& params, const ModelSpec& spec, const Tensor& x,
                      const std::vector<int>& y, AttackLoss loss) {
  Tape tape;
  ForwardGraph g = predict_graph(tape, spec, params, x);
  Tape::Var l = loss == AttackLoss::CrossEntropy
                    ? tape.softmax_cross_entropy(g.logits, y)
                    : tape.cw_margin_mean(g.logits, y);
  tape.backward(l);
  Tensor grad = tape.grad(g.input);
  if (!all_finite(grad)) throw NumericError("non-finite input gradient during attack");
  return grad;
}

}  // namespace

Tensor pgd(const ParamSet& params, const ModelSpec& spec, const Tensor& x,
           const std::vector<int>& y, const AttackConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  check(static_cast<int>(y.size()) == x.dim(0), "pgd: label count does not match batch");

  Tensor adv = x;
  if (cfg.random_start) {
    Rng rng(derive_seed(seed, "pgd-random-start"));
    for (std::int64_t i = 0; i < adv.size(); ++i) {
      adv.data[i] += static_cast<float>(rng.uniform(-cfg.epsilon, cfg.epsilon));
    }
    adv = project(adv, x, cfg.epsilon, cfg.lo, cfg.hi);
  }

  // Cross-entropy is maximized, the margin is minimized.
  const float direction = cfg.loss == AttackLoss::CwMargin ? -1.0f : 1.0f;
  for (int step = 0; step < cfg.steps; ++step) {
    const Tensor grad = input_gradient(params, spec, adv, y, cfg.loss);
    for (std::int64_t i = 0; i < adv.size(); ++i) {
      const float gsign = grad.data[i] > 0.0f ? 1.0f : (grad.data[i] < 0.0f ? -1.0f : 0.0f);
      adv.data[i] += direction * cfg.step_size * gsign;
    }
    adv = project(adv, x, cfg.epsilon, cfg.lo, cfg.hi);
  }
  return adv;
}

Tensor fgsm(const ParamSet& params, const ModelSpec& spec, const Tensor& x,
            const std::vector<int>& y, const AttackConfig& cfg) {
  AttackConfig single = cfg;
  single.steps = 1;
  single.random_start = false;
  single.step_size = cfg.step_size > 0.0f ? cfg.step_size : cfg.epsilon;
  return pgd(params, spec, x, y, single, 0);
}

std::vector<float> cw_margin_loss(const Tensor& logits, const std::vector<int>& y) {
  check(logits.rank() == 2, "cw_margin_loss: logits must be 2-D");
  const int n = logits.dim(0), k = logits.dim(1);
  check(k >= 2, "cw_margin_loss: need at least 2 classes");
  check(static_cast<int>(y.size()) == n, "cw_margin_loss: label count mismatch");
  std::vector<float> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const float* z = logits.data.data() + static_cast<std::ptrdiff_t>(i) * k;
    const int label = y[static_cast<std::size_t>(i)];
    check(label >= 0 && label < k, "cw_margin_loss: label out of range");
    float rival = -std::numeric_limits<float>::infinity();
    for (int j = 0; j < k; ++j) {
      if (j != label) rival = std::max(rival, z[j]);
    }
    out[static_cast<std::size_t>(i)] = z[label] - rival;
  }
  return out;
}

double transfer_eval(const ParamSet& source, const ParamSet& target, const ModelSpec& spec,
                     const Dataset& data, const AttackConfig& cfg, std::uint64_t seed,
                     int batch_size) {
  check(data.size() > 0, "transfer_eval: empty dataset");
  std::int64_t correct = 0;
  const int n = data.size();
  for (int start = 0; start < n; start += batch_size) {
    const int count = std::min(batch_size, n - start);
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = start + i;
    const Tensor x = gather_images(data, idx);
    const std::vector<int> y = gather_labels(data, idx);
    const Tensor adv = pgd(source, spec, x, y, cfg,
                           derive_seed(seed, "transfer-batch", static_cast<std::uint64_t>(start)));
    const std::vector<int> pred = argmax_rows(predict(target, spec, adv));
    for (int i = 0; i < count; ++i) {
      correct += pred[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(i)];
    }
  }
  return static_cast<double>(correct) / n;
}

}  // namespace ticket
