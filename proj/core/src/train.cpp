#include "ticket/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ticket/rng.hpp"

namespace ticket {

using nlohmann::json;

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Natural: return "natural";
    case TrainMode::FgsmAT: return "fgsm_at";
    case TrainMode::PgdAT: return "pgd_at";
  }
  return "natural";
}

TrainMode train_mode_from(const std::string& name) {
  if (name == "natural") return TrainMode::Natural;
  if (name == "fgsm_at") return TrainMode::FgsmAT;
  if (name == "pgd_at") return TrainMode::PgdAT;
  throw ContractViolation("unknown train mode: " + name);
}

TrainModeCfg TrainModeCfg::natural() { return TrainModeCfg{TrainMode::Natural, {}}; }

TrainModeCfg TrainModeCfg::fgsm_at() {
  return TrainModeCfg{TrainMode::FgsmAT, AttackConfig::fgsm_default()};
}

TrainModeCfg TrainModeCfg::pgd_at() {
  return TrainModeCfg{TrainMode::PgdAT, AttackConfig::pgd10_default()};
}

namespace {

void mask_grads(std::vector<Tensor>& grads, const ParamSet& params, const Mask& mask) {
  std::size_t mi = 0;
  for (std::size_t p = 0; p < params.entries.size(); ++p) {
    if (!params.entries[p].prunable) continue;
    const Tensor& bits = mask.entries[mi++].bits;
    for (std::int64_t i = 0; i < grads[p].size(); ++i) grads[p].data[i] *= bits.data[i];
  }
}

void mask_params_inplace(ParamSet& params, const Mask& mask) {
  std::size_t mi = 0;
  for (auto& e : params.entries) {
    if (!e.prunable) continue;
    const Tensor& bits = mask.entries[mi++].bits;
    for (std::int64_t i = 0; i < e.value.size(); ++i) e.value.data[i] *= bits.data[i];
  }
}

Dataset head_of(const Dataset& d, int max_examples) {
  if (max_examples <= 0 || max_examples >= d.size()) return d;
  return d.take(0, max_examples, d.split);
}

}  // namespace

TrainResult train(const ParamSet& initial, const ModelSpec& spec, const TrainModeCfg& mode,
                  const TrainOptions& opts, const Dataset& train_data, const Dataset& val_data,
                  const Mask* mask) {
  check(train_data.size() > 0, "train: empty training data");
  check(val_data.size() > 0, "train: empty validation data");
  if (mask) check(mask->aligned_with(initial), "train: mask does not align with parameters");

  ParamSet params = initial;
  if (mask) mask_params_inplace(params, *mask);

  SgdState sgd = make_sgd_state(params);
  EarlyStop es;
  es.patience = opts.patience;
  es.min_delta = opts.min_delta;

  const Dataset val = head_of(val_data, opts.max_val_examples);
  AttackConfig val_attack;
  const bool eval_robust = mode.adversarial() || opts.val_attack.has_value();
  if (eval_robust) val_attack = opts.val_attack.value_or(mode.attack);

  TrainResult result;
  result.best_params = params;
  double best_metric = -1.0;

  for (int epoch = 0; epoch < opts.schedule.total_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(opts.schedule, epoch);
    AttackConfig train_attack = mode.attack;
    if (mode.adversarial() && opts.attack_ramp_epochs > 0 && epoch < opts.attack_ramp_epochs) {
      const float scale = static_cast<float>(epoch + 1) / static_cast<float>(opts.attack_ramp_epochs);
      train_attack.epsilon *= scale;
      train_attack.step_size *= scale;
    }
    double loss_sum = 0.0;
    std::int64_t seen = 0;

    for (const auto& batch_idx : batches(train_data, opts.batch_size, opts.data_seed, epoch)) {
      Tensor x = gather_images(train_data, batch_idx);
      const std::vector<int> y = gather_labels(train_data, batch_idx);
      if (opts.augment.enabled()) {
        x = augment_batch(x, opts.augment,
                          derive_seed(opts.data_seed, "augment", static_cast<std::uint64_t>(epoch),
                                      static_cast<std::uint64_t>(seen)));
      }
      if (mode.mode == TrainMode::FgsmAT) {
        x = fgsm(params, spec, x, y, train_attack);
      } else if (mode.mode == TrainMode::PgdAT) {
        x = pgd(params, spec, x, y, train_attack,
                derive_seed(opts.attack_seed, "train-attack", static_cast<std::uint64_t>(epoch),
                            static_cast<std::uint64_t>(seen)));
      }

      Tape tape;
      ForwardGraph g = predict_graph(tape, spec, params, x);
      Tape::Var loss = tape.softmax_cross_entropy(g.logits, y);
      const double batch_loss = tape.value(loss).data[0];
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);

      std::vector<Tensor> grads;
      grads.reserve(g.param_vars.size());
      for (auto v : g.param_vars) grads.push_back(tape.grad(v));
      if (mask) mask_grads(grads, params, *mask);
      sgd_step(params, grads, lr, opts.momentum, opts.weight_decay, sgd);
      if (mask) mask_params_inplace(params, *mask);

      loss_sum += batch_loss * static_cast<double>(batch_idx.size());
      seen += static_cast<std::int64_t>(batch_idx.size());
    }

    const EvalResult val_res =
        evaluate(params, spec, val, eval_robust ? &val_attack : nullptr,
                 derive_seed(opts.attack_seed, "val-attack", static_cast<std::uint64_t>(epoch)));

    EpochStat stat;
    stat.epoch = epoch;
    stat.lr = lr;
    stat.train_loss = loss_sum / static_cast<double>(seen);
    stat.val_clean = val_res.clean;
    stat.val_robust = val_res.robust;
    if (opts.stop_on_loss) stat.val_loss = mean_loss(params, spec, val, opts.batch_size);
    stat.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.record.epochs.push_back(stat);
    result.record.total_wall_seconds += stat.wall_seconds;

    if (opts.epoch_checkpoint_dir) {
      std::filesystem::create_directories(*opts.epoch_checkpoint_dir);
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch);
      save_checkpoint(*opts.epoch_checkpoint_dir / name, spec, 0, params);
    }

    const double metric = mode.adversarial() ? val_res.robust : val_res.clean;
    if (metric > best_metric) {
      best_metric = metric;
      result.best_params = params;
      result.record.best_epoch = epoch;
    }
    const double stop_metric = opts.stop_on_loss ? -stat.val_loss : metric;
    if (opts.early_stopping && early_stop_update(es, epoch, stop_metric)) {
      result.record.early_stop_epoch = epoch;
      break;
    }
  }

  result.final_params = std::move(params);
  return result;
}

EvalResult evaluate(const ParamSet& params, const ModelSpec& spec, const Dataset& data,
                    const AttackConfig* attack, std::uint64_t seed, int batch_size) {
  check(data.size() > 0, "evaluate: empty dataset");
  std::int64_t clean_correct = 0;
  std::int64_t robust_correct = 0;
  const int n = data.size();
  for (int start = 0; start < n; start += batch_size) {
    const int count = std::min(batch_size, n - start);
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = start + i;
    const Tensor x = gather_images(data, idx);
    const std::vector<int> y = gather_labels(data, idx);
    const std::vector<int> pred = argmax_rows(predict(params, spec, x));
    for (int i = 0; i < count; ++i) {
      clean_correct += pred[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(i)];
    }
    if (attack) {
      const Tensor adv = pgd(params, spec, x, y, *attack,
                             derive_seed(seed, "eval-attack", static_cast<std::uint64_t>(start)));
      const std::vector<int> rpred = argmax_rows(predict(params, spec, adv));
      for (int i = 0; i < count; ++i) {
        robust_correct += rpred[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(i)];
      }
    }
  }
  EvalResult res;
  res.clean = static_cast<double>(clean_correct) / n;
  res.robust = attack ? static_cast<double>(robust_correct) / n : -1.0;
  return res;
}

double mean_loss(const ParamSet& params, const ModelSpec& spec, const Dataset& data,
                 int batch_size) {
  check(data.size() > 0, "mean_loss: empty dataset");
  double loss_sum = 0.0;
  const int n = data.size();
  for (int start = 0; start < n; start += batch_size) {
    const int count = std::min(batch_size, n - start);
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = start + i;
    Tape tape;
    ForwardGraph g = predict_graph(tape, spec, params, gather_images(data, idx));
    loss_sum += tape.value(tape.softmax_cross_entropy(g.logits, gather_labels(data, idx))).data[0] *
                count;
  }
  return loss_sum / n;
}

BoostPipelineResult boost_pipeline(const ModelSpec& spec, std::uint64_t init_seed,
                                   const TrainModeCfg& prune_mode,
                                   const TrainModeCfg& retrain_mode, double ratio,
                                   PruneScope scope, const TrainOptions& prune_opts,
                                   const TrainOptions& retrain_opts, const Dataset& train_data,
                                   const Dataset& val_data) {
  BoostPipelineResult out;
  const ParamSet init = init_params(spec, init_seed);

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult prune_phase = train(init, spec, prune_mode, prune_opts, train_data, val_data);
  out.prune_wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.prune_record = prune_phase.record;
  out.pruned_model = prune_phase.best_params;

  Ticket::Provenance prov;
  prov.source_mode = train_mode_name(prune_mode.mode);
  prov.source_lr = prune_opts.schedule.base_lr;
  prov.init_seed = init_seed;
  prov.data_seed = prune_opts.data_seed;
  prov.spec_id = spec.id;
  out.ticket = make_ticket(init, out.pruned_model, ratio, scope, prov);

  const auto t1 = std::chrono::steady_clock::now();
  TrainResult retrain = train(out.ticket.init, spec, retrain_mode, retrain_opts, train_data,
                              val_data, &out.ticket.mask);
  out.retrain_wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  out.retrain_record = retrain.record;
  out.retrained_model = std::move(retrain.best_params);
  return out;
}

std::string run_record_jsonl(const RunRecord& rec) {
  std::ostringstream os;
  for (const auto& e : rec.epochs) {
    json row{{"epoch", e.epoch},
             {"lr", e.lr},
             {"train_loss", e.train_loss},
             {"val_clean", e.val_clean}};
    if (e.val_robust >= 0.0) row["val_robust"] = e.val_robust;
    if (e.val_loss >= 0.0) row["val_loss"] = e.val_loss;
    os << row.dump() << '\n';
  }
  json summary{{"best_epoch", rec.best_epoch}, {"early_stop_epoch", rec.early_stop_epoch}};
  if (rec.test_clean >= 0.0) summary["test_clean"] = rec.test_clean;
  if (rec.test_robust >= 0.0) summary["test_robust"] = rec.test_robust;
  os << json{{"summary", summary}}.dump() << '\n';
  return os.str();
}

std::string run_record_csv(const RunRecord& rec) {
  std::ostringstream os;
  os << "epoch,lr,train_loss,val_clean,val_robust,val_loss,wall_seconds\n";
  for (const auto& e : rec.epochs) {
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_clean << ','
       << e.val_robust << ',' << e.val_loss << ',' << e.wall_seconds << '\n';
  }
  return os.str();
}

}  // namespace ticket
