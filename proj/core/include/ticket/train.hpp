#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ticket/attack.hpp"
#include "ticket/data.hpp"
#include "ticket/nn.hpp"
#include "ticket/optim.hpp"
#include "ticket/prune.hpp"

namespace ticket {

enum class TrainMode { Natural, FgsmAT, PgdAT };

std::string train_mode_name(TrainMode mode);
TrainMode train_mode_from(const std::string& name);

/// Training mode plus its attack. Adversarial batches replace clean batches
/// (pure inner-maximization training).
struct TrainModeCfg {
  TrainMode mode = TrainMode::Natural;
  AttackConfig attack;  // ignored for Natural

  static TrainModeCfg natural();
  static TrainModeCfg fgsm_at();  // eps 8/255 single-step defaults
  static TrainModeCfg pgd_at();   // PGD-10, alpha 2/255, eps 8/255 defaults

  bool adversarial() const { return mode != TrainMode::Natural; }
};

struct EpochStat {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_clean = 0.0;
  double val_robust = -1.0;  // -1 when not evaluated
  double val_loss = -1.0;  // -1 when not evaluated (recorded with stop_on_loss)
  double wall_seconds = 0.0;
};

struct RunRecord {
  std::vector<EpochStat> epochs;
  int best_epoch = -1;
  int early_stop_epoch = -1;  // -1 when training ran to the last epoch
  double test_clean = -1.0;
  double test_robust = -1.0;
  double total_wall_seconds = 0.0;
};

/// Deterministic metric rows (one JSON object per epoch + summary line).
/// Wall-clock fields are intentionally excluded; they go to the timing file.
std::string run_record_jsonl(const RunRecord& rec);
std::string run_record_csv(const RunRecord& rec);

struct TrainOptions {
  Schedule schedule = Schedule::constant(0.1, 10);
  int batch_size = 128;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool early_stopping = true;
  int patience = 5;
  /// Minimum metric improvement that resets the patience window.
  double min_delta = 0.0;
  /// Early-stop on validation cross-entropy instead of validation accuracy
  /// (the checkpoint kept as best_params is still accuracy-selected).
  bool stop_on_loss = false;
  /// Adversarial-training warmup: for the first N epochs the training attack's
  /// epsilon and step size are scaled by (epoch+1)/N. Avoids the trivial-
  /// classifier trap when training against a strong attack from a cold start.
  /// Validation attacks are never scaled. 0 disables the ramp.
  int attack_ramp_epochs = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t attack_seed = 0;
  /// Validation-time robustness attack (PGD-10 during training by default;
  /// reported robustness uses PGD-20 separately).
  std::optional<AttackConfig> val_attack;
  Augment augment;
  /// When set, a checkpoint is written per epoch (for trajectory diagnostics).
  std::optional<std::filesystem::path> epoch_checkpoint_dir;
  std::string spec_id_for_checkpoints;
  int max_val_examples = 0;  // 0 = all
};

struct TrainResult {
  ParamSet best_params;   // best validation checkpoint
  ParamSet final_params;  // weights at the last executed epoch
  RunRecord record;
};

/// Runs the train loop: per batch craft adversarial examples per mode, take an
/// SGD step, re-apply the mask (gradients are masked too, so momentum cannot
/// leak into pruned coordinates). Early stops on validation clean accuracy
/// (natural) or validation robust accuracy (adversarial modes).
TrainResult train(const ParamSet& initial, const ModelSpec& spec, const TrainModeCfg& mode,
                  const TrainOptions& opts, const Dataset& train_data, const Dataset& val_data,
                  const Mask* mask = nullptr);

struct EvalResult {
  double clean = 0.0;
  double robust = -1.0;  // -1 when no attack given
};

EvalResult evaluate(const ParamSet& params, const ModelSpec& spec, const Dataset& data,
                    const AttackConfig* attack = nullptr, std::uint64_t seed = 0,
                    int batch_size = 256);

double mean_loss(const ParamSet& params, const ModelSpec& spec, const Dataset& data,
                 int batch_size = 256);

struct BoostPipelineResult {
  Ticket ticket;
  RunRecord prune_record;    // the train-and-prune phase
  RunRecord retrain_record;  // ticket retraining
  ParamSet pruned_model;     // trained full model used for the mask
  ParamSet retrained_model;  // best retrained checkpoint
  double prune_wall_seconds = 0.0;
  double retrain_wall_seconds = 0.0;
};

/// Full boosting-ticket pipeline: train the full model (prune phase), extract
/// the ticket from the trained magnitudes, reset to the saved initialization,
/// retrain the masked model.
BoostPipelineResult boost_pipeline(const ModelSpec& spec, std::uint64_t init_seed,
                                   const TrainModeCfg& prune_mode,
                                   const TrainModeCfg& retrain_mode, double ratio,
                                   PruneScope scope, const TrainOptions& prune_opts,
                                   const TrainOptions& retrain_opts, const Dataset& train_data,
                                   const Dataset& val_data);

}  // namespace ticket
