#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ticket/data.hpp"
#include "ticket/prune.hpp"
#include "ticket/train.hpp"

namespace ticket {

/// Invalid or unparseable run configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataCfg {
  std::string kind = "mnist";  // mnist | cifar10 | blobs
  std::filesystem::path dir;
  int train_limit = 0;  // 0 = all
  int test_limit = 0;
  double val_fraction = 0.1;
  // blobs parameters
  int blobs_k = 2, blobs_n_per_class = 256, blobs_dim = 16;
  double blobs_margin = 0.5;
};

struct PhaseCfg {
  TrainModeCfg mode = TrainModeCfg::natural();
  Schedule schedule = Schedule::constant(0.1, 20);
  int batch_size = 128;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool early_stopping = true;
  int patience = 5;
  double min_delta = 0.0;
  bool stop_on_loss = false;
  int attack_ramp_epochs = 0;
  bool save_epoch_checkpoints = false;
  int max_val_examples = 0;
};

struct Seeds {
  std::uint64_t init = 1, data = 1, attack = 1, reinit = 1001;
};

/// One fully-specified experiment. Deterministic replay: identical configs
/// hash identically and must reproduce identical metric files.
struct RunConfig {
  std::string experiment = "train";  // train | ticket_pipeline | lottery_baseline
  ModelSpec model;
  DataCfg data;
  PhaseCfg train_phase;                 // the (re)training phase
  std::optional<PhaseCfg> prune_phase;  // pipelines only
  double prune_ratio = 0.8;
  PruneScope prune_scope = PruneScope::Global;
  int prune_rounds = 1;
  AttackConfig eval_attack = AttackConfig::pgd20_default();
  bool eval_robust = false;  // report robust accuracy for natural runs too
  Seeds seeds;
  std::string output_dir;  // optional override

  nlohmann::json canonical;  // normalized document the hash covers
  std::string hash;          // hex digest of `canonical`

  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig from_file(const std::filesystem::path& path);
};

struct SweepSpec {
  std::string axis;  // learning_rate | pruning_ratio | capacity | epoch_budget
  std::vector<nlohmann::json> values;
  RunConfig base;

  static SweepSpec from_file(const std::filesystem::path& path);
};

struct LoadedData {
  Dataset train, val, test;
};

LoadedData load_data(const DataCfg& cfg, const Seeds& seeds);

struct RunOutcome {
  std::filesystem::path dir;
  nlohmann::json summary;
};

/// Executes one config end to end and persists the run ledger (config copy,
/// metrics.jsonl per phase, summary.json, timing.json, checkpoints, ticket,
/// manifest.json). Re-executing over an existing ledger verifies byte-identical
/// metrics and fails loudly on mismatch.
RunOutcome execute_run(const RunConfig& cfg, const std::filesystem::path& out_root,
                       bool dry_run = false);

/// Text of the derived schedule table (used by --dry-run).
std::string schedule_table(const Schedule& sched);

struct SweepOutcome {
  std::filesystem::path dir;
  std::string csv;  // one row per (axis value, epoch)
  int failures = 0;
};

SweepOutcome run_sweep(const SweepSpec& sweep, const std::filesystem::path& out_root);

/// Per-epoch relative l2 distance between two runs' checkpoint trajectories,
/// with both accuracy curves. Row count = common epoch count.
std::string distance_csv(const std::filesystem::path& run_full,
                         const std::filesystem::path& run_pruned);

/// Pairwise transfer-attack matrix over runs' best checkpoints. Entry (i,j) is
/// the accuracy of model j on adversarial examples crafted against model i;
/// the diagonal is white-box robust accuracy.
std::string transfer_matrix_csv(const std::vector<std::filesystem::path>& run_dirs,
                                const AttackConfig& cfg, int limit = 0);

std::string config_hash(const nlohmann::json& canonical);

/// Output root resolution: explicit flag, then TICKET_OUT_ROOT, then ./runs.
std::filesystem::path resolve_out_root(const std::string& flag_value);

}  // namespace ticket
