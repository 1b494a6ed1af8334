#include "ticket/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ticket/rng.hpp"
#include "ticket/serialize.hpp"

namespace ticket {

using nlohmann::json;

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
  out << text;
}

/// Writes a replay-checked file: if it already exists the new content must be
/// byte-identical, otherwise the run aborts instead of silently overwriting.
void write_checked(const std::filesystem::path& p, const std::string& text) {
  if (std::filesystem::exists(p)) {
    if (read_text(p) != text) {
      throw std::runtime_error("replay mismatch: " + p.string() +
                               " differs from the recorded run (no silent overwrite)");
    }
    return;
  }
  write_text(p, text);
}

template <typename T>
T field(const json& doc, const std::string& path, const std::string& key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config field '" + path + "." + key + "': " + e.what());
  }
}

json subobject(const json& doc, const std::string& path, const std::string& key) {
  if (!doc.contains(key)) return json::object();
  if (!doc.at(key).is_object()) throw ConfigError("config field '" + path + "." + key + "' must be an object");
  return doc.at(key);
}

AttackConfig parse_attack(const json& doc, const std::string& path, AttackConfig base) {
  base.epsilon = static_cast<float>(field<double>(doc, path, "epsilon", base.epsilon));
  base.step_size = static_cast<float>(field<double>(doc, path, "step_size", base.step_size));
  base.steps = field<int>(doc, path, "steps", base.steps);
  base.random_start = field<bool>(doc, path, "random_start", base.random_start);
  const std::string loss = field<std::string>(
      doc, path, "loss", base.loss == AttackLoss::CwMargin ? "cw_margin" : "cross_entropy");
  if (loss == "cross_entropy") {
    base.loss = AttackLoss::CrossEntropy;
  } else if (loss == "cw_margin") {
    base.loss = AttackLoss::CwMargin;
  } else {
    throw ConfigError("config field '" + path + ".loss': unknown loss '" + loss + "'");
  }
  try {
    base.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError("config field '" + path + "': " + e.what());
  }
  return base;
}

json attack_json(const AttackConfig& a) {
  return json{{"epsilon", a.epsilon},
              {"step_size", a.step_size},
              {"steps", a.steps},
              {"random_start", a.random_start},
              {"loss", a.loss == AttackLoss::CwMargin ? "cw_margin" : "cross_entropy"}};
}

Schedule parse_schedule(const json& doc, const std::string& path) {
  Schedule s;
  const std::string kind = field<std::string>(doc, path, "kind", "constant");
  if (kind == "constant") {
    s.kind = ScheduleKind::Constant;
  } else if (kind == "step") {
    s.kind = ScheduleKind::Step;
  } else if (kind == "warmup_step") {
    s.kind = ScheduleKind::WarmupStep;
  } else if (kind == "warmup_constant") {
    s.kind = ScheduleKind::WarmupConstant;
  } else {
    throw ConfigError("config field '" + path + ".kind': unknown schedule '" + kind + "'");
  }
  s.base_lr = field<double>(doc, path, "base_lr", 0.1);
  s.warmup_start_lr = field<double>(doc, path, "warmup_start_lr", 0.01);
  s.total_epochs = field<int>(doc, path, "total_epochs", 20);
  // Default warmup span: 10% of the budget.
  const bool has_warmup =
      s.kind == ScheduleKind::WarmupStep || s.kind == ScheduleKind::WarmupConstant;
  s.warmup_epochs = field<int>(doc, path, "warmup_epochs",
                               has_warmup ? std::max(1, s.total_epochs / 10) : 0);
  if (s.base_lr <= 0.0) throw ConfigError("config field '" + path + ".base_lr' must be > 0");
  if (s.total_epochs < 1) throw ConfigError("config field '" + path + ".total_epochs' must be >= 1");
  return s;
}

json schedule_json(const Schedule& s) {
  const char* kind = s.kind == ScheduleKind::Constant       ? "constant"
                     : s.kind == ScheduleKind::Step         ? "step"
                     : s.kind == ScheduleKind::WarmupStep   ? "warmup_step"
                                                            : "warmup_constant";
  return json{{"kind", kind},
              {"base_lr", s.base_lr},
              {"warmup_start_lr", s.warmup_start_lr},
              {"warmup_epochs", s.warmup_epochs},
              {"total_epochs", s.total_epochs}};
}

PhaseCfg parse_phase(const json& doc, const std::string& path) {
  PhaseCfg p;
  const std::string mode = field<std::string>(doc, path, "mode", "natural");
  try {
    p.mode.mode = train_mode_from(mode);
  } catch (const ContractViolation& e) {
    throw ConfigError("config field '" + path + ".mode': " + std::string(e.what()));
  }
  AttackConfig base = p.mode.mode == TrainMode::FgsmAT ? AttackConfig::fgsm_default()
                                                       : AttackConfig::pgd10_default();
  p.mode.attack = parse_attack(subobject(doc, path, "attack"), path + ".attack", base);
  p.schedule = parse_schedule(subobject(doc, path, "schedule"), path + ".schedule");
  p.batch_size = field<int>(doc, path, "batch_size", 128);
  p.momentum = field<double>(doc, path, "momentum", 0.9);
  p.weight_decay = field<double>(doc, path, "weight_decay", 5e-4);
  p.early_stopping = field<bool>(doc, path, "early_stopping", true);
  p.patience = field<int>(doc, path, "patience", 5);
  p.min_delta = field<double>(doc, path, "min_delta", 0.0);
  if (p.min_delta < 0.0) throw ConfigError("config field '" + path + ".min_delta' must be >= 0");
  p.stop_on_loss = field<bool>(doc, path, "stop_on_loss", false);
  p.attack_ramp_epochs = field<int>(doc, path, "attack_ramp_epochs", 0);
  if (p.attack_ramp_epochs < 0) {
    throw ConfigError("config field '" + path + ".attack_ramp_epochs' must be >= 0");
  }
  p.save_epoch_checkpoints = field<bool>(doc, path, "save_epoch_checkpoints", false);
  p.max_val_examples = field<int>(doc, path, "max_val_examples", 0);
  if (p.batch_size < 1) throw ConfigError("config field '" + path + ".batch_size' must be >= 1");
  return p;
}

json phase_json(const PhaseCfg& p) {
  return json{{"mode", train_mode_name(p.mode.mode)},
              {"attack", attack_json(p.mode.attack)},
              {"schedule", schedule_json(p.schedule)},
              {"batch_size", p.batch_size},
              {"momentum", p.momentum},
              {"weight_decay", p.weight_decay},
              {"early_stopping", p.early_stopping},
              {"patience", p.patience},
              {"min_delta", p.min_delta},
              {"stop_on_loss", p.stop_on_loss},
              {"attack_ramp_epochs", p.attack_ramp_epochs},
              {"save_epoch_checkpoints", p.save_epoch_checkpoints},
              {"max_val_examples", p.max_val_examples}};
}

TrainOptions phase_to_options(const PhaseCfg& p, const Seeds& seeds,
                              const std::filesystem::path& run_dir, const std::string& phase,
                              const std::string& spec_id) {
  TrainOptions o;
  o.schedule = p.schedule;
  o.batch_size = p.batch_size;
  o.momentum = p.momentum;
  o.weight_decay = p.weight_decay;
  o.early_stopping = p.early_stopping;
  o.patience = p.patience;
  o.min_delta = p.min_delta;
  o.stop_on_loss = p.stop_on_loss;
  o.attack_ramp_epochs = p.attack_ramp_epochs;
  o.data_seed = derive_seed(seeds.data, "phase-data", std::hash<std::string>{}(phase));
  o.attack_seed = derive_seed(seeds.attack, "phase-attack", std::hash<std::string>{}(phase));
  o.max_val_examples = p.max_val_examples;
  o.spec_id_for_checkpoints = spec_id;
  if (p.save_epoch_checkpoints) o.epoch_checkpoint_dir = run_dir / ("epochs_" + phase);
  return o;
}

json phase_summary(const RunRecord& rec) {
  json s{{"epochs_run", rec.epochs.size()},
         {"best_epoch", rec.best_epoch},
         {"early_stop_epoch", rec.early_stop_epoch}};
  if (!rec.epochs.empty()) {
    s["final_val_clean"] = rec.epochs.back().val_clean;
    if (rec.epochs.back().val_robust >= 0.0) s["final_val_robust"] = rec.epochs.back().val_robust;
    double best_clean = 0.0, best_robust = -1.0;
    for (const auto& e : rec.epochs) {
      best_clean = std::max(best_clean, e.val_clean);
      best_robust = std::max(best_robust, e.val_robust);
    }
    s["best_val_clean"] = best_clean;
    if (best_robust >= 0.0) s["best_val_robust"] = best_robust;
  }
  if (rec.test_clean >= 0.0) s["test_clean"] = rec.test_clean;
  if (rec.test_robust >= 0.0) s["test_robust"] = rec.test_robust;
  return s;
}

void persist_phase(const std::filesystem::path& dir, const std::string& phase,
                   const RunRecord& rec) {
  write_checked(dir / (phase + "_metrics.jsonl"), run_record_jsonl(rec));
  write_text(dir / (phase + "_metrics.csv"), run_record_csv(rec));
}

}  // namespace

std::string config_hash(const json& canonical) {
  const std::string dump = canonical.dump();  // nlohmann orders keys
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : dump) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig RunConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  const int version = field<int>(doc, "", "schema_version", 1);
  if (version != 1) throw ConfigError("config field 'schema_version': unsupported version");

  RunConfig cfg;
  cfg.experiment = field<std::string>(doc, "", "experiment", "train");
  if (cfg.experiment != "train" && cfg.experiment != "ticket_pipeline" &&
      cfg.experiment != "lottery_baseline") {
    throw ConfigError("config field 'experiment': unknown experiment '" + cfg.experiment + "'");
  }

  const json model = subobject(doc, "", "model");
  const std::string arch = field<std::string>(model, "model", "arch", "lenet");
  std::vector<int> input = field<std::vector<int>>(model, "model", "input", {1, 28, 28});
  const int classes = field<int>(model, "model", "classes", 10);
  try {
    cfg.model = ModelSpec::parse(arch, Shape(input.begin(), input.end()), classes);
  } catch (const ContractViolation& e) {
    throw ConfigError("config field 'model': " + std::string(e.what()));
  }

  const json data = subobject(doc, "", "data");
  cfg.data.kind = field<std::string>(data, "data", "kind", "mnist");
  if (cfg.data.kind != "mnist" && cfg.data.kind != "cifar10" && cfg.data.kind != "blobs") {
    throw ConfigError("config field 'data.kind': unknown kind '" + cfg.data.kind + "'");
  }
  cfg.data.dir = field<std::string>(data, "data", "dir", "");
  cfg.data.train_limit = field<int>(data, "data", "train_limit", 0);
  cfg.data.test_limit = field<int>(data, "data", "test_limit", 0);
  cfg.data.val_fraction = field<double>(data, "data", "val_fraction", 0.1);
  if (cfg.data.val_fraction <= 0.0 || cfg.data.val_fraction >= 1.0) {
    throw ConfigError("config field 'data.val_fraction' must be in (0,1)");
  }
  const json blobs = subobject(data, "data", "blobs");
  cfg.data.blobs_k = field<int>(blobs, "data.blobs", "k", 2);
  cfg.data.blobs_n_per_class = field<int>(blobs, "data.blobs", "n_per_class", 256);
  cfg.data.blobs_dim = field<int>(blobs, "data.blobs", "dim", 16);
  cfg.data.blobs_margin = field<double>(blobs, "data.blobs", "margin", 0.5);

  cfg.train_phase = parse_phase(subobject(doc, "", "train"), "train");

  if (doc.contains("prune")) {
    const json prune = subobject(doc, "", "prune");
    cfg.prune_ratio = field<double>(prune, "prune", "ratio", 0.8);
    if (cfg.prune_ratio < 0.0 || cfg.prune_ratio >= 1.0) {
      throw ConfigError("config field 'prune.ratio' must be in [0,1)");
    }
    const std::string scope = field<std::string>(prune, "prune", "scope", "global");
    if (scope == "global") {
      cfg.prune_scope = PruneScope::Global;
    } else if (scope == "layerwise") {
      cfg.prune_scope = PruneScope::Layerwise;
    } else {
      throw ConfigError("config field 'prune.scope': unknown scope '" + scope + "'");
    }
    cfg.prune_rounds = field<int>(prune, "prune", "rounds", 1);
    if (cfg.prune_rounds < 1) throw ConfigError("config field 'prune.rounds' must be >= 1");
    cfg.prune_phase = parse_phase(subobject(prune, "prune", "phase"), "prune.phase");
  }
  if (cfg.experiment != "train" && !cfg.prune_phase) {
    throw ConfigError("config field 'prune': required for experiment '" + cfg.experiment + "'");
  }

  cfg.eval_attack =
      parse_attack(subobject(doc, "", "eval_attack"), "eval_attack", AttackConfig::pgd20_default());
  cfg.eval_robust = field<bool>(doc, "", "eval_robust", false);

  const json seeds = subobject(doc, "", "seeds");
  cfg.seeds.init = field<std::uint64_t>(seeds, "seeds", "init", 1);
  cfg.seeds.data = field<std::uint64_t>(seeds, "seeds", "data", 1);
  cfg.seeds.attack = field<std::uint64_t>(seeds, "seeds", "attack", 1);
  cfg.seeds.reinit = field<std::uint64_t>(seeds, "seeds", "reinit", 1001);

  cfg.output_dir = field<std::string>(doc, "", "output_dir", "");

  // Canonical document: every default materialized, key order fixed by dump().
  json canonical{{"schema_version", 1},
                 {"experiment", cfg.experiment},
                 {"model", json{{"arch", cfg.model.id},
                                {"input", cfg.model.input_shape},
                                {"classes", cfg.model.classes}}},
                 {"data", json{{"kind", cfg.data.kind},
                               {"dir", cfg.data.dir.string()},
                               {"train_limit", cfg.data.train_limit},
                               {"test_limit", cfg.data.test_limit},
                               {"val_fraction", cfg.data.val_fraction},
                               {"blobs", json{{"k", cfg.data.blobs_k},
                                              {"n_per_class", cfg.data.blobs_n_per_class},
                                              {"dim", cfg.data.blobs_dim},
                                              {"margin", cfg.data.blobs_margin}}}}},
                 {"train", phase_json(cfg.train_phase)},
                 {"eval_attack", attack_json(cfg.eval_attack)},
                 {"eval_robust", cfg.eval_robust},
                 {"seeds", json{{"init", cfg.seeds.init},
                                {"data", cfg.seeds.data},
                                {"attack", cfg.seeds.attack},
                                {"reinit", cfg.seeds.reinit}}}};
  if (cfg.prune_phase) {
    canonical["prune"] =
        json{{"ratio", cfg.prune_ratio},
             {"scope", cfg.prune_scope == PruneScope::Global ? "global" : "layerwise"},
             {"rounds", cfg.prune_rounds},
             {"phase", phase_json(*cfg.prune_phase)}};
  }
  cfg.canonical = std::move(canonical);
  cfg.hash = config_hash(cfg.canonical);
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return from_json(doc);
}

SweepSpec SweepSpec::from_file(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  SweepSpec sweep;
  sweep.axis = field<std::string>(doc, "", "axis", "");
  if (sweep.axis != "learning_rate" && sweep.axis != "pruning_ratio" &&
      sweep.axis != "capacity" && sweep.axis != "epoch_budget") {
    throw ConfigError("config field 'axis': unknown sweep axis '" + sweep.axis + "'");
  }
  if (!doc.contains("values") || !doc.at("values").is_array() || doc.at("values").empty()) {
    throw ConfigError("config field 'values': non-empty array required");
  }
  for (const auto& v : doc.at("values")) sweep.values.push_back(v);
  if (!doc.contains("base")) throw ConfigError("config field 'base': RunConfig required");
  sweep.base = RunConfig::from_json(doc.at("base"));
  return sweep;
}

LoadedData load_data(const DataCfg& cfg, const Seeds& seeds) {
  LoadedData out;
  Dataset full_train, test;
  if (cfg.kind == "mnist") {
    if (cfg.dir.empty()) throw ConfigError("config field 'data.dir': required for mnist");
    full_train = load_idx(cfg.dir / "train-images-idx3-ubyte", cfg.dir / "train-labels-idx1-ubyte");
    test = load_idx(cfg.dir / "t10k-images-idx3-ubyte", cfg.dir / "t10k-labels-idx1-ubyte");
  } else if (cfg.kind == "cifar10") {
    if (cfg.dir.empty()) throw ConfigError("config field 'data.dir': required for cifar10");
    std::vector<std::filesystem::path> train_files;
    for (int i = 1; i <= 5; ++i) {
      train_files.push_back(cfg.dir / ("data_batch_" + std::to_string(i) + ".bin"));
    }
    full_train = load_cifar10(train_files);
    test = load_cifar10({cfg.dir / "test_batch.bin"});
  } else {
    // One pool, then a held-out test carve so both splits share the class means.
    const Dataset pool =
        synth_blobs(cfg.blobs_k, cfg.blobs_n_per_class + std::max(1, cfg.blobs_n_per_class / 4),
                    cfg.blobs_dim, cfg.blobs_margin, derive_seed(seeds.data, "blobs"));
    auto [pool_train, pool_test] =
        split_train_val(pool, 0.2, derive_seed(seeds.data, "blobs-test-split"));
    full_train = std::move(pool_train);
    test = std::move(pool_test);
  }
  if (cfg.train_limit > 0 && cfg.train_limit < full_train.size()) {
    full_train = full_train.take(0, cfg.train_limit, "train");
  }
  if (cfg.test_limit > 0 && cfg.test_limit < test.size()) {
    test = test.take(0, cfg.test_limit, "test");
  }
  auto [tr, val] = split_train_val(full_train, cfg.val_fraction, seeds.data);
  out.train = std::move(tr);
  out.val = std::move(val);
  out.test = std::move(test);
  out.test.split = "test";
  return out;
}

std::string schedule_table(const Schedule& sched) {
  std::ostringstream os;
  os << "epoch,lr\n";
  for (int e = 0; e < sched.total_epochs; ++e) os << e << ',' << lr_at(sched, e) << '\n';
  return os.str();
}

RunOutcome execute_run(const RunConfig& cfg, const std::filesystem::path& out_root,
                       bool dry_run) {
  RunOutcome outcome;
  outcome.dir = cfg.output_dir.empty()
                    ? out_root / (cfg.experiment + "_" + cfg.hash)
                    : std::filesystem::path(cfg.output_dir);

  json summary{{"config_hash", cfg.hash},
               {"experiment", cfg.experiment},
               {"model", cfg.model.id}};

  if (dry_run) {
    summary["dry_run"] = true;
    summary["schedule_table"] = schedule_table(cfg.train_phase.schedule);
    if (cfg.prune_phase) summary["prune_schedule_table"] = schedule_table(cfg.prune_phase->schedule);
    outcome.summary = std::move(summary);
    return outcome;
  }

  std::filesystem::create_directories(outcome.dir);
  write_checked(outcome.dir / "config.json", cfg.canonical.dump(2) + "\n");

  const LoadedData data = load_data(cfg.data, cfg.seeds);
  const bool robust_report = cfg.eval_robust || cfg.train_phase.mode.adversarial();

  std::vector<std::string> files{"config.json", "summary.json", "timing.json", "manifest.json"};
  double prune_seconds = 0.0, train_seconds = 0.0;

  auto finish_record = [&](RunRecord& rec, const ParamSet& best) {
    const EvalResult test_res =
        evaluate(best, cfg.model, data.test, robust_report ? &cfg.eval_attack : nullptr,
                 derive_seed(cfg.seeds.attack, "test-eval"));
    rec.test_clean = test_res.clean;
    rec.test_robust = test_res.robust;
  };

  if (cfg.experiment == "train") {
    const TrainOptions opts =
        phase_to_options(cfg.train_phase, cfg.seeds, outcome.dir, "train", cfg.model.id);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res = train(init_params(cfg.model, cfg.seeds.init), cfg.model,
                            cfg.train_phase.mode, opts, data.train, data.val);
    train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish_record(res.record, res.best_params);
    persist_phase(outcome.dir, "train", res.record);
    save_checkpoint(outcome.dir / "model.ckpt", cfg.model, cfg.seeds.init, res.best_params);
    summary["train"] = phase_summary(res.record);
    files.insert(files.end(), {"train_metrics.jsonl", "train_metrics.csv", "model.ckpt"});
  } else {
    const PhaseCfg& prune_cfg = *cfg.prune_phase;
    const ParamSet init = init_params(cfg.model, cfg.seeds.init);

    Ticket::Provenance prov;
    prov.source_mode = train_mode_name(prune_cfg.mode.mode);
    prov.source_lr = prune_cfg.schedule.base_lr;
    prov.init_seed = cfg.seeds.init;
    prov.data_seed = cfg.seeds.data;
    prov.spec_id = cfg.model.id;

    const TrainOptions prune_opts =
        phase_to_options(prune_cfg, cfg.seeds, outcome.dir, "prune", cfg.model.id);

    Ticket ticket;
    RunRecord prune_record;
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.prune_rounds == 1) {
      TrainResult prune_res =
          train(init, cfg.model, prune_cfg.mode, prune_opts, data.train, data.val);
      prune_record = prune_res.record;
      ticket = make_ticket(init, prune_res.best_params, cfg.prune_ratio, cfg.prune_scope, prov);
    } else {
      int round = 0;
      ticket = iterative_prune(
          init,
          [&](const ParamSet& start) {
            TrainOptions ropts = prune_opts;
            ropts.data_seed = derive_seed(prune_opts.data_seed, "round", static_cast<std::uint64_t>(round));
            ropts.epoch_checkpoint_dir.reset();
            ++round;
            TrainResult r = train(start, cfg.model, prune_cfg.mode, ropts, data.train, data.val);
            prune_record = r.record;
            return r.best_params;
          },
          cfg.prune_ratio, cfg.prune_rounds, cfg.prune_scope, prov);
    }
    prune_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    persist_phase(outcome.dir, "prune", prune_record);
    save_ticket(outcome.dir / "ticket.tkt", ticket);
    summary["prune"] = phase_summary(prune_record);
    summary["ticket_sparsity"] = ticket.mask.sparsity();
    files.insert(files.end(), {"prune_metrics.jsonl", "prune_metrics.csv", "ticket.tkt"});

    const TrainOptions retrain_opts =
        phase_to_options(cfg.train_phase, cfg.seeds, outcome.dir, "retrain", cfg.model.id);
    const auto t1 = std::chrono::steady_clock::now();
    TrainResult retrain = train(ticket.init, cfg.model, cfg.train_phase.mode, retrain_opts,
                                data.train, data.val, &ticket.mask);
    train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    finish_record(retrain.record, retrain.best_params);
    persist_phase(outcome.dir, "retrain", retrain.record);
    save_checkpoint(outcome.dir / "model.ckpt", cfg.model, cfg.seeds.init, retrain.best_params);
    summary["retrain"] = phase_summary(retrain.record);
    files.insert(files.end(), {"retrain_metrics.jsonl", "retrain_metrics.csv", "model.ckpt"});

    if (cfg.experiment == "lottery_baseline") {
      // Random-reinit control: same mask, fresh initialization.
      const ParamSet reinit = apply_mask(init_params(cfg.model, cfg.seeds.reinit), ticket.mask);
      TrainOptions reinit_opts =
          phase_to_options(cfg.train_phase, cfg.seeds, outcome.dir, "reinit", cfg.model.id);
      TrainResult control = train(reinit, cfg.model, cfg.train_phase.mode, reinit_opts,
                                  data.train, data.val, &ticket.mask);
      finish_record(control.record, control.best_params);
      persist_phase(outcome.dir, "reinit", control.record);
      summary["reinit"] = phase_summary(control.record);
      files.insert(files.end(), {"reinit_metrics.jsonl", "reinit_metrics.csv"});
    }
  }

  // Table-3 style decomposition: pruning time, training time, total.
  json timing{{"pruning_time_s", prune_seconds},
              {"training_time_s", train_seconds},
              {"total_time_s", prune_seconds + train_seconds}};
  write_text(outcome.dir / "timing.json", timing.dump(2) + "\n");
  write_checked(outcome.dir / "summary.json", summary.dump(2) + "\n");

  for (const auto& entry : std::filesystem::directory_iterator(outcome.dir)) {
    if (entry.is_directory()) {
      for (const auto& sub : std::filesystem::directory_iterator(entry.path())) {
        files.push_back(entry.path().filename().string() + "/" + sub.path().filename().string());
      }
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  json manifest{{"config_hash", cfg.hash}, {"files", files}};
  write_text(outcome.dir / "manifest.json", manifest.dump(2) + "\n");

  outcome.summary = std::move(summary);
  return outcome;
}

namespace {

json apply_axis(json base, const std::string& axis, const json& value) {
  if (axis == "learning_rate") {
    if (base.contains("prune")) {
      base["prune"]["phase"]["schedule"]["base_lr"] = value;
      if (base["train"]["schedule"]["kind"] == "warmup_step") {
        base["train"]["schedule"]["warmup_start_lr"] = value;
      }
    } else {
      base["train"]["schedule"]["base_lr"] = value;
    }
  } else if (axis == "pruning_ratio") {
    if (!base.contains("prune")) throw ConfigError("pruning_ratio sweep needs a prune block");
    base["prune"]["ratio"] = value;
  } else if (axis == "capacity") {
    base["model"]["arch"] = value;
  } else if (axis == "epoch_budget") {
    base["train"]["schedule"]["total_epochs"] = value;
  }
  return base;
}

std::string value_label(const json& v) {
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  for (char& c : s) {
    if (c == '.' || c == '/' || c == ' ') c = '_';
  }
  return s;
}

}  // namespace

SweepOutcome run_sweep(const SweepSpec& sweep, const std::filesystem::path& out_root) {
  SweepOutcome out;
  const std::string sweep_hash =
      config_hash(json{{"axis", sweep.axis},
                       {"values", sweep.values},
                       {"base", sweep.base.canonical}});
  out.dir = out_root / ("sweep_" + sweep.axis + "_" + sweep_hash);
  std::filesystem::create_directories(out.dir);

  std::ostringstream csv;
  csv << "axis,value,phase,epoch,val_clean,val_robust,test_clean,test_robust\n";
  std::ostringstream failures;

  for (const auto& value : sweep.values) {
    const std::string label = value_label(value);
    try {
      RunConfig point = RunConfig::from_json(apply_axis(sweep.base.canonical, sweep.axis, value));
      point.output_dir = (out.dir / ("point_" + label)).string();
      const RunOutcome res = execute_run(point, out.dir);
      const std::string phase = point.experiment == "train" ? "train" : "retrain";
      const json metrics = json::parse("[" + [&] {
        std::string lines = read_text(res.dir / (phase + "_metrics.jsonl"));
        std::replace(lines.begin(), lines.end(), '\n', ',');
        if (!lines.empty() && lines.back() == ',') lines.pop_back();
        return lines;
      }() + "]");
      double test_clean = -1.0, test_robust = -1.0;
      for (const auto& row : metrics) {
        if (row.contains("summary")) {
          test_clean = row["summary"].value("test_clean", -1.0);
          test_robust = row["summary"].value("test_robust", -1.0);
          continue;
        }
        csv << sweep.axis << ',' << label << ',' << phase << ',' << row["epoch"].get<int>() << ','
            << row["val_clean"].get<double>() << ',' << row.value("val_robust", -1.0)
            << ",,\n";
      }
      csv << sweep.axis << ',' << label << ',' << phase << ",final,,," << test_clean << ','
          << test_robust << '\n';
    } catch (const std::exception& e) {
      // A failed point is recorded and the sweep continues.
      failures << label << ',' << e.what() << '\n';
      ++out.failures;
    }
  }

  out.csv = csv.str();
  write_text(out.dir / "sweep.csv", out.csv);
  if (out.failures > 0) write_text(out.dir / "failures.csv", failures.str());
  return out;
}

namespace {

struct RunHandle {
  std::filesystem::path dir;
  RunConfig config;
  std::string phase;  // phase whose trajectory/model represents the run
};

RunHandle open_run(const std::filesystem::path& dir) {
  RunHandle h;
  h.dir = dir;
  h.config = RunConfig::from_file(dir / "config.json");
  h.phase = h.config.experiment == "train" ? "train" : "retrain";
  return h;
}

std::vector<json> read_metric_rows(const std::filesystem::path& dir, const std::string& phase) {
  std::istringstream in(read_text(dir / (phase + "_metrics.jsonl")));
  std::vector<json> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    if (!row.contains("summary")) rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string distance_csv(const std::filesystem::path& run_full,
                         const std::filesystem::path& run_pruned) {
  const RunHandle full = open_run(run_full);
  const RunHandle pruned = open_run(run_pruned);

  const auto full_rows = read_metric_rows(full.dir, full.phase);
  const auto pruned_rows = read_metric_rows(pruned.dir, pruned.phase);
  const int epochs = static_cast<int>(std::min(full_rows.size(), pruned_rows.size()));

  const auto full_ckpts = full.dir / ("epochs_" + full.phase);
  const auto pruned_ckpts = pruned.dir / ("epochs_" + pruned.phase);
  std::string missing;
  for (int e = 0; e < epochs; ++e) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d.ckpt", e);
    if (!std::filesystem::exists(full_ckpts / name)) missing += " full:" + std::to_string(e);
    if (!std::filesystem::exists(pruned_ckpts / name)) missing += " pruned:" + std::to_string(e);
  }
  if (!missing.empty()) {
    throw std::runtime_error("distance: missing per-epoch checkpoints for epochs:" + missing +
                             " (enable save_epoch_checkpoints)");
  }

  std::ostringstream csv;
  csv << "epoch,rel_distance,full_val_clean,pruned_val_clean,full_val_robust,pruned_val_robust\n";
  for (int e = 0; e < epochs; ++e) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d.ckpt", e);
    const ParamSet wf = load_checkpoint(full_ckpts / name).params;
    const ParamSet wp = load_checkpoint(pruned_ckpts / name).params;
    csv << e << ',' << relative_distance(wf, wp) << ','
        << full_rows[static_cast<std::size_t>(e)]["val_clean"].get<double>() << ','
        << pruned_rows[static_cast<std::size_t>(e)]["val_clean"].get<double>() << ','
        << full_rows[static_cast<std::size_t>(e)].value("val_robust", -1.0) << ','
        << pruned_rows[static_cast<std::size_t>(e)].value("val_robust", -1.0) << '\n';
  }
  return csv.str();
}

std::string transfer_matrix_csv(const std::vector<std::filesystem::path>& run_dirs,
                                const AttackConfig& cfg, int limit) {
  check(run_dirs.size() >= 2, "transfer: need at least 2 runs");
  std::vector<RunHandle> runs;
  std::vector<ParamSet> models;
  for (const auto& dir : run_dirs) {
    RunHandle h = open_run(dir);
    models.push_back(load_checkpoint(dir / "model.ckpt").params);
    runs.push_back(std::move(h));
  }
  for (const auto& r : runs) {
    check(r.config.model.id == runs[0].config.model.id &&
              r.config.model.input_shape == runs[0].config.model.input_shape &&
              r.config.model.classes == runs[0].config.model.classes,
          "transfer: incompatible model specs between runs");
  }
  DataCfg data_cfg = runs[0].config.data;
  if (limit > 0) data_cfg.test_limit = limit;
  const Dataset test = load_data(data_cfg, runs[0].config.seeds).test;

  std::ostringstream csv;
  csv << "source";
  for (const auto& r : runs) csv << ',' << r.dir.filename().string();
  csv << '\n';
  for (std::size_t i = 0; i < runs.size(); ++i) {
    csv << runs[i].dir.filename().string();
    for (std::size_t j = 0; j < runs.size(); ++j) {
      const double acc = transfer_eval(models[i], models[j], runs[0].config.model, test, cfg,
                                       derive_seed(runs[0].config.seeds.attack, "transfer", i));
      csv << ',' << acc;
    }
    csv << '\n';
  }
  return csv.str();
}

std::filesystem::path resolve_out_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("TICKET_OUT_ROOT"); env && *env) return env;
  return "runs";
}

}  // namespace ticket
