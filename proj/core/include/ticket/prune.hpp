#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ticket/nn.hpp"
#include "ticket/tensor.hpp"

namespace ticket {

enum class PruneScope { Global, Layerwise };

/// Binary keep/drop pattern, one 0/1 tensor per prunable parameter, in
/// registry order. Immutable after construction.
struct Mask {
  struct Entry {
    std::string name;
    Tensor bits;  // values in {0,1}, same shape as the parameter
  };
  std::vector<Entry> entries;

  std::int64_t total() const;
  std::int64_t ones() const;
  double sparsity() const;  // 1 - ones/total

  bool aligned_with(const ParamSet& params) const;

  static Mask all_ones(const ParamSet& params);
};

/// The paper's central artifact: the pre-training initialization snapshot
/// (already masked) plus the sparsity pattern and how it was produced.
struct Ticket {
  ParamSet init;  // masked initialization, never trained weights
  Mask mask;
  struct Provenance {
    double ratio = 0.8;
    PruneScope scope = PruneScope::Global;
    std::string source_mode = "natural";  // natural | fgsm_at | pgd_at
    double source_lr = 0.0;
    int rounds = 1;  // 1 = one-shot
    std::uint64_t init_seed = 0;
    std::uint64_t data_seed = 0;
    std::string spec_id;
  } provenance;
};

/// Zeroes the floor(ratio*N) smallest-magnitude prunable weights. Global scope
/// pools all prunable entries under one threshold; layerwise prunes each entry
/// independently. Ties at the threshold break by registry order then flat
/// index.
Mask magnitude_prune(const ParamSet& params, double ratio, PruneScope scope);

/// Elementwise product on prunable entries; biases untouched. Idempotent.
ParamSet apply_mask(const ParamSet& params, const Mask& mask);

/// Intersection of two aligned masks (zeros never revive).
Mask intersect(const Mask& a, const Mask& b);

Ticket make_ticket(const ParamSet& init, const ParamSet& trained, double ratio,
                   PruneScope scope, Ticket::Provenance provenance);

/// Train-prune-reset for `rounds` rounds with per-round ratio r solving
/// (1-r)^rounds = 1-target_ratio. train_fn receives the masked initialization
/// and returns the trained weights.
Ticket iterative_prune(const ParamSet& init,
                       const std::function<ParamSet(const ParamSet&)>& train_fn,
                       double target_ratio, int rounds, PruneScope scope,
                       Ticket::Provenance provenance);

/// ||w_f - w_p||_2 / ||w_f||_2 over the concatenation of all parameters.
double relative_distance(const ParamSet& w_full, const ParamSet& w_pruned);

/// Versioned ticket container: provenance JSON + init checkpoint + packed
/// little-endian bitset masks + CRC32.
void save_ticket(const std::filesystem::path& path, const Ticket& ticket);
Ticket load_ticket(const std::filesystem::path& path);

}  // namespace ticket
