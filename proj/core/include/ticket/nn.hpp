#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ticket/autodiff.hpp"
#include "ticket/tensor.hpp"

namespace ticket {

/// Ordered, named parameter registry. Iteration order is the registration
/// order and is identical across runs for the same spec.
struct ParamSet {
  struct Entry {
    std::string name;
    Tensor value;
    bool prunable;  // false for every bias
  };

  std::vector<Entry> entries;

  void add(std::string name, Tensor value, bool prunable);
  bool has(const std::string& name) const;
  const Entry& at(const std::string& name) const;
  Entry& at(const std::string& name);

  std::int64_t total_count() const;
  std::int64_t prunable_count() const;

  /// Names and shapes match pairwise, in order.
  bool aligned_with(const ParamSet& other) const;
};

enum class Arch { Mlp, Lenet, ConvLadder };

/// Architecture id grammar: "mlp", "lenet", or "conv<depth>-<width>" for the
/// capacity ladder (e.g. conv2-4 = two conv layers at 4x base width).
struct ModelSpec {
  std::string id = "lenet";
  Arch arch = Arch::Lenet;
  Shape input_shape = {1, 28, 28};  // (C, H, W)
  int classes = 10;
  int width_mult = 1;
  int depth = 2;

  static ModelSpec parse(const std::string& id, Shape input_shape = {1, 28, 28},
                         int classes = 10);
};

/// He fan-in initialization for weights, zeros for biases. Deterministic:
/// identical (spec, seed) pairs yield identical ParamSets.
ParamSet init_params(const ModelSpec& spec, std::uint64_t seed);

/// Closed-form prunable weight count for a spec (used to cross-check init).
std::int64_t analytic_prunable_count(const ModelSpec& spec);

/// Forward graph for one batch. Binds every parameter as a tape leaf so both
/// parameter and input gradients are reachable after backward().
struct ForwardGraph {
  Tape::Var input;
  Tape::Var logits;
  std::vector<Tape::Var> param_vars;  // aligned with ParamSet entries
};

ForwardGraph predict_graph(Tape& tape, const ModelSpec& spec, const ParamSet& params,
                           const Tensor& batch);

/// Forward-only convenience wrapper; returns logits (batch, classes).
Tensor predict(const ParamSet& params, const ModelSpec& spec, const Tensor& batch);

std::vector<int> argmax_rows(const Tensor& logits);

/// Versioned binary checkpoint: spec id, seed, every named tensor, CRC32.
void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     std::uint64_t seed, const ParamSet& params);

struct Checkpoint {
  std::string spec_id;
  std::uint64_t seed;
  ParamSet params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Payload-level codecs shared with the ticket container.
void encode_params(class ByteWriter& w, const std::string& spec_id, std::uint64_t seed,
                   const ParamSet& params);
Checkpoint decode_params(class ByteReader& r);

}  // namespace ticket
