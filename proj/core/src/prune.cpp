#include "ticket/prune.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "ticket/serialize.hpp"

namespace ticket {

using nlohmann::json;

std::int64_t Mask::total() const {
  std::int64_t n = 0;
  for (const auto& e : entries) n += e.bits.size();
  return n;
}

std::int64_t Mask::ones() const {
  std::int64_t n = 0;
  for (const auto& e : entries) {
    for (float v : e.bits.data) n += v != 0.0f;
  }
  return n;
}

double Mask::sparsity() const {
  const std::int64_t t = total();
  return t == 0 ? 0.0 : 1.0 - static_cast<double>(ones()) / static_cast<double>(t);
}

bool Mask::aligned_with(const ParamSet& params) const {
  std::size_t mi = 0;
  for (const auto& e : params.entries) {
    if (!e.prunable) continue;
    if (mi >= entries.size() || entries[mi].name != e.name ||
        entries[mi].bits.shape != e.value.shape) {
      return false;
    }
    ++mi;
  }
  return mi == entries.size();
}

Mask Mask::all_ones(const ParamSet& params) {
  Mask m;
  for (const auto& e : params.entries) {
    if (e.prunable) m.entries.push_back({e.name, Tensor::full(e.value.shape, 1.0f)});
  }
  return m;
}

namespace {

struct WeightRef {
  float magnitude;
  int entry;       // index into mask entries (registry order over prunables)
  std::int64_t flat;
};

Mask prune_pool(const std::vector<const ParamSet::Entry*>& prunable, double ratio) {
  Mask m;
  std::vector<WeightRef> refs;
  std::int64_t total = 0;
  for (const auto* e : prunable) total += e->value.size();
  refs.reserve(static_cast<std::size_t>(total));
  for (std::size_t ei = 0; ei < prunable.size(); ++ei) {
    const Tensor& t = prunable[ei]->value;
    m.entries.push_back({prunable[ei]->name, Tensor::full(t.shape, 1.0f)});
    for (std::int64_t i = 0; i < t.size(); ++i) {
      refs.push_back({std::fabs(t.data[i]), static_cast<int>(ei), i});
    }
  }
  const auto n_prune = static_cast<std::int64_t>(
      std::floor(ratio * static_cast<double>(total)));
  if (n_prune <= 0) return m;
  // Deterministic tie handling: magnitude, then registry order, then index.
  std::nth_element(refs.begin(), refs.begin() + n_prune - 1, refs.end(),
                   [](const WeightRef& a, const WeightRef& b) {
                     if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
                     if (a.entry != b.entry) return a.entry < b.entry;
                     return a.flat < b.flat;
                   });
  std::sort(refs.begin(), refs.begin() + n_prune,
            [](const WeightRef& a, const WeightRef& b) {
              if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
              if (a.entry != b.entry) return a.entry < b.entry;
              return a.flat < b.flat;
            });
  for (std::int64_t i = 0; i < n_prune; ++i) {
    m.entries[static_cast<std::size_t>(refs[static_cast<std::size_t>(i)].entry)]
        .bits.data[static_cast<std::size_t>(refs[static_cast<std::size_t>(i)].flat)] = 0.0f;
  }
  return m;
}

}  // namespace

Mask magnitude_prune(const ParamSet& params, double ratio, PruneScope scope) {
  check(ratio >= 0.0 && ratio < 1.0, "magnitude_prune: ratio must be in [0,1), got " +
                                         std::to_string(ratio));
  std::vector<const ParamSet::Entry*> prunable;
  for (const auto& e : params.entries) {
    if (e.prunable) prunable.push_back(&e);
  }
  check(!prunable.empty(), "magnitude_prune: no prunable parameters");

  if (scope == PruneScope::Global) return prune_pool(prunable, ratio);

  Mask m;
  for (const auto* e : prunable) {
    Mask sub = prune_pool({e}, ratio);
    m.entries.push_back(std::move(sub.entries[0]));
  }
  return m;
}

ParamSet apply_mask(const ParamSet& params, const Mask& mask) {
  check(mask.aligned_with(params), "apply_mask: mask does not align with parameter registry");
  ParamSet out = params;
  std::size_t mi = 0;
  for (auto& e : out.entries) {
    if (!e.prunable) continue;
    const Tensor& bits = mask.entries[mi++].bits;
    for (std::int64_t i = 0; i < e.value.size(); ++i) e.value.data[i] *= bits.data[i];
  }
  return out;
}

Mask intersect(const Mask& a, const Mask& b) {
  check(a.entries.size() == b.entries.size(), "intersect: mask layouts differ");
  Mask out = a;
  for (std::size_t e = 0; e < a.entries.size(); ++e) {
    check(a.entries[e].name == b.entries[e].name &&
              a.entries[e].bits.shape == b.entries[e].bits.shape,
          "intersect: mask layouts differ at " + a.entries[e].name);
    for (std::int64_t i = 0; i < out.entries[e].bits.size(); ++i) {
      out.entries[e].bits.data[i] *= b.entries[e].bits.data[i];
    }
  }
  return out;
}

Ticket make_ticket(const ParamSet& init, const ParamSet& trained, double ratio,
                   PruneScope scope, Ticket::Provenance provenance) {
  check(init.aligned_with(trained), "make_ticket: init and trained registries differ");
  Ticket t;
  t.mask = magnitude_prune(trained, ratio, scope);
  t.init = apply_mask(init, t.mask);
  t.provenance = std::move(provenance);
  t.provenance.ratio = ratio;
  t.provenance.scope = scope;
  return t;
}

Ticket iterative_prune(const ParamSet& init,
                       const std::function<ParamSet(const ParamSet&)>& train_fn,
                       double target_ratio, int rounds, PruneScope scope,
                       Ticket::Provenance provenance) {
  check(rounds >= 1, "iterative_prune: rounds must be >= 1");
  check(target_ratio >= 0.0 && target_ratio < 1.0, "iterative_prune: bad target ratio");
  const double keep_per_round = std::pow(1.0 - target_ratio, 1.0 / rounds);

  Mask mask = Mask::all_ones(init);
  for (int round = 1; round <= rounds; ++round) {
    ParamSet start = apply_mask(init, mask);
    ParamSet trained = train_fn(start);
    check(init.aligned_with(trained), "iterative_prune: train_fn changed the registry");
    // Cumulative ratio after this round; already-pruned zeros sort first, so
    // composition is monotone. Intersect anyway to make it structural.
    const double ratio = 1.0 - std::pow(keep_per_round, round);
    mask = intersect(mask, magnitude_prune(trained, ratio, scope));
  }

  Ticket t;
  t.mask = std::move(mask);
  t.init = apply_mask(init, t.mask);
  t.provenance = std::move(provenance);
  t.provenance.ratio = target_ratio;
  t.provenance.scope = scope;
  t.provenance.rounds = rounds;
  return t;
}

double relative_distance(const ParamSet& w_full, const ParamSet& w_pruned) {
  check(w_full.aligned_with(w_pruned), "relative_distance: registries differ");
  double diff2 = 0.0;
  double norm2 = 0.0;
  for (std::size_t e = 0; e < w_full.entries.size(); ++e) {
    const auto& a = w_full.entries[e].value;
    const auto& b = w_pruned.entries[e].value;
    for (std::int64_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a.data[i]) - b.data[i];
      diff2 += d * d;
      norm2 += static_cast<double>(a.data[i]) * a.data[i];
    }
  }
  check(norm2 > 0.0, "relative_distance: ||w_f|| is zero");
  return std::sqrt(diff2) / std::sqrt(norm2);
}

namespace {

const char* scope_name(PruneScope s) {
  return s == PruneScope::Global ? "global" : "layerwise";
}

PruneScope scope_from(const std::string& s) {
  if (s == "global") return PruneScope::Global;
  if (s == "layerwise") return PruneScope::Layerwise;
  throw ContractViolation("unknown prune scope: " + s);
}

}  // namespace

void save_ticket(const std::filesystem::path& path, const Ticket& ticket) {
  json prov{{"ratio", ticket.provenance.ratio},
            {"scope", scope_name(ticket.provenance.scope)},
            {"source_mode", ticket.provenance.source_mode},
            {"source_lr", ticket.provenance.source_lr},
            {"rounds", ticket.provenance.rounds},
            {"init_seed", ticket.provenance.init_seed},
            {"data_seed", ticket.provenance.data_seed},
            {"spec_id", ticket.provenance.spec_id}};
  ByteWriter w;
  w.u32(1);  // ticket container version
  w.str(prov.dump());
  encode_params(w, ticket.provenance.spec_id, ticket.provenance.init_seed, ticket.init);
  w.u32(static_cast<std::uint32_t>(ticket.mask.entries.size()));
  for (const auto& e : ticket.mask.entries) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.bits.shape.size()));
    for (int d : e.bits.shape) w.i32(d);
    const std::int64_t n = e.bits.size();
    std::vector<std::uint8_t> packed(static_cast<std::size_t>((n + 7) / 8), 0);
    for (std::int64_t i = 0; i < n; ++i) {
      if (e.bits.data[static_cast<std::size_t>(i)] != 0.0f) {
        packed[static_cast<std::size_t>(i / 8)] |= static_cast<std::uint8_t>(1u << (i % 8));
      }
    }
    w.u64(static_cast<std::uint64_t>(n));
    w.bytes(packed.data(), packed.size());
  }
  write_container(path, "TKTK", w.buffer());
}

Ticket load_ticket(const std::filesystem::path& path) {
  ByteReader r(read_container(path, "TKTK"));
  const std::uint32_t version = r.u32();
  if (version != 1) throw SerializeError("unsupported ticket version " + std::to_string(version));
  const json prov = json::parse(r.str());
  Ticket t;
  t.provenance.ratio = prov.at("ratio").get<double>();
  t.provenance.scope = scope_from(prov.at("scope").get<std::string>());
  t.provenance.source_mode = prov.at("source_mode").get<std::string>();
  t.provenance.source_lr = prov.at("source_lr").get<double>();
  t.provenance.rounds = prov.at("rounds").get<int>();
  t.provenance.init_seed = prov.at("init_seed").get<std::uint64_t>();
  t.provenance.data_seed = prov.at("data_seed").get<std::uint64_t>();
  t.provenance.spec_id = prov.at("spec_id").get<std::string>();
  t.init = decode_params(r).params;
  const std::uint32_t count = r.u32();
  for (std::uint32_t e = 0; e < count; ++e) {
    Mask::Entry entry;
    entry.name = r.str();
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = r.i32();
    const std::uint64_t n = r.u64();
    if (static_cast<std::int64_t>(n) != numel(shape)) {
      throw SerializeError("mask bit count does not match shape in ticket");
    }
    entry.bits = Tensor(shape);
    std::vector<std::uint8_t> packed(static_cast<std::size_t>((n + 7) / 8));
    for (auto& byte : packed) byte = r.u8();
    for (std::uint64_t i = 0; i < n; ++i) {
      entry.bits.data[i] = (packed[i / 8] >> (i % 8)) & 1u ? 1.0f : 0.0f;
    }
    t.mask.entries.push_back(std::move(entry));
  }
  return t;
}

}  // namespace ticket
