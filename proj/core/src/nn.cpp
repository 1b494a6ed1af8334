#include "ticket/nn.hpp"

#include <algorithm>
#include <cmath>

#include "ticket/rng.hpp"
#include "ticket/serialize.hpp"

namespace ticket {

void ParamSet::add(std::string name, Tensor value, bool prunable) {
  check(!has(name), "duplicate parameter name: " + name);
  entries.push_back(Entry{std::move(name), std::move(value), prunable});
}

bool ParamSet::has(const std::string& name) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const Entry& e) { return e.name == name; });
}

const ParamSet::Entry& ParamSet::at(const std::string& name) const {
  for (const Entry& e : entries) {
    if (e.name == name) return e;
  }
  throw ContractViolation("no parameter named " + name);
}

ParamSet::Entry& ParamSet::at(const std::string& name) {
  for (Entry& e : entries) {
    if (e.name == name) return e;
  }
  throw ContractViolation("no parameter named " + name);
}

std::int64_t ParamSet::total_count() const {
  std::int64_t n = 0;
  for (const Entry& e : entries) n += e.value.size();
  return n;
}

std::int64_t ParamSet::prunable_count() const {
  std::int64_t n = 0;
  for (const Entry& e : entries) {
    if (e.prunable) n += e.value.size();
  }
  return n;
}

bool ParamSet::aligned_with(const ParamSet& other) const {
  if (entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name != other.entries[i].name ||
        entries[i].value.shape != other.entries[i].value.shape) {
      return false;
    }
  }
  return true;
}

ModelSpec ModelSpec::parse(const std::string& id, Shape input_shape, int classes) {
  ModelSpec spec;
  spec.id = id;
  spec.input_shape = std::move(input_shape);
  spec.classes = classes;
  check(spec.input_shape.size() == 3, "input shape must be (C,H,W)");
  check(classes >= 2, "need at least 2 classes");
  if (id == "mlp") {
    spec.arch = Arch::Mlp;
  } else if (id == "lenet") {
    spec.arch = Arch::Lenet;
  } else if (id.rfind("conv", 0) == 0) {
    spec.arch = Arch::ConvLadder;
    const auto dash = id.find('-');
    check(dash != std::string::npos && dash > 4, "bad conv ladder id: " + id +
                                                     " (want conv<depth>-<width>)");
    try {
      spec.depth = std::stoi(id.substr(4, dash - 4));
      spec.width_mult = std::stoi(id.substr(dash + 1));
    } catch (const std::exception&) {
      throw ContractViolation("bad conv ladder id: " + id);
    }
    check(spec.depth >= 2 && spec.depth % 2 == 0, "conv ladder depth must be even and >= 2");
    check(spec.width_mult >= 1, "conv ladder width must be >= 1");
  } else {
    throw ContractViolation("unknown architecture id: " + id);
  }
  return spec;
}

namespace {

struct LayerDims {
  // Conv layers as (out_ch, in_ch); empty for mlp. fc as (in, out).
  std::vector<std::pair<int, int>> convs;
  std::vector<std::pair<int, int>> fcs;
  Pad pad = Pad::Valid;
  // Pooling happens after conv index i iff pool_after[i].
  std::vector<bool> pool_after;
};

LayerDims layer_dims(const ModelSpec& spec) {
  const int c = spec.input_shape[0];
  const int h = spec.input_shape[1];
  const int w = spec.input_shape[2];
  LayerDims d;
  switch (spec.arch) {
    case Arch::Mlp: {
      const int in = static_cast<int>(numel(spec.input_shape));
      d.fcs = {{in, 300}, {300, 100}, {100, spec.classes}};
      break;
    }
    case Arch::Lenet: {
      d.convs = {{6, c}, {16, 6}};
      d.pool_after = {true, true};
      d.pad = Pad::Valid;
      const int h2 = ((h - 4) / 2 - 4) / 2;
      const int w2 = ((w - 4) / 2 - 4) / 2;
      check(h2 > 0 && w2 > 0, "input too small for lenet: " + shape_str(spec.input_shape));
      d.fcs = {{16 * h2 * w2, 120}, {120, 84}, {84, spec.classes}};
      break;
    }
    case Arch::ConvLadder: {
      check(h % 4 == 0 && w % 4 == 0, "conv ladder needs H,W divisible by 4, got " +
                                          shape_str(spec.input_shape));
      const int wm = spec.width_mult;
      const int half = spec.depth / 2;
      int in = c;
      for (int i = 0; i < spec.depth; ++i) {
        const int out = (i < half ? 6 : 16) * wm;
        d.convs.emplace_back(out, in);
        d.pool_after.push_back(i == half - 1 || i == spec.depth - 1);
        in = out;
      }
      d.pad = Pad::Same;
      const int flat = 16 * wm * (h / 4) * (w / 4);
      d.fcs = {{flat, 120 * wm}, {120 * wm, 84}, {84, spec.classes}};
      break;
    }
  }
  return d;
}

}  // namespace

std::int64_t analytic_prunable_count(const ModelSpec& spec) {
  const LayerDims d = layer_dims(spec);
  std::int64_t n = 0;
  for (auto [out, in] : d.convs) n += static_cast<std::int64_t>(out) * in * 25;
  for (auto [in, out] : d.fcs) n += static_cast<std::int64_t>(in) * out;
  return n;
}

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  const LayerDims d = layer_dims(spec);
  ParamSet params;
  auto he_fill = [](Tensor& t, int fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / fan_in);
    for (float& v : t.data) v = static_cast<float>(stddev * rng.gaussian());
  };
  for (std::size_t i = 0; i < d.convs.size(); ++i) {
    const auto [out, in] = d.convs[i];
    Rng rng(derive_seed(seed, "conv", i));
    Tensor w({out, in, 5, 5});
    he_fill(w, in * 25, rng);
    const std::string base = "conv" + std::to_string(i + 1);
    params.add(base + ".weight", std::move(w), true);
    params.add(base + ".bias", Tensor({out}), false);
  }
  for (std::size_t i = 0; i < d.fcs.size(); ++i) {
    const auto [in, out] = d.fcs[i];
    Rng rng(derive_seed(seed, "fc", i));
    Tensor w({in, out});
    he_fill(w, in, rng);
    const std::string base = "fc" + std::to_string(i + 1);
    params.add(base + ".weight", std::move(w), true);
    params.add(base + ".bias", Tensor({out}), false);
  }
  return params;
}

ForwardGraph predict_graph(Tape& tape, const ModelSpec& spec, const ParamSet& params,
                           const Tensor& batch) {
  check(batch.rank() == 4, "predict: batch must be (N,C,H,W), got " + shape_str(batch.shape));
  const Shape expect = {batch.dim(0), spec.input_shape[0], spec.input_shape[1],
                        spec.input_shape[2]};
  check(batch.shape == expect, "predict: batch " + shape_str(batch.shape) +
                                   " does not match spec input " + shape_str(expect));

  ForwardGraph g;
  g.input = tape.leaf(batch);
  g.param_vars.reserve(params.entries.size());
  for (const auto& e : params.entries) g.param_vars.push_back(tape.leaf(e.value));

  auto var_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
      if (params.entries[i].name == name) return g.param_vars[i];
    }
    throw ContractViolation("predict: missing parameter " + name);
  };

  const LayerDims d = layer_dims(spec);
  Tape::Var x = g.input;
  for (std::size_t i = 0; i < d.convs.size(); ++i) {
    const std::string base = "conv" + std::to_string(i + 1);
    x = tape.conv2d(x, var_of(base + ".weight"), d.pad);
    x = tape.bias_add(x, var_of(base + ".bias"));
    x = tape.relu(x);
    if (d.pool_after[i]) x = tape.maxpool2x2(x);
  }
  x = tape.flatten(x);
  for (std::size_t i = 0; i < d.fcs.size(); ++i) {
    const std::string base = "fc" + std::to_string(i + 1);
    x = tape.matmul(x, var_of(base + ".weight"));
    x = tape.bias_add(x, var_of(base + ".bias"));
    if (i + 1 < d.fcs.size()) x = tape.relu(x);
  }
  g.logits = x;

  const Tensor& logits = tape.value(g.logits);
  if (!all_finite(logits)) throw NumericError("non-finite logits in forward pass");
  return g;
}

Tensor predict(const ParamSet& params, const ModelSpec& spec, const Tensor& batch) {
  Tape tape;
  return tape.value(predict_graph(tape, spec, params, batch).logits);
}

std::vector<int> argmax_rows(const Tensor& logits) {
  check(logits.rank() == 2, "argmax_rows: need 2-D logits");
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data.data() + static_cast<std::ptrdiff_t>(i) * k;
    out[static_cast<std::size_t>(i)] =
        static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

void encode_params(ByteWriter& w, const std::string& spec_id, std::uint64_t seed,
                   const ParamSet& params) {
  w.u32(1);  // container version
  w.str(spec_id);
  w.u64(seed);
  w.u32(static_cast<std::uint32_t>(params.entries.size()));
  for (const auto& e : params.entries) {
    w.str(e.name);
    w.u8(e.prunable ? 1 : 0);
    w.u8(0);  // dtype: f32
    w.tensor(e.value);
  }
}

Checkpoint decode_params(ByteReader& r) {
  const std::uint32_t version = r.u32();
  if (version != 1) throw SerializeError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.spec_id = r.str();
  ck.seed = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const bool prunable = r.u8() != 0;
    const std::uint8_t dtype = r.u8();
    if (dtype != 0) throw SerializeError("unsupported dtype " + std::to_string(dtype));
    ck.params.add(std::move(name), r.tensor(), prunable);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     std::uint64_t seed, const ParamSet& params) {
  ByteWriter w;
  encode_params(w, spec.id, seed, params);
  write_container(path, "TKCP", w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  ByteReader r(read_container(path, "TKCP"));
  return decode_params(r);
}

}  // namespace ticket
