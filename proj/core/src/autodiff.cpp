#include "ticket/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>

namespace ticket {

namespace {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatF>;
using CMapM = Eigen::Map<const MatF>;

struct ConvDims {
  int n, c, h, w;    // input
  int f, kh, kw;     // kernel
  int oh, ow;        // output
  int pt, pl;        // top/left padding
};

ConvDims conv_dims(const Shape& xs, const Shape& ks, Pad pad) {
  check(xs.size() == 4, "conv2d: input must be 4-D (N,C,H,W), got " + shape_str(xs));
  check(ks.size() == 4, "conv2d: kernel must be 4-D (F,C,KH,KW), got " + shape_str(ks));
  ConvDims d{};
  d.n = xs[0]; d.c = xs[1]; d.h = xs[2]; d.w = xs[3];
  d.f = ks[0]; d.kh = ks[2]; d.kw = ks[3];
  check(ks[1] == d.c, "conv2d: channel mismatch, input " + shape_str(xs) + " vs kernel " + shape_str(ks));
  if (pad == Pad::Same) {
    check(d.kh % 2 == 1 && d.kw % 2 == 1, "conv2d: same padding requires odd kernel");
    d.oh = d.h; d.ow = d.w;
    d.pt = (d.kh - 1) / 2; d.pl = (d.kw - 1) / 2;
  } else {
    check(d.h >= d.kh && d.w >= d.kw,
          "conv2d: kernel " + shape_str(ks) + " larger than input " + shape_str(xs));
    d.oh = d.h - d.kh + 1; d.ow = d.w - d.kw + 1;
    d.pt = 0; d.pl = 0;
  }
  return d;
}

// Fills col (C*KH*KW x OH*OW, row-major) from one image.
void im2col(const float* img, const ConvDims& d, float* col) {
  const int ohw = d.oh * d.ow;
  for (int c = 0; c < d.c; ++c) {
    const float* chan = img + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        float* row = col + static_cast<std::ptrdiff_t>((c * d.kh + ki) * d.kw + kj) * ohw;
        for (int oi = 0; oi < d.oh; ++oi) {
          const int ii = oi - d.pt + ki;
          float* out = row + oi * d.ow;
          if (ii < 0 || ii >= d.h) {
            std::fill(out, out + d.ow, 0.0f);
            continue;
          }
          for (int oj = 0; oj < d.ow; ++oj) {
            const int jj = oj - d.pl + kj;
            out[oj] = (jj >= 0 && jj < d.w) ? chan[ii * d.w + jj] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-adds a col gradient back into one image gradient.
void col2im_accum(const float* col, const ConvDims& d, float* img) {
  const int ohw = d.oh * d.ow;
  for (int c = 0; c < d.c; ++c) {
    float* chan = img + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const float* row = col + static_cast<std::ptrdiff_t>((c * d.kh + ki) * d.kw + kj) * ohw;
        for (int oi = 0; oi < d.oh; ++oi) {
          const int ii = oi - d.pt + ki;
          if (ii < 0 || ii >= d.h) continue;
          const float* in = row + oi * d.ow;
          for (int oj = 0; oj < d.ow; ++oj) {
            const int jj = oj - d.pl + kj;
            if (jj >= 0 && jj < d.w) chan[ii * d.w + jj] += in[oj];
          }
        }
      }
    }
  }
}

}  // namespace

Tape::Var Tape::push(Tensor value, std::function<void(Tape&, const Node&)> back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Tape::Var Tape::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
  const int ia = a.idx, ib = b.idx;
  return push(std::move(out), [ia, ib](Tape& t, const Node& n) {
    Tensor& ga = t.nodes_[ia].grad;
    Tensor& gb = t.nodes_[ib].grad;
    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
      ga.data[i] += n.grad.data[i];
      gb.data[i] += n.grad.data[i];
    }
  });
}

Tape::Var Tape::mul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
  const int ia = a.idx, ib = b.idx;
  return push(std::move(out), [ia, ib](Tape& t, const Node& n) {
    const Tensor& va = t.nodes_[ia].value;
    const Tensor& vb = t.nodes_[ib].value;
    Tensor& ga = t.nodes_[ia].grad;
    Tensor& gb = t.nodes_[ib].grad;
    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
      ga.data[i] += n.grad.data[i] * vb.data[i];
      gb.data[i] += n.grad.data[i] * va.data[i];
    }
  });
}

Tape::Var Tape::relu(Var x) {
  Tensor out = value(x);
  for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
  const int ix = x.idx;
  return push(std::move(out), [ix](Tape& t, const Node& n) {
    const Tensor& vx = t.nodes_[ix].value;
    Tensor& gx = t.nodes_[ix].grad;
    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
      if (vx.data[i] > 0.0f) gx.data[i] += n.grad.data[i];
    }
  });
}

Tape::Var Tape::flatten(Var x) {
  const Tensor& tx = value(x);
  check(tx.rank() >= 2, "flatten: need rank >= 2, got " + shape_str(tx.shape));
  const int batch = tx.dim(0);
  const int rest = static_cast<int>(tx.size() / batch);
  Tensor out({batch, rest}, tx.data);
  const int ix = x.idx;
  return push(std::move(out), [ix](Tape& t, const Node& n) {
    Tensor& gx = t.nodes_[ix].grad;
    for (std::int64_t i = 0; i < n.grad.size(); ++i) gx.data[i] += n.grad.data[i];
  });
}

Tape::Var Tape::sum(Var x) {
  const Tensor& tx = value(x);
  double acc = 0.0;
  for (float v : tx.data) acc += v;
  const int ix = x.idx;
  return push(Tensor::scalar(static_cast<float>(acc)), [ix](Tape& t, const Node& n) {
    Tensor& gx = t.nodes_[ix].grad;
    const float g = n.grad.data[0];
    for (float& v : gx.data) v += g;
  });
}

Tape::Var Tape::bias_add(Var x, Var b) {
  const Tensor& tx = value(x);
  const Tensor& tb = value(b);
  check(tb.rank() == 1, "bias_add: bias must be 1-D, got " + shape_str(tb.shape));
  Tensor out = tx;
  int channels, inner;
  if (tx.rank() == 2) {
    channels = tx.dim(1);
    inner = 1;
  } else if (tx.rank() == 4) {
    channels = tx.dim(1);
    inner = tx.dim(2) * tx.dim(3);
  } else {
    throw ContractViolation("bias_add: input must be 2-D or 4-D, got " + shape_str(tx.shape));
  }
  check(tb.dim(0) == channels, "bias_add: bias " + shape_str(tb.shape) +
                                   " does not match channel axis of " + shape_str(tx.shape));
  const int batch = tx.dim(0);
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      float* p = out.data.data() + (static_cast<std::ptrdiff_t>(n) * channels + c) * inner;
      const float bv = tb.data[static_cast<std::size_t>(c)];
      for (int i = 0; i < inner; ++i) p[i] += bv;
    }
  }
  const int ix = x.idx, ib = b.idx;
  return push(std::move(out), [ix, ib, batch, channels, inner](Tape& t, const Node& n) {
    Tensor& gx = t.nodes_[ix].grad;
    Tensor& gb = t.nodes_[ib].grad;
    for (std::int64_t i = 0; i < n.grad.size(); ++i) gx.data[i] += n.grad.data[i];
    for (int nn = 0; nn < batch; ++nn) {
      for (int c = 0; c < channels; ++c) {
        const float* p = n.grad.data.data() + (static_cast<std::ptrdiff_t>(nn) * channels + c) * inner;
        double acc = 0.0;
        for (int i = 0; i < inner; ++i) acc += p[i];
        gb.data[static_cast<std::size_t>(c)] += static_cast<float>(acc);
      }
    }
  });
}

Tape::Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check(ta.rank() == 2 && tb.rank() == 2,
        "matmul: need 2-D operands, got " + shape_str(ta.shape) + " and " + shape_str(tb.shape));
  check(ta.dim(1) == tb.dim(0),
        "matmul: inner dims differ, " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  CMapM ma(ta.data.data(), m, k);
  CMapM mb(tb.data.data(), k, n);
  MapM mo(out.data.data(), m, n);
  mo.noalias() = ma * mb;
  const int ia = a.idx, ib = b.idx;
  return push(std::move(out), [ia, ib, m, k, n](Tape& t, const Node& nd) {
    CMapM g(nd.grad.data.data(), m, n);
    CMapM va(t.nodes_[ia].value.data.data(), m, k);
    CMapM vb(t.nodes_[ib].value.data.data(), k, n);
    MapM ga(t.nodes_[ia].grad.data.data(), m, k);
    MapM gb(t.nodes_[ib].grad.data.data(), k, n);
    ga.noalias() += g * vb.transpose();
    gb.noalias() += va.transpose() * g;
  });
}

Tape::Var Tape::conv2d(Var x, Var k, Pad pad) {
  const Tensor& tx = value(x);
  const Tensor& tk = value(k);
  const ConvDims d = conv_dims(tx.shape, tk.shape, pad);
  const int patch = d.c * d.kh * d.kw;
  const int ohw = d.oh * d.ow;

  Tensor out({d.n, d.f, d.oh, d.ow});
  std::vector<float> col(static_cast<std::size_t>(patch) * ohw);
  CMapM wm(tk.data.data(), d.f, patch);
  for (int n = 0; n < d.n; ++n) {
    im2col(tx.data.data() + static_cast<std::ptrdiff_t>(n) * d.c * d.h * d.w, d, col.data());
    CMapM mc(col.data(), patch, ohw);
    MapM mo(out.data.data() + static_cast<std::ptrdiff_t>(n) * d.f * ohw, d.f, ohw);
    mo.noalias() = wm * mc;
  }

  const int ix = x.idx, ik = k.idx;
  return push(std::move(out), [ix, ik, d, patch, ohw](Tape& t, const Node& nd) {
    const Tensor& vx = t.nodes_[ix].value;
    const Tensor& vk = t.nodes_[ik].value;
    Tensor& gx = t.nodes_[ix].grad;
    Tensor& gk = t.nodes_[ik].grad;
    CMapM wm(vk.data.data(), d.f, patch);
    MapM gwm(gk.data.data(), d.f, patch);
    std::vector<float> col(static_cast<std::size_t>(patch) * ohw);
    std::vector<float> dcol(static_cast<std::size_t>(patch) * ohw);
    for (int n = 0; n < d.n; ++n) {
      CMapM g(nd.grad.data.data() + static_cast<std::ptrdiff_t>(n) * d.f * ohw, d.f, ohw);
      im2col(vx.data.data() + static_cast<std::ptrdiff_t>(n) * d.c * d.h * d.w, d, col.data());
      CMapM mc(col.data(), patch, ohw);
      gwm.noalias() += g * mc.transpose();
      MapM mdc(dcol.data(), patch, ohw);
      mdc.noalias() = wm.transpose() * g;
      col2im_accum(dcol.data(), d, gx.data.data() + static_cast<std::ptrdiff_t>(n) * d.c * d.h * d.w);
    }
  });
}

Tape::Var Tape::maxpool2x2(Var x) {
  const Tensor& tx = value(x);
  check(tx.rank() == 4, "maxpool2x2: input must be 4-D, got " + shape_str(tx.shape));
  const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
  check(h % 2 == 0 && w % 2 == 0, "maxpool2x2: H and W must be even, got " + shape_str(tx.shape));
  const int oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.data.size());
  const float* in = tx.data.data();
  for (int img = 0; img < n * c; ++img) {
    const float* plane = in + static_cast<std::ptrdiff_t>(img) * h * w;
    float* op = out.data.data() + static_cast<std::ptrdiff_t>(img) * oh * ow;
    std::int32_t* ap = argmax->data() + static_cast<std::ptrdiff_t>(img) * oh * ow;
    for (int oi = 0; oi < oh; ++oi) {
      for (int oj = 0; oj < ow; ++oj) {
        const int base = (2 * oi) * w + 2 * oj;
        int best = base;
        float bv = plane[base];
        const int cand[3] = {base + 1, base + w, base + w + 1};
        for (int cd : cand) {
          if (plane[cd] > bv) { bv = plane[cd]; best = cd; }
        }
        op[oi * ow + oj] = bv;
        ap[oi * ow + oj] = static_cast<std::int32_t>(img) * h * w + best;
      }
    }
  }
  const int ix = x.idx;
  return push(std::move(out), [ix, argmax](Tape& t, const Node& nd) {
    Tensor& gx = t.nodes_[ix].grad;
    for (std::size_t i = 0; i < nd.grad.data.size(); ++i) {
      gx.data[static_cast<std::size_t>((*argmax)[i])] += nd.grad.data[i];
    }
  });
}

Tape::Var Tape::softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
  const Tensor& tz = value(logits);
  check(tz.rank() == 2, "softmax_cross_entropy: logits must be 2-D, got " + shape_str(tz.shape));
  const int n = tz.dim(0), k = tz.dim(1);
  check(static_cast<int>(labels.size()) == n,
        "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
            std::to_string(n));
  for (int y : labels) check(y >= 0 && y < k, "softmax_cross_entropy: label out of range");

  auto probs = std::make_shared<std::vector<float>>(tz.data.size());
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* z = tz.data.data() + static_cast<std::ptrdiff_t>(i) * k;
    float* p = probs->data() + static_cast<std::ptrdiff_t>(i) * k;
    float zmax = z[0];
    for (int j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(z[j]) - zmax);
    const double lse = static_cast<double>(zmax) + std::log(denom);
    loss += lse - static_cast<double>(z[labels[static_cast<std::size_t>(i)]]);
    for (int j = 0; j < k; ++j) {
      p[j] = static_cast<float>(std::exp(static_cast<double>(z[j]) - lse));
    }
  }
  const int iz = logits.idx;
  auto lab = std::make_shared<std::vector<int>>(labels);
  return push(Tensor::scalar(static_cast<float>(loss / n)),
              [iz, probs, lab, n, k](Tape& t, const Node& nd) {
                Tensor& gz = t.nodes_[iz].grad;
                const float g = nd.grad.data[0] / static_cast<float>(n);
                for (int i = 0; i < n; ++i) {
                  const float* p = probs->data() + static_cast<std::ptrdiff_t>(i) * k;
                  float* gr = gz.data.data() + static_cast<std::ptrdiff_t>(i) * k;
                  const int y = (*lab)[static_cast<std::size_t>(i)];
                  for (int j = 0; j < k; ++j) {
                    gr[j] += g * (p[j] - (j == y ? 1.0f : 0.0f));
                  }
                }
              });
}

Tape::Var Tape::cw_margin_mean(Var logits, const std::vector<int>& labels) {
  const Tensor& tz = value(logits);
  check(tz.rank() == 2, "cw_margin: logits must be 2-D, got " + shape_str(tz.shape));
  const int n = tz.dim(0), k = tz.dim(1);
  check(k >= 2, "cw_margin: need at least 2 classes");
  check(static_cast<int>(labels.size()) == n, "cw_margin: label count mismatch");

  auto rival = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* z = tz.data.data() + static_cast<std::ptrdiff_t>(i) * k;
    const int y = labels[static_cast<std::size_t>(i)];
    check(y >= 0 && y < k, "cw_margin: label out of range");
    int best = y == 0 ? 1 : 0;
    for (int j = 0; j < k; ++j) {
      if (j != y && z[j] > z[best]) best = j;
    }
    (*rival)[static_cast<std::size_t>(i)] = best;
    total += static_cast<double>(z[y]) - z[best];
  }
  const int iz = logits.idx;
  auto lab = std::make_shared<std::vector<int>>(labels);
  return push(Tensor::scalar(static_cast<float>(total / n)),
              [iz, rival, lab, n, k](Tape& t, const Node& nd) {
                Tensor& gz = t.nodes_[iz].grad;
                const float g = nd.grad.data[0] / static_cast<float>(n);
                for (int i = 0; i < n; ++i) {
                  float* gr = gz.data.data() + static_cast<std::ptrdiff_t>(i) * k;
                  gr[(*lab)[static_cast<std::size_t>(i)]] += g;
                  gr[(*rival)[static_cast<std::size_t>(i)]] -= g;
                }
              });
}

void Tape::backward(Var loss) {
  const Tensor& lv = value(loss);
  check(lv.size() == 1, "backward: loss must be scalar, got " + shape_str(lv.shape));
  for (Node& n : nodes_) {
    n.grad = Tensor(n.value.shape);
  }
  nodes_[static_cast<std::size_t>(loss.idx)].grad.data[0] = 1.0f;
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back) n.back(*this, n);
  }
}

}  // namespace ticket
