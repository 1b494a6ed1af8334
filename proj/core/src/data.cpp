#include "ticket/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ticket/rng.hpp"

namespace ticket {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::ifstream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw LoadError("truncated file while reading " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

Shape Dataset::sample_shape() const {
  check(images.rank() == 4, "dataset images must be (N,C,H,W)");
  return {images.dim(1), images.dim(2), images.dim(3)};
}

Dataset Dataset::take(int begin, int count, const std::string& new_split) const {
  check(begin >= 0 && begin + count <= size(), "take: range out of bounds");
  const auto ss = sample_shape();
  const std::int64_t stride = numel(ss);
  Dataset out;
  out.images = Tensor({count, ss[0], ss[1], ss[2]});
  std::copy_n(images.data.begin() + begin * stride, count * stride, out.images.data.begin());
  out.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
  out.classes = classes;
  out.split = new_split;
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw LoadError("cannot open " + images_path.string());
  const std::uint32_t img_magic = read_be32(img, "image magic");
  if (img_magic != kIdxImagesMagic) {
    throw LoadError("bad image magic in " + images_path.string() + ": got " + hex32(img_magic) +
                    ", want " + hex32(kIdxImagesMagic));
  }
  const std::uint32_t n = read_be32(img, "image count");
  const std::uint32_t h = read_be32(img, "image rows");
  const std::uint32_t w = read_be32(img, "image cols");

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw LoadError("cannot open " + labels_path.string());
  const std::uint32_t lab_magic = read_be32(lab, "label magic");
  if (lab_magic != kIdxLabelsMagic) {
    throw LoadError("bad label magic in " + labels_path.string() + ": got " + hex32(lab_magic) +
                    ", want " + hex32(kIdxLabelsMagic));
  }
  const std::uint32_t ln = read_be32(lab, "label count");
  if (ln != n) {
    throw LoadError("count mismatch: " + std::to_string(n) + " images vs " + std::to_string(ln) +
                    " labels");
  }

  Dataset d;
  d.images = Tensor({static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w)});
  const std::size_t pixels = static_cast<std::size_t>(n) * h * w;
  std::vector<unsigned char> raw(pixels);
  img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels));
  if (!img || static_cast<std::size_t>(img.gcount()) != pixels) {
    throw LoadError("truncated image data in " + images_path.string());
  }
  for (std::size_t i = 0; i < pixels; ++i) d.images.data[i] = raw[i] / 255.0f;

  std::vector<unsigned char> lraw(n);
  lab.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(n));
  if (!lab || static_cast<std::size_t>(lab.gcount()) != n) {
    throw LoadError("truncated label data in " + labels_path.string());
  }
  d.labels.assign(lraw.begin(), lraw.end());
  d.classes = 10;
  return d;
}

Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_files) {
  check(!batch_files.empty(), "load_cifar10: no batch files given");
  constexpr int kRecord = 3073;  // 1 label byte + 3*32*32 pixels
  std::vector<unsigned char> raw;
  for (const auto& p : batch_files) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw LoadError("cannot open " + p.string());
    std::vector<unsigned char> chunk((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (chunk.empty() || chunk.size() % kRecord != 0) {
      throw LoadError("file size of " + p.string() + " is not a multiple of " +
                      std::to_string(kRecord));
    }
    raw.insert(raw.end(), chunk.begin(), chunk.end());
  }
  const int n = static_cast<int>(raw.size() / kRecord);
  Dataset d;
  d.images = Tensor({n, 3, 32, 32});
  d.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const unsigned char* rec = raw.data() + static_cast<std::ptrdiff_t>(i) * kRecord;
    const int label = rec[0];
    if (label > 9) throw LoadError("label byte " + std::to_string(label) + " out of range");
    d.labels[static_cast<std::size_t>(i)] = label;
    float* out = d.images.data.data() + static_cast<std::ptrdiff_t>(i) * 3072;
    for (int j = 0; j < 3072; ++j) out[j] = rec[1 + j] / 255.0f;
  }
  d.classes = 10;
  return d;
}

Dataset synth_blobs(int k, int n_per_class, int dim, double margin, std::uint64_t seed) {
  check(k >= 2 && n_per_class >= 1 && dim >= 1, "synth_blobs: bad sizes");
  check(margin > 0.0, "synth_blobs: margin must be positive");
  constexpr double kSigma = 0.05;

  Rng rng(derive_seed(seed, "blob-means"));
  std::vector<std::vector<double>> means;
  int attempts = 0;
  while (static_cast<int>(means.size()) < k) {
    check(++attempts < 100000, "synth_blobs: cannot place means with this margin");
    std::vector<double> m(static_cast<std::size_t>(dim));
    for (double& v : m) v = rng.uniform(0.15, 0.85);
    bool ok = true;
    for (const auto& other : means) {
      double d2 = 0.0;
      for (int i = 0; i < dim; ++i) {
        const double diff = m[static_cast<std::size_t>(i)] - other[static_cast<std::size_t>(i)];
        d2 += diff * diff;
      }
      if (std::sqrt(d2) < margin) { ok = false; break; }
    }
    if (ok) means.push_back(std::move(m));
  }

  const int n = k * n_per_class;
  Dataset d;
  d.images = Tensor({n, 1, 1, dim});
  d.labels.resize(static_cast<std::size_t>(n));
  d.classes = k;
  d.split = "train";
  Rng samp(derive_seed(seed, "blob-samples"));
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      const int row = c * n_per_class + i;
      d.labels[static_cast<std::size_t>(row)] = c;
      float* out = d.images.data.data() + static_cast<std::ptrdiff_t>(row) * dim;
      for (int j = 0; j < dim; ++j) {
        const double v = means[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] +
                         kSigma * samp.gaussian();
        out[j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return d;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& d, double val_fraction,
                                            std::uint64_t seed) {
  check(val_fraction > 0.0 && val_fraction < 1.0, "split_train_val: fraction must be in (0,1)");
  const int n = d.size();
  const int n_val = std::max(1, static_cast<int>(n * val_fraction));
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, "train-val-split"));
  for (int i = n - 1; i > 0; --i) {
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
  }
  std::vector<int> val_idx(perm.begin(), perm.begin() + n_val);
  std::vector<int> train_idx(perm.begin() + n_val, perm.end());

  auto build = [&](const std::vector<int>& idx, const std::string& split) {
    Dataset out;
    out.images = gather_images(d, idx);
    out.labels = gather_labels(d, idx);
    out.classes = d.classes;
    out.split = split;
    return out;
  };
  return {build(train_idx, "train"), build(val_idx, "val")};
}

std::vector<std::vector<int>> batches(const Dataset& d, int batch_size,
                                      std::uint64_t shuffle_seed, int epoch) {
  check(batch_size >= 1, "batches: batch_size must be >= 1");
  const int n = d.size();
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(shuffle_seed, "epoch-shuffle", static_cast<std::uint64_t>(epoch)));
  for (int i = n - 1; i > 0; --i) {
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
  }
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(start + batch_size, n);
    out.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return out;
}

Tensor gather_images(const Dataset& d, const std::vector<int>& idx) {
  const auto ss = d.sample_shape();
  const std::int64_t stride = numel(ss);
  Tensor out({static_cast<int>(idx.size()), ss[0], ss[1], ss[2]});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < d.size(), "gather_images: index out of range");
    std::copy_n(d.images.data.begin() + idx[i] * stride, stride,
                out.data.begin() + static_cast<std::int64_t>(i) * stride);
  }
  return out;
}

std::vector<int> gather_labels(const Dataset& d, const std::vector<int>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < d.size(), "gather_labels: index out of range");
    out[i] = d.labels[static_cast<std::size_t>(idx[i])];
  }
  return out;
}

Tensor augment_batch(const Tensor& images, const Augment& aug, std::uint64_t seed) {
  if (!aug.enabled()) return images;
  check(images.rank() == 4, "augment_batch: images must be (N,C,H,W)");
  const int n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  Tensor out = images;
  Rng rng(derive_seed(seed, "augment"));
  const int p = aug.pad_crop;
  for (int img = 0; img < n; ++img) {
    const int dy = p > 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * p + 1))) - p : 0;
    const int dx = p > 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * p + 1))) - p : 0;
    const bool flip = aug.hflip && rng.uniform() < 0.5;
    for (int ch = 0; ch < c; ++ch) {
      const float* src = images.data.data() + (static_cast<std::ptrdiff_t>(img) * c + ch) * h * w;
      float* dst = out.data.data() + (static_cast<std::ptrdiff_t>(img) * c + ch) * h * w;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int sy = y + dy;
          int sx = x + dx;
          if (flip) sx = w - 1 - sx;
          dst[y * w + x] = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? src[sy * w + sx] : 0.0f;
        }
      }
    }
  }
  return out;
}

}  // namespace ticket
