#include "sharppath/data.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "sharppath/errors.hpp"

namespace sharppath {

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  // A wrong path in a manifest is a configuration mistake, not an I/O fault.
  if (!is) throw ConfigError("dataset file not found: " + path);
  is.seekg(0, std::ios::end);
  const std::streamoff len = is.tellg();
  is.seekg(0);
  std::vector<unsigned char> buf(static_cast<size_t>(len));
  is.read(reinterpret_cast<char*>(buf.data()), len);
  if (!is) throw IoError("short read from " + path);
  return buf;
}

constexpr int kCifarRecord = 3073; // 1 label byte + 32*32*3 pixels

} // namespace

Dataset load_cifar10_bin(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ConfigError("no cifar10 files given");
  std::vector<unsigned char> bytes;
  for (const auto& p : paths) {
    auto part = read_all(p);
    if (part.size() % kCifarRecord != 0)
      throw FormatError(p + ": size is not a multiple of 3073 bytes");
    bytes.insert(bytes.end(), part.begin(), part.end());
  }
  const int n = static_cast<int>(bytes.size() / kCifarRecord);
  if (n == 0) throw FormatError("cifar10 input holds zero records");
  Dataset d;
  d.inputs = Tensor::zeros({n, 32, 32, 3});
  d.labels.resize(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + static_cast<size_t>(r) * kCifarRecord;
    if (rec[0] > 9)
      throw FormatError("cifar10 label byte out of range in record " +
                        std::to_string(r));
    d.labels[static_cast<size_t>(r)] = rec[0];
    // file stores channel planes; we store channels-last
    for (int ch = 0; ch < 3; ++ch)
      for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
          const unsigned char px = rec[1 + (ch * 32 + i) * 32 + j];
          d.inputs.data[(((static_cast<int64_t>(r) * 32 + i) * 32 + j) * 3) + ch] =
              px / 255.0;
        }
  }
  return d;
}

void write_cifar10_bin(const std::string& path, const Dataset& data) {
  if (data.inputs.shape != std::vector<int>{data.n(), 32, 32, 3})
    throw ConfigError("cifar10 writer expects (N,32,32,3) inputs");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  for (int r = 0; r < data.n(); ++r) {
    unsigned char rec[kCifarRecord];
    rec[0] = static_cast<unsigned char>(data.labels[static_cast<size_t>(r)]);
    for (int ch = 0; ch < 3; ++ch)
      for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
          const double v =
              data.inputs.data[(((static_cast<int64_t>(r) * 32 + i) * 32 + j) * 3) + ch];
          rec[1 + (ch * 32 + i) * 32 + j] =
              static_cast<unsigned char>(std::lround(v * 255.0));
        }
    os.write(reinterpret_cast<const char*>(rec), kCifarRecord);
  }
  if (!os) throw IoError("short write to " + path);
}

namespace {

uint32_t be32(const unsigned char* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

void put_be32(std::ostream& os, uint32_t v) {
  const unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(buf), 4);
}

} // namespace

Dataset load_idx(const std::string& image_path, const std::string& label_path) {
  const auto img = read_all(image_path);
  const auto lab = read_all(label_path);
  if (img.size() < 16 || be32(img.data()) != 0x00000803u)
    throw FormatError(image_path + ": bad IDX image magic");
  if (lab.size() < 8 || be32(lab.data()) != 0x00000801u)
    throw FormatError(label_path + ": bad IDX label magic");
  const uint32_t n = be32(img.data() + 4);
  const uint32_t rows = be32(img.data() + 8);
  const uint32_t cols = be32(img.data() + 12);
  if (n == 0) throw FormatError(image_path + ": empty IDX image file");
  if (be32(lab.data() + 4) != n)
    throw FormatError("IDX image/label counts disagree");
  if (img.size() != 16 + static_cast<size_t>(n) * rows * cols)
    throw FormatError(image_path + ": IDX image payload truncated");
  if (lab.size() != 8 + static_cast<size_t>(n))
    throw FormatError(label_path + ": IDX label payload truncated");
  Dataset d;
  d.inputs = Tensor::zeros({static_cast<int>(n), static_cast<int>(rows),
                            static_cast<int>(cols), 1});
  d.labels.resize(n);
  for (uint32_t r = 0; r < n; ++r) {
    d.labels[r] = lab[8 + r];
    const unsigned char* src = img.data() + 16 + static_cast<size_t>(r) * rows * cols;
    double* dst = d.inputs.data.data() + static_cast<int64_t>(r) * rows * cols;
    for (uint32_t j = 0; j < rows * cols; ++j) dst[j] = src[j] / 255.0;
  }
  return d;
}

void write_idx(const std::string& image_path, const std::string& label_path,
               const Dataset& data) {
  if (data.inputs.shape.size() != 4 || data.inputs.shape[3] != 1)
    throw ConfigError("idx writer expects (N,H,W,1) inputs");
  const int n = data.n(), h = data.inputs.shape[1], w = data.inputs.shape[2];
  std::ofstream imgs(image_path, std::ios::binary);
  std::ofstream labs(label_path, std::ios::binary);
  if (!imgs || !labs) throw IoError("cannot open IDX outputs");
  put_be32(imgs, 0x00000803u);
  put_be32(imgs, static_cast<uint32_t>(n));
  put_be32(imgs, static_cast<uint32_t>(h));
  put_be32(imgs, static_cast<uint32_t>(w));
  put_be32(labs, 0x00000801u);
  put_be32(labs, static_cast<uint32_t>(n));
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < h * w; ++j) {
      const double v = data.inputs.data[static_cast<int64_t>(r) * h * w + j];
      const unsigned char px = static_cast<unsigned char>(std::lround(v * 255.0));
      imgs.write(reinterpret_cast<const char*>(&px), 1);
    }
    const unsigned char lb = static_cast<unsigned char>(data.labels[static_cast<size_t>(r)]);
    labs.write(reinterpret_cast<const char*>(&lb), 1);
  }
  if (!imgs || !labs) throw IoError("short write to IDX outputs");
}

Dataset synth_gaussian(int classes, int n, int dim, double separation,
                       uint64_t seed) {
  if (classes < 1 || n < 1 || dim < 1)
    throw ConfigError("synth_gaussian needs positive classes, n, dim");
  SeededRng means_rng = SeededRng(seed).split("class_means");
  SeededRng noise_rng = SeededRng(seed).split("noise");
  SeededRng label_rng = SeededRng(seed).split("labels");
  std::vector<double> means(static_cast<size_t>(classes) * dim);
  for (double& m : means) m = separation * means_rng.normal();
  Dataset d;
  d.inputs = Tensor::zeros({n, dim});
  d.labels.resize(static_cast<size_t>(n));
  d.normalization = "synthetic";
  for (int r = 0; r < n; ++r) {
    const int y = static_cast<int>(label_rng.below(static_cast<uint64_t>(classes)));
    d.labels[static_cast<size_t>(r)] = y;
    const double* mu = means.data() + static_cast<size_t>(y) * dim;
    double* dst = d.inputs.data.data() + static_cast<int64_t>(r) * dim;
    for (int j = 0; j < dim; ++j) dst[j] = mu[j] + noise_rng.normal();
  }
  return d;
}

namespace {

// A smooth random field on h x w x c: a handful of low-frequency cosine
// modes with random orientation and phase.
struct SmoothField {
  struct Mode {
    double fx, fy, phase, amp;
    int channel;
  };
  std::vector<Mode> modes;

  static SmoothField random(int c, int n_modes, SeededRng& rng) {
    SmoothField f;
    for (int m = 0; m < n_modes; ++m) {
      Mode mode;
      mode.fx = 0.5 + 2.0 * rng.uniform();
      mode.fy = 0.5 + 2.0 * rng.uniform();
      mode.phase = 6.283185307179586 * rng.uniform();
      mode.amp = rng.normal();
      mode.channel = c > 1 ? static_cast<int>(rng.below(static_cast<uint64_t>(c))) : 0;
      f.modes.push_back(mode);
    }
    return f;
  }

  double at(int i, int j, int ch, int h, int w) const {
    double v = 0.0;
    for (const auto& m : modes) {
      if (m.channel != ch) continue;
      v += m.amp * std::cos(6.283185307179586 *
                                (m.fx * i / h + m.fy * j / w) +
                            m.phase);
    }
    return v;
  }
};

} // namespace

Dataset synth_images(int classes, int n, int h, int w, int c,
                     double separation, uint64_t seed) {
  if (classes < 1 || n < 1 || h < 1 || w < 1 || c < 1)
    throw ConfigError("synth_images needs positive extents");
  SeededRng template_rng = SeededRng(seed).split("class_templates");
  SeededRng field_rng = SeededRng(seed).split("image_fields");
  SeededRng noise_rng = SeededRng(seed).split("pixel_noise");
  SeededRng label_rng = SeededRng(seed).split("labels");
  std::vector<SmoothField> templates;
  for (int k = 0; k < classes; ++k)
    templates.push_back(SmoothField::random(c, 4 * c, template_rng));
  Dataset d;
  d.inputs = Tensor::zeros({n, h, w, c});
  d.labels.resize(static_cast<size_t>(n));
  d.normalization = "synthetic_images";
  for (int r = 0; r < n; ++r) {
    const int y = static_cast<int>(label_rng.below(static_cast<uint64_t>(classes)));
    d.labels[static_cast<size_t>(r)] = y;
    const SmoothField distortion = SmoothField::random(c, 2 * c, field_rng);
    double* img = d.inputs.data.data() + static_cast<int64_t>(r) * h * w * c;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int ch = 0; ch < c; ++ch)
          img[(static_cast<int64_t>(i) * w + j) * c + ch] =
              0.5 + separation * templates[static_cast<size_t>(y)].at(i, j, ch, h, w) +
              0.08 * distortion.at(i, j, ch, h, w) + 0.04 * noise_rng.normal();
  }
  return d;
}

Dataset reshape_images(Dataset data, int h, int w, int c) {
  const int64_t features = data.inputs.row_width();
  if (static_cast<int64_t>(h) * w * c != features)
    throw ConfigError("reshape_images: extents do not match feature count");
  data.inputs.shape = {data.n(), h, w, c};
  return data;
}

Dataset subsample_first_n(const Dataset& data, int n) {
  if (n <= 0) throw FormatError("subsample size must be positive");
  if (n >= data.n()) return data;
  return take_range(data, 0, n);
}

Dataset take_range(const Dataset& data, int begin, int end) {
  if (begin < 0 || end > data.n() || begin >= end)
    throw ConfigError("bad dataset range");
  const int64_t width = data.inputs.row_width();
  Dataset out;
  out.split = data.split;
  out.normalization = data.normalization;
  std::vector<int> shape = data.inputs.shape;
  shape[0] = end - begin;
  out.inputs = Tensor(shape,
                      {data.inputs.data.begin() + begin * width,
                       data.inputs.data.begin() + end * width});
  out.labels.assign(data.labels.begin() + begin, data.labels.begin() + end);
  return out;
}

Dataset subsample_random(const Dataset& data, int n, SeededRng& rng) {
  if (n <= 0) throw ConfigError("subsample size must be positive");
  n = std::min(n, data.n());
  std::vector<int> perm = rng.permutation(data.n());
  perm.resize(static_cast<size_t>(n));
  Batch b = gather_batch(data, perm);
  Dataset out;
  out.split = data.split;
  out.normalization = data.normalization;
  out.inputs = std::move(b.inputs);
  out.labels = std::move(b.labels);
  return out;
}

Batch gather_batch(const Dataset& data, std::span<const int> idx) {
  const int64_t width = data.inputs.row_width();
  std::vector<int> shape = data.inputs.shape;
  shape[0] = static_cast<int>(idx.size());
  Batch b;
  b.inputs = Tensor::zeros(shape);
  b.labels.resize(idx.size());
  for (size_t r = 0; r < idx.size(); ++r) {
    const int src = idx[r];
    std::copy(data.inputs.data.begin() + src * width,
              data.inputs.data.begin() + (src + 1) * width,
              b.inputs.data.begin() + static_cast<int64_t>(r) * width);
    b.labels[r] = data.labels[static_cast<size_t>(src)];
  }
  return b;
}

Batch gather_range(const Dataset& data, int begin, int end) {
  const int64_t width = data.inputs.row_width();
  std::vector<int> shape = data.inputs.shape;
  shape[0] = end - begin;
  Batch b;
  b.inputs = Tensor(shape,
                    {data.inputs.data.begin() + begin * width,
                     data.inputs.data.begin() + end * width});
  b.labels.assign(data.labels.begin() + begin, data.labels.begin() + end);
  return b;
}

Tensor hflip_images(const Tensor& images) {
  if (images.shape.size() != 4) throw ConfigError("hflip expects NHWC");
  const int n = images.shape[0], h = images.shape[1], w = images.shape[2],
            c = images.shape[3];
  Tensor out = Tensor::zeros(images.shape);
  for (int img = 0; img < n; ++img)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int64_t src = ((static_cast<int64_t>(img) * h + i) * w + j) * c;
        const int64_t dst = ((static_cast<int64_t>(img) * h + i) * w + (w - 1 - j)) * c;
        for (int ch = 0; ch < c; ++ch) out.data[dst + ch] = images.data[src + ch];
      }
  return out;
}

Batch augment(const Batch& batch, const AugmentConfig& cfg, SeededRng& rng) {
  if (batch.inputs.shape.size() != 4)
    throw ConfigError("augment expects NHWC batches");
  const int n = batch.inputs.shape[0], h = batch.inputs.shape[1],
            w = batch.inputs.shape[2], c = batch.inputs.shape[3];
  Batch out = batch;
  if (cfg.pad > 0 && cfg.random_crop) {
    const int p = cfg.pad;
    Tensor cropped = Tensor::zeros(batch.inputs.shape);
    for (int img = 0; img < n; ++img) {
      // crop offset into the zero-padded image
      const int oi = static_cast<int>(rng.below(static_cast<uint64_t>(2 * p + 1)));
      const int oj = static_cast<int>(rng.below(static_cast<uint64_t>(2 * p + 1)));
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const int si = i + oi - p;
          const int sj = j + oj - p;
          double* dst = cropped.data.data() +
                        ((static_cast<int64_t>(img) * h + i) * w + j) * c;
          if (si < 0 || si >= h || sj < 0 || sj >= w) continue; // stays zero
          const double* src = out.inputs.data.data() +
                              ((static_cast<int64_t>(img) * h + si) * w + sj) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] = src[ch];
        }
    }
    out.inputs = std::move(cropped);
  }
  if (cfg.hflip) {
    Tensor flipped = hflip_images(out.inputs);
    for (int img = 0; img < n; ++img) {
      if (rng.uniform() >= 0.5) continue;
      const int64_t width = static_cast<int64_t>(h) * w * c;
      std::copy(flipped.data.begin() + img * width,
                flipped.data.begin() + (img + 1) * width,
                out.inputs.data.begin() + img * width);
    }
  }
  return out;
}

std::vector<std::vector<int>> epoch_batches(int n, int s, uint64_t seed,
                                            int epoch, bool shuffle) {
  if (n < 1 || s < 1) throw ConfigError("epoch_batches needs n >= 1, s >= 1");
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  if (shuffle) {
    SeededRng rng = SeededRng(seed).split("shuffle", static_cast<uint64_t>(epoch));
    order = rng.permutation(n);
  }
  std::vector<std::vector<int>> batches;
  for (int begin = 0; begin < n; begin += s) {
    const int end = std::min(n, begin + s);
    batches.emplace_back(order.begin() + begin, order.begin() + end);
  }
  return batches;
}

} // namespace sharppath
