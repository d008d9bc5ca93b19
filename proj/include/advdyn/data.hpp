#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "advdyn/error.hpp"
#include "advdyn/geometry.hpp"
#include "advdyn/rng.hpp"

namespace advdyn {

/// Images with pixel values in [0, 1] and digit labels 0..9.
struct RawDataset {
  std::vector<Vector> images;
  std::vector<int> digits;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
};

enum class DataSource { Synthetic, MnistIdx };

inline std::string to_string(DataSource s) { return s == DataSource::Synthetic ? "synthetic" : "mnist-idx"; }

struct LabeledDataset {
  std::vector<Vector> inputs;
  std::vector<double> labels;  // 0 or 1
  Eigen::Index d = 0;
  double scale = 0.0;  // mean l2 norm of the inputs
  DataSource source = DataSource::Synthetic;

  std::size_t size() const noexcept { return inputs.size(); }
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

/// Sequential reader over a plain or gzip file, tracking the byte offset.
class ByteReader {
 public:
  explicit ByteReader(const std::string& path) : path_(path), file_(gzopen(path.c_str(), "rb")) {
    if (file_ == nullptr) throw Error(ErrorKind::Io, "cannot open " + path);
  }
  ~ByteReader() {
    if (file_ != nullptr) gzclose(file_);
  }
  ByteReader(const ByteReader&) = delete;
  ByteReader& operator=(const ByteReader&) = delete;

  std::uint64_t offset() const noexcept { return offset_; }

  std::uint32_t u32(const char* field) {
    std::array<unsigned char, 4> b{};
    read(b.data(), 4, field);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }

  void read(unsigned char* dst, std::size_t n, const char* field) {
    const std::uint64_t at = offset_;
    std::size_t got = 0;
    while (got < n) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - got, 1u << 30));
      const int r = gzread(file_, dst + got, chunk);
      if (r < 0) throw Error(ErrorKind::Io, path_ + ": read error");
      if (r == 0) break;
      got += static_cast<std::size_t>(r);
    }
    offset_ += got;
    if (got < n)
      throw Error(ErrorKind::Format, path_ + ": truncated " + field + " at byte offset " + std::to_string(at) +
                                         " (needed " + std::to_string(n) + " bytes, got " + std::to_string(got) + ")");
  }

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  gzFile file_;
  std::uint64_t offset_ = 0;
};

inline void put_u32(std::ofstream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  os.write(b, 4);
}

}  // namespace detail

/// Reads an IDX image/label pair (big-endian header, row-major uint8
/// payload). Files ending in .gz are decompressed transparently.
inline RawDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  RawDataset out;
  detail::ByteReader img(images_path);
  const std::uint32_t magic = img.u32("magic");
  if (magic != kIdxImagesMagic)
    throw Error(ErrorKind::Format, images_path + ": bad magic at byte offset 0 (expected 0x00000803, got " +
                                       std::to_string(magic) + ")");
  const std::uint32_t n = img.u32("image count");
  out.rows = img.u32("row count");
  out.cols = img.u32("column count");
  if (out.rows == 0 || out.cols == 0)
    throw Error(ErrorKind::Format, images_path + ": zero image dimension at byte offset 8");

  detail::ByteReader lab(labels_path);
  const std::uint32_t lmagic = lab.u32("magic");
  if (lmagic != kIdxLabelsMagic)
    throw Error(ErrorKind::Format, labels_path + ": bad magic at byte offset 0 (expected 0x00000801, got " +
                                       std::to_string(lmagic) + ")");
  const std::uint32_t nl = lab.u32("label count");
  if (nl != n)
    throw Error(ErrorKind::Format, labels_path + ": label count at byte offset 4 is " + std::to_string(nl) +
                                       " but the image file holds " + std::to_string(n));

  const std::size_t d = std::size_t{out.rows} * out.cols;
  std::vector<unsigned char> buf(d);
  out.images.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    img.read(buf.data(), d, "image payload");
    Vector x(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) x[static_cast<Eigen::Index>(j)] = buf[j] / 255.0;
    out.images.push_back(std::move(x));
  }
  std::vector<unsigned char> labels(n);
  lab.read(labels.data(), n, "label payload");
  out.digits.assign(labels.begin(), labels.end());
  return out;
}

/// Writes the inverse of load_mnist_idx (pixels rounded back to uint8).
inline void write_mnist_idx(const RawDataset& data, const std::string& images_path, const std::string& labels_path) {
  detail::require(data.images.size() == data.digits.size(), ErrorKind::InvalidArgument,
                  "image and label counts differ");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw Error(ErrorKind::Io, "cannot write IDX output");
  const auto n = static_cast<std::uint32_t>(data.images.size());
  detail::put_u32(img, kIdxImagesMagic);
  detail::put_u32(img, n);
  detail::put_u32(img, data.rows);
  detail::put_u32(img, data.cols);
  for (const Vector& x : data.images) {
    detail::require(x.size() == static_cast<Eigen::Index>(data.rows) * data.cols, ErrorKind::DimensionMismatch,
                    "image size does not match rows x cols");
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double p = std::round(std::clamp(x[j], 0.0, 1.0) * 255.0);
      img.put(static_cast<char>(static_cast<unsigned char>(p)));
    }
  }
  detail::put_u32(lab, kIdxLabelsMagic);
  detail::put_u32(lab, n);
  for (int dgt : data.digits) lab.put(static_cast<char>(static_cast<unsigned char>(dgt)));
  if (!img || !lab) throw Error(ErrorKind::Io, "IDX write failed");
}

inline double mean_norm(const std::vector<Vector>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (const Vector& x : xs) s += x.norm();
  return s / static_cast<double>(xs.size());
}

/// y = 1 for odd digits, 0 for even.
inline LabeledDataset binarize_odd_even(const RawDataset& raw) {
  LabeledDataset out;
  out.source = DataSource::MnistIdx;
  out.d = static_cast<Eigen::Index>(raw.rows) * raw.cols;
  out.inputs = raw.images;
  out.labels.reserve(raw.digits.size());
  for (std::size_t i = 0; i < raw.digits.size(); ++i) {
    const int dgt = raw.digits[i];
    if (dgt < 0 || dgt > 9)
      throw Error(ErrorKind::Format, "digit label " + std::to_string(dgt) + " out of range at index " +
                                         std::to_string(i));
    out.labels.push_back(dgt % 2 == 1 ? 1.0 : 0.0);
  }
  out.scale = mean_norm(out.inputs);
  return out;
}

/// Multiplies every input by scale / mean |x_i|.
inline LabeledDataset rescale_to(const LabeledDataset& data, double scale) {
  detail::require(scale > 0.0 && std::isfinite(scale), ErrorKind::InvalidArgument, "scale must be positive");
  const double m = mean_norm(data.inputs);
  if (!(m > 0.0)) throw Error(ErrorKind::InvalidArgument, "cannot rescale: every input has zero norm");
  LabeledDataset out = data;
  const double f = scale / m;
  for (Vector& x : out.inputs) x *= f;
  out.scale = scale;
  return out;
}

/// Ball-uniform point of norm below `scale`.
inline Vector synthetic_input(Eigen::Index d, double scale, std::uint64_t seed) {
  detail::require(scale > 0.0, ErrorKind::InvalidArgument, "scale must be positive");
  Rng rng(seed);
  return sample_uniform_ball(rng, d, scale);
}

/// eps = r * mean |x_i|.
inline double epsilon_from_ratio(const LabeledDataset& data, double r) {
  detail::require(r > 0.0, ErrorKind::InvalidArgument, "ratio must be positive");
  const double m = mean_norm(data.inputs);
  if (!(m > 0.0)) throw Error(ErrorKind::InvalidArgument, "zero mean input norm");
  return r * m;
}

/// eps = r * scale for a single synthetic input drawn at that scale.
inline double epsilon_from_ratio(double scale, double r) {
  detail::require(r > 0.0, ErrorKind::InvalidArgument, "ratio must be positive");
  detail::require(scale > 0.0, ErrorKind::InvalidArgument, "zero input scale");
  return r * scale;
}

/// Random index in [0, n) from one engine draw (rejection-free Lemire
/// reduction is unnecessary at dataset sizes; modulo bias is below 2^-40).
inline std::size_t random_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng.next_u64() % n); }

/// `per_class` random examples of each label, interleaved odd, even, odd, ...
inline LabeledDataset balanced_subset(const LabeledDataset& data, std::size_t per_class, std::uint64_t seed) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[random_index(rng, i)]);
  std::vector<std::size_t> odd, even;
  for (std::size_t i : order) {
    auto& bucket = data.labels[i] == 1.0 ? odd : even;
    if (bucket.size() < per_class) bucket.push_back(i);
  }
  detail::require(odd.size() == per_class && even.size() == per_class, ErrorKind::InvalidArgument,
                  "not enough examples of each class");
  LabeledDataset out;
  out.d = data.d;
  out.source = data.source;
  for (std::size_t k = 0; k < per_class; ++k)
    for (std::size_t idx : {odd[k], even[k]}) {
      out.inputs.push_back(data.inputs[idx]);
      out.labels.push_back(data.labels[idx]);
    }
  out.scale = mean_norm(out.inputs);
  return out;
}

}  // namespace advdyn
