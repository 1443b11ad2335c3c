#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ulab/errors.hpp"
#include "ulab/rng.hpp"
#include "ulab/tensor.hpp"
#include "ulab/transport.hpp"

namespace ulab {

/// Image classification dataset loaded from IDX files. Pixels are scaled
/// into [0, 1]; immutable after load.
struct Dataset {
  std::size_t n = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pixels;  // n x rows x cols
  std::vector<int> labels;
  int class_count = 0;

  std::size_t dim() const { return rows * cols; }

  /// Flattened [k x rows*cols] matrix for the given sample indices.
  Tensor batch_matrix(std::span<const std::size_t> indices) const {
    const std::size_t d = dim();
    std::vector<double> out(indices.size() * d);
    for (std::size_t i = 0; i < indices.size(); ++i)
      std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(indices[i] * d), d,
                  out.begin() + static_cast<std::ptrdiff_t>(i * d));
    return Tensor::constant({indices.size(), d}, std::move(out));
  }

  std::vector<int> batch_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels[indices[i]];
    return out;
  }

  Tensor all_matrix() const {
    return Tensor::constant({n, dim()}, pixels);
  }
};

// ---------------------------------------------------------------------------
// IDX binary format (big-endian)
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::uint32_t kIdxImagesMagic = 2051;
constexpr std::uint32_t kIdxLabelsMagic = 2049;

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open IDX file: " + path);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

inline std::uint32_t be_u32(const std::string& bytes, std::size_t pos,
                            const std::string& path) {
  if (pos + 4 > bytes.size()) throw format_error(path + ": truncated IDX header");
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void append_be_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

}  // namespace detail

/// Loads an MNIST-style image/label pair. Pixels are divided by 255.
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  const std::string img = detail::read_file_bytes(images_path);
  const std::string lab = detail::read_file_bytes(labels_path);

  if (detail::be_u32(img, 0, images_path) != detail::kIdxImagesMagic)
    throw format_error(images_path + ": bad IDX image magic");
  if (detail::be_u32(lab, 0, labels_path) != detail::kIdxLabelsMagic)
    throw format_error(labels_path + ": bad IDX label magic");

  Dataset ds;
  ds.n = detail::be_u32(img, 4, images_path);
  ds.rows = detail::be_u32(img, 8, images_path);
  ds.cols = detail::be_u32(img, 12, images_path);
  const std::size_t label_count = detail::be_u32(lab, 4, labels_path);
  if (label_count != ds.n)
    throw format_error("IDX count mismatch: " + std::to_string(ds.n) +
                       " images vs " + std::to_string(label_count) + " labels");
  const std::size_t pixel_bytes = ds.n * ds.rows * ds.cols;
  if (img.size() != 16 + pixel_bytes)
    throw format_error(images_path + ": truncated pixel payload");
  if (lab.size() != 8 + ds.n)
    throw format_error(labels_path + ": truncated label payload");

  ds.pixels.resize(pixel_bytes);
  for (std::size_t i = 0; i < pixel_bytes; ++i)
    ds.pixels[i] = static_cast<unsigned char>(img[16 + i]) / 255.0;
  ds.labels.resize(ds.n);
  int max_label = -1;
  for (std::size_t i = 0; i < ds.n; ++i) {
    ds.labels[i] = static_cast<unsigned char>(lab[8 + i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  return ds;
}

/// Re-serializes a dataset into the IDX pair (inverse of load_idx).
inline void save_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
  std::string img;
  detail::append_be_u32(img, detail::kIdxImagesMagic);
  detail::append_be_u32(img, static_cast<std::uint32_t>(ds.n));
  detail::append_be_u32(img, static_cast<std::uint32_t>(ds.rows));
  detail::append_be_u32(img, static_cast<std::uint32_t>(ds.cols));
  for (double p : ds.pixels)
    img.push_back(static_cast<char>(
        static_cast<unsigned char>(std::lround(p * 255.0))));
  std::string lab;
  detail::append_be_u32(lab, detail::kIdxLabelsMagic);
  detail::append_be_u32(lab, static_cast<std::uint32_t>(ds.n));
  for (int l : ds.labels) lab.push_back(static_cast<char>(l));

  std::ofstream fi(images_path, std::ios::binary);
  if (!fi) throw format_error("cannot write IDX images: " + images_path);
  fi.write(img.data(), static_cast<std::streamsize>(img.size()));
  std::ofstream fl(labels_path, std::ios::binary);
  if (!fl) throw format_error("cannot write IDX labels: " + labels_path);
  fl.write(lab.data(), static_cast<std::streamsize>(lab.size()));
}

// ---------------------------------------------------------------------------
// Synthetic sample-pair generators
// ---------------------------------------------------------------------------

/// First set standard normal; second set N(delta * 1, ratio * I).
inline std::pair<SampleSet, SampleSet> synth_gaussian_pair(std::size_t n,
                                                           std::size_t d,
                                                           double delta,
                                                           double ratio,
                                                           std::uint64_t seed) {
  if (ratio <= 0.0) throw contract_error("synth_gaussian_pair: ratio must be positive");
  Rng rng(seed);
  std::vector<double> a(n * d), b(n * d);
  for (double& v : a) v = rng.normal();
  const double scale = std::sqrt(ratio);
  for (double& v : b) v = delta + scale * rng.normal();
  return {SampleSet::make(n, d, std::move(a), 0),
          SampleSet::make(n, d, std::move(b), 1)};
}

/// The two uniform boxes of the unbounded-distance construction:
/// U([C'/2, C']^d) versus U([0, C'/4]^d).
inline std::pair<SampleSet, SampleSet> synth_appendix_uniform_pair(
    double c_prime, std::size_t d, std::size_t n, std::uint64_t seed) {
  if (c_prime <= 0.0)
    throw contract_error("synth_appendix_uniform_pair: C' must be positive");
  Rng rng(seed);
  std::vector<double> a(n * d), b(n * d);
  for (double& v : a) v = rng.uniform(c_prime / 2.0, c_prime);
  for (double& v : b) v = rng.uniform(0.0, c_prime / 4.0);
  return {SampleSet::make(n, d, std::move(a), 1),
          SampleSet::make(n, d, std::move(b), 0)};
}

// ---------------------------------------------------------------------------
// Mini-batching
// ---------------------------------------------------------------------------

struct BatchPlan {
  std::uint64_t seed = 0;
  std::size_t batch_size = 128;
  bool drop_last = false;
};

/// Seeded per-epoch permutation split into batches. Every sample appears
/// exactly once; a short final batch is kept unless drop_last.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n,
                                                     const BatchPlan& plan,
                                                     int epoch) {
  if (plan.batch_size == 0) throw contract_error("batches: batch_size must be positive");
  if (plan.batch_size > n)
    throw contract_error("batches: batch_size exceeds dataset size");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(plan.seed ^ static_cast<std::uint64_t>(epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += plan.batch_size) {
    const std::size_t end = std::min(n, start + plan.batch_size);
    if (plan.drop_last && end - start < plan.batch_size) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace ulab
