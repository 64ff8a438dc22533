#pragma once

// Dataset loading and construction: IDX-format image/label files (the
// standard MNIST container), binary class filtering with +/-1 labels,
// seeded subsetting, and a separable synthetic generator for optimizer
// studies. Pixels are scaled to [0, 1] doubles at load time.

#include "marginlab/ndops.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace marginlab {

/// Feature matrix is n x d, one example per row. Labels are class ids.
struct Dataset {
  Matrix X;
  IntVector y;

  Index size() const { return X.rows(); }
  Index dim() const { return X.cols(); }
};

/// Two-class view with labels in {-1, +1}.
struct BinaryDataset {
  Matrix X;
  Vector y;

  Index size() const { return X.rows(); }
  Index dim() const { return X.cols(); }
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw std::runtime_error("truncated IDX header: " + path);
  return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
         (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

inline std::vector<unsigned char> read_idx_u8(const std::string& path,
                                              std::uint32_t expected_magic,
                                              std::vector<std::uint32_t>& dims) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::uint32_t magic = read_be_u32(in, path);
  if (magic != expected_magic) {
    throw std::runtime_error("bad IDX magic in " + path + ": got " +
                             std::to_string(magic) + ", expected " +
                             std::to_string(expected_magic));
  }
  const std::uint32_t ndims = magic & 0xff;
  dims.resize(ndims);
  std::size_t total = 1;
  for (std::uint32_t i = 0; i < ndims; ++i) {
    dims[i] = read_be_u32(in, path);
    total *= dims[i];
  }
  std::vector<unsigned char> payload(total);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(total));
  if (!in || in.gcount() != static_cast<std::streamsize>(total)) {
    throw std::runtime_error("truncated IDX payload: " + path);
  }
  return payload;
}

}  // namespace detail

/// Loads an IDX image/label pair. Images become rows of length rows*cols
/// scaled by 1/255; labels must match the image count.
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  std::vector<std::uint32_t> image_dims, label_dims;
  const auto pixels = detail::read_idx_u8(images_path, 0x00000803, image_dims);
  const auto labels = detail::read_idx_u8(labels_path, 0x00000801, label_dims);
  const Index n = static_cast<Index>(image_dims[0]);
  const Index d = static_cast<Index>(image_dims[1]) *
                  static_cast<Index>(image_dims[2]);
  if (static_cast<Index>(label_dims[0]) != n) {
    throw std::runtime_error("IDX image/label count mismatch: " + images_path);
  }
  Dataset data;
  data.X.resize(n, d);
  data.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      data.X(i, j) = pixels[static_cast<std::size_t>(i * d + j)] / 255.0;
    }
    data.y[i] = labels[static_cast<std::size_t>(i)];
  }
  return data;
}

/// Keeps only two classes; pos_class maps to +1, neg_class to -1.
inline BinaryDataset filter_binary(const Dataset& data, int pos_class,
                                   int neg_class) {
  if (pos_class == neg_class) {
    throw std::invalid_argument("filter_binary: classes must differ");
  }
  std::vector<Index> keep;
  for (Index i = 0; i < data.size(); ++i) {
    if (data.y[i] == pos_class || data.y[i] == neg_class) keep.push_back(i);
  }
  BinaryDataset out;
  out.X.resize(static_cast<Index>(keep.size()), data.dim());
  out.y.resize(static_cast<Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.X.row(static_cast<Index>(r)) = data.X.row(keep[r]);
    out.y[static_cast<Index>(r)] = data.y[keep[r]] == pos_class ? 1.0 : -1.0;
  }
  return out;
}

/// k distinct indices from [0, n), ascending. Deterministic in the stream.
inline std::vector<Index> sample_indices(RngStream& rng, Index n, Index k) {
  if (k < 0 || k > n) throw std::invalid_argument("sample_indices: need 0 <= k <= n");
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  // Partial Fisher-Yates: the first k slots become the sample.
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(rng.uniform_index(
                           static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)],
              pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline Dataset take(const Dataset& data, const std::vector<Index>& idx) {
  Dataset out;
  out.X.resize(static_cast<Index>(idx.size()), data.dim());
  out.y.resize(static_cast<Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.X.row(static_cast<Index>(r)) = data.X.row(idx[r]);
    out.y[static_cast<Index>(r)] = data.y[idx[r]];
  }
  return out;
}

inline BinaryDataset take(const BinaryDataset& data,
                          const std::vector<Index>& idx) {
  BinaryDataset out;
  out.X.resize(static_cast<Index>(idx.size()), data.dim());
  out.y.resize(static_cast<Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.X.row(static_cast<Index>(r)) = data.X.row(idx[r]);
    out.y[static_cast<Index>(r)] = data.y[idx[r]];
  }
  return out;
}

/// Two Gaussian blobs at +/- offset along the first axis, clipped so every
/// point satisfies y * x[0] >= gap. The result is linearly separable with
/// margin at least gap (witnessed by the first coordinate axis).
inline BinaryDataset make_separable_blobs(RngStream& rng, Index n, Index d,
                                          double offset = 3.0,
                                          double gap = 0.5) {
  if (n < 2 || d < 1) throw std::invalid_argument("make_separable_blobs: n >= 2, d >= 1");
  if (!(gap > 0.0) || !(offset > 0.0)) {
    throw std::invalid_argument("make_separable_blobs: offset, gap must be > 0");
  }
  BinaryDataset out;
  out.X.resize(n, d);
  out.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double label = (i % 2 == 0) ? 1.0 : -1.0;
    Vector x = rng.normal_vector(d);
    x[0] += label * offset;
    while (label * x[0] < gap) {  // reject into the separable half-space
      x[0] = rng.normal() + label * offset;
    }
    out.X.row(i) = x.transpose();
    out.y[i] = label;
  }
  return out;
}

}  // namespace marginlab
