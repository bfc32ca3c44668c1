#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmsa/linalg.hpp"

namespace dmsa {

/// Samples as rows of `inputs`; either class `labels` or regression
/// `targets` (one row per sample) accompany them.
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  Matrix targets;
  std::string split = "train";

  std::size_t size() const noexcept { return inputs.rows(); }
  bool has_labels() const noexcept { return !labels.empty(); }
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset head(std::size_t n) const;
};

/// IDX parse failure; `offset` is the byte position where parsing stopped.
class IdxError : public std::runtime_error {
 public:
  IdxError(const std::string& what, std::size_t offset);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;  // 2049

/// Reads a raw or gzip-compressed file into memory.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

/// MNIST image/label IDX pair. Pixels are scaled to [0,1] and flattened
/// row-wise. `limit` keeps only the first N samples.
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, std::string split = "train",
                       std::optional<std::size_t> limit = std::nullopt);

/// Writes an image/label IDX pair (gzip-compressed when `gzip` is set).
void write_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                     std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> labels,
                     std::uint32_t rows, std::uint32_t cols, bool gzip);

/// Linear regression whose unique solution is a planted binary matrix:
/// y_s = theta_star x_s with x_s standard normal.
struct SyntheticRegressionProblem {
  Matrix theta_star;
  Dataset data;
};

SyntheticRegressionProblem make_binary_regression(std::size_t d0, std::size_t d1, std::size_t samples,
                                                  std::uint64_t seed);

/// Shuffled partition of 0..n-1 into batches for one epoch; the last batch
/// may be short. Deterministic in (seed, epoch).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);

/// Stacks selected rows of `m`.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

}  // namespace dmsa
