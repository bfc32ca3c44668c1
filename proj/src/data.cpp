#include "dmsa/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <numeric>
#include <random>

namespace dmsa {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> buf, std::size_t offset, const std::string& what) {
  if (offset + 4 > buf.size()) throw IdxError("truncated " + what, offset);
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes, bool gzip) {
  if (gzip) {
    gzFile f = gzopen(path.c_str(), "wb9");
    if (f == nullptr) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    if (n != static_cast<int>(bytes.size())) throw std::runtime_error("short write to " + path.string());
    return;
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::size_t n = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (n != bytes.size()) throw std::runtime_error("short write to " + path.string());
}

}  // namespace

IdxError::IdxError(const std::string& what, std::size_t offset)
    : std::runtime_error("IDX: " + what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.split = split;
  out.inputs = gather_rows(inputs, indices);
  if (has_labels()) {
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(labels.at(i));
  }
  if (!targets.empty()) out.targets = gather_rows(targets, indices);
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(idx);
}

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("no such file: " + path.string());
  // gzread passes uncompressed files through unchanged.
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  int n = 0;
  while ((n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0) {
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw std::runtime_error("corrupt gzip stream in " + path.string());
  return out;
}

Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       std::string split, std::optional<std::size_t> limit) {
  const auto img = read_maybe_gzip(images_path);
  const auto lab = read_maybe_gzip(labels_path);

  const std::uint32_t img_magic = read_be32(img, 0, "image header");
  if (img_magic != kIdxImageMagic)
    throw IdxError("bad image magic " + std::to_string(img_magic) + " (expected 2051)", 0);
  const std::uint32_t count = read_be32(img, 4, "image header");
  const std::uint32_t rows = read_be32(img, 8, "image header");
  const std::uint32_t cols = read_be32(img, 12, "image header");

  const std::uint32_t lab_magic = read_be32(lab, 0, "label header");
  if (lab_magic != kIdxLabelMagic)
    throw IdxError("bad label magic " + std::to_string(lab_magic) + " (expected 2049)", 0);
  const std::uint32_t label_count = read_be32(lab, 4, "label header");
  if (label_count != count)
    throw IdxError("image count " + std::to_string(count) + " differs from label count " +
                       std::to_string(label_count),
                   4);

  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t n = std::min<std::size_t>(count, limit.value_or(count));
  const std::size_t img_need = 16 + std::size_t{count} * pixels;
  if (img.size() < img_need) throw IdxError("truncated image data", img.size());
  if (lab.size() < 8 + std::size_t{count}) throw IdxError("truncated label data", lab.size());

  Dataset ds;
  ds.split = std::move(split);
  ds.inputs = Matrix(n, pixels);
  auto dst = ds.inputs.values();
  for (std::size_t i = 0; i < n * pixels; ++i) dst[i] = static_cast<double>(img[16 + i]) / 255.0;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = lab[8 + i];
    if (label > 9) throw IdxError("label " + std::to_string(label) + " outside 0..9", 8 + i);
    ds.labels[i] = label;
  }
  return ds;
}

void write_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                     std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> labels,
                     std::uint32_t rows, std::uint32_t cols, bool gzip) {
  const std::size_t per = std::size_t{rows} * cols;
  if (per == 0 || pixels.size() != labels.size() * per)
    throw std::invalid_argument("write_mnist_idx: pixel count does not match labels x rows x cols");
  std::vector<std::uint8_t> img;
  put_be32(img, kIdxImageMagic);
  put_be32(img, static_cast<std::uint32_t>(labels.size()));
  put_be32(img, rows);
  put_be32(img, cols);
  img.insert(img.end(), pixels.begin(), pixels.end());
  std::vector<std::uint8_t> lab;
  put_be32(lab, kIdxLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(labels.size()));
  lab.insert(lab.end(), labels.begin(), labels.end());
  write_bytes(images_path, img, gzip);
  write_bytes(labels_path, lab, gzip);
}

SyntheticRegressionProblem make_binary_regression(std::size_t d0, std::size_t d1, std::size_t samples,
                                                  std::uint64_t seed) {
  if (d0 == 0 || d1 == 0 || samples == 0)
    throw std::invalid_argument("make_binary_regression: dimensions and sample count must be positive");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticRegressionProblem prob;
  prob.theta_star = Matrix(d1, d0);
  for (double& v : prob.theta_star.values()) v = coin(rng) ? 1.0 : -1.0;
  prob.data.inputs = Matrix(samples, d0);
  for (double& v : prob.data.inputs.values()) v = normal(rng);
  prob.data.targets = matmul_bt(prob.data.inputs, prob.theta_star);
  prob.data.split = "train";
  return prob;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("epoch_batches: batch size must be positive");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= m.rows()) throw std::out_of_range("gather_rows: row index out of range");
    auto src = m.row_span(indices[r]);
    std::copy(src.begin(), src.end(), out.row_span(r).begin());
  }
  return out;
}

}  // namespace dmsa
