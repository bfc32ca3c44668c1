#pragma once

// Weight container, metrics files and JSON reports.
//
// Weights (little-endian):
//   "DMSAWTS1"  u32 input_dim  u32 layer_count
//   per layer:  u8 kind  (0 binary, 1 ternary, 2 float dense, 3 activation, 4 batch-norm)
//     dense:       u32 rows  u32 cols  u8 dtype (1 int8, 2 f64)  entries row-major
//                  ternary then f64 lambda; float dense then u8 has_bias [+ rows f64]
//     activation:  u8 activation kind
//     batch-norm:  u32 dim  f64 eps  f64 momentum  then gamma, beta,
//                  running_mean, running_var as dim f64 each
//
// metrics.csv columns: epoch,step,j_train,train_error,test_error,sparsity
// followed by sparsity_layer<t> for every discrete layer t. test_error is
// empty when there is no test split. Wall time is kept out of the CSV so
// seeded runs produce identical files; it appears in metrics.json.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmsa/diagnostics.hpp"
#include "dmsa/layers.hpp"
#include "dmsa/msa.hpp"

namespace dmsa {

class WeightsFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> serialize_weights(const Network& net);
Network deserialize_weights(std::span<const std::uint8_t> bytes);

void save_weights(const std::filesystem::path& path, const Network& net);
Network load_weights(const std::filesystem::path& path);

std::string metrics_csv(const Network& net, const std::vector<MetricsRecord>& metrics);
nlohmann::ordered_json metrics_json(const std::vector<MetricsRecord>& metrics);

nlohmann::ordered_json to_json(const ErrorEstimateReport& r);
nlohmann::ordered_json to_json(const PmpResidualReport& r);

/// Writes `text` to `path`, replacing any existing file.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace dmsa
