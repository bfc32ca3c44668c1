#pragma once

// Entry points behind the `dmsa` executable. Each returns the process exit
// code: 0 on success, 2 for an invalid config or unusable weights file, 1
// for any other failure. The output directory comes from the config unless
// the DMSA_OUTPUT_DIR environment variable is set.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace dmsa {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalid = 2;

/// Trains and writes metrics.csv, metrics.json, weights.bin and
/// config.resolved.json.
int cmd_train(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err);

/// Inference-mode J and error rate on `split` ("train" or "test"); prints a
/// JSON object and writes eval_<split>.json.
int cmd_eval(const std::filesystem::path& config_path, const std::filesystem::path& weights_path,
             const std::string& split, std::ostream& out, std::ostream& err);

/// Maximum-principle residuals plus error-estimate terms against random
/// perturbations of the weights; writes diagnostics.json.
int cmd_diagnose(const std::filesystem::path& config_path, const std::filesystem::path& weights_path,
                 std::optional<std::size_t> perturbations, std::ostream& out, std::ostream& err);

}  // namespace dmsa
