#pragma once

// JSON run configuration, network construction and data loading for the
// command-line tool. Schema (all keys optional unless marked):
//
//   network.input_dim            required, > 0
//   network.layers[]             required, each {"type": ...}
//     binary_dense  {out}
//     ternary_dense {out, lambda?}
//     float_dense   {out, bias? = true}
//     activation    {kind = relu | tanh | sigmoid | softplus | identity}
//     batch_norm    {eps? = 1e-5, momentum? = 0.9}
//   network.ternary_init_zero_fraction   probability of a 0 entry at init
//   optimizer.kind               basic-msa | binary-msa | ternary-msa | gradient-msa
//   optimizer.{rho_fraction, rho_source = averaged | current, fixed_rho, alpha0, alpha_decay,
//              alpha_decay_steps, lambda, eta, adam_lr}
//   training.{batch_size, epochs, seed}
//   loss                         mean-square | squared-hinge | softmax-cross-entropy
//   data.kind = mnist            {train_images, train_labels, test_images?,
//                                 test_labels?, train_limit?, test_limit?}
//   data.kind = synthetic_regression {d0, d1, samples, seed}
//   diagnostics.{batch_size, perturbations, strength, seed}
//   output_dir                   default "out"; DMSA_OUTPUT_DIR overrides
//
// Relative paths resolve against the directory holding the config file.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmsa/data.hpp"
#include "dmsa/layers.hpp"
#include "dmsa/msa.hpp"

namespace dmsa {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LayerSpec {
  std::string type;
  std::size_t out = 0;
  ActivationKind activation = ActivationKind::relu;
  std::optional<double> lambda;
  bool bias = true;
  double eps = 1e-5;
  double momentum = 0.9;
};

struct DataSpec {
  enum class Kind { mnist, synthetic_regression };
  Kind kind = Kind::mnist;
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::optional<std::filesystem::path> test_images;
  std::optional<std::filesystem::path> test_labels;
  std::optional<std::size_t> train_limit;
  std::optional<std::size_t> test_limit;
  std::size_t d0 = 0;
  std::size_t d1 = 0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

struct DiagnosticsSpec {
  /// Samples used for the residual and error-estimate checks; 0 = all.
  std::size_t batch_size = 100;
  std::size_t perturbations = 10;
  double strength = 0.05;
  std::uint64_t seed = 0;
};

struct RunConfig {
  std::size_t input_dim = 0;
  std::vector<LayerSpec> layers;
  double ternary_init_zero_fraction = 1.0 / 3.0;
  /// Default lambda for ternary layers without their own.
  double lambda = 1e-7;
  TrainConfig train;
  DataSpec data;
  DiagnosticsSpec diagnostics;
  std::filesystem::path output_dir = "out";
};

/// Validates and fills defaults; throws ConfigError.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// The resolved configuration (every default made explicit).
nlohmann::ordered_json to_json(const RunConfig& config);

/// Fresh network for the config, initialized from training.seed: binary
/// entries uniform on {-1,+1}, ternary entries 0 with the configured
/// probability and otherwise +/-1, float weights Glorot-uniform with zero
/// bias, batch-norm gamma 1 and beta 0.
Network build_network(const RunConfig& config);

/// True when `net` has the layer kinds and dimensions the config describes.
bool matches_config(const Network& net, const RunConfig& config);

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
};

LoadedData load_data(const RunConfig& config);

}  // namespace dmsa
