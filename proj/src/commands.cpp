#include "dmsa/commands.hpp"

#include <cstdlib>
#include <random>

#include "dmsa/config.hpp"
#include "dmsa/diagnostics.hpp"
#include "dmsa/io.hpp"

namespace dmsa {

namespace {

std::filesystem::path output_dir(const RunConfig& cfg) {
  const char* env = std::getenv("DMSA_OUTPUT_DIR");
  std::filesystem::path dir = env != nullptr && *env != '\0' ? std::filesystem::path(env) : cfg.output_dir;
  std::filesystem::create_directories(dir);
  return dir;
}

// Config plus weights that match it; throws ConfigError otherwise.
Network load_matching_weights(const RunConfig& cfg, const std::filesystem::path& weights_path) {
  if (!std::filesystem::is_regular_file(weights_path))
    throw ConfigError("weights file not found: " + weights_path.string());
  Network net = [&] {
    try {
      return load_weights(weights_path);
    } catch (const WeightsFormatError& e) {
      throw ConfigError(weights_path.string() + ": " + e.what());
    }
  }();
  if (!matches_config(net, cfg))
    throw ConfigError("weights in " + weights_path.string() + " do not match the network in the config");
  return net;
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int cmd_train(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_config(config_path);
    const auto dir = output_dir(cfg);
    write_text(dir / "config.resolved.json", to_json(cfg).dump(2) + "\n");

    const LoadedData data = load_data(cfg);
    const Network init = build_network(cfg);
    const Dataset* test = data.test ? &*data.test : nullptr;
    const TrainResult result = train(init, data.train, test, cfg.train, [&](const MetricsRecord& m) {
      out << "epoch " << m.epoch << " J=" << m.j_train << " train_error=" << m.train_error;
      if (m.test_error) out << " test_error=" << *m.test_error;
      out << " nonzero=" << m.sparsity << " (" << static_cast<long long>(m.wall_ms) << " ms)\n";
    });

    write_text(dir / "metrics.csv", metrics_csv(result.net, result.metrics));
    write_text(dir / "metrics.json", metrics_json(result.metrics).dump(2) + "\n");
    save_weights(dir / "weights.bin", result.net);
    out << "wrote " << (dir / "weights.bin").string() << "\n";
    return kExitOk;
  });
}

int cmd_eval(const std::filesystem::path& config_path, const std::filesystem::path& weights_path,
             const std::string& split, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (split != "train" && split != "test") throw ConfigError("split must be train or test, got '" + split + "'");
    const RunConfig cfg = load_config(config_path);
    const Network net = load_matching_weights(cfg, weights_path);
    const LoadedData data = load_data(cfg);
    if (split == "test" && !data.test) throw ConfigError("config has no test split");
    const Dataset& ds = split == "test" ? *data.test : data.train;
    const EvalResult r = evaluate(net, ds, cfg.train.loss);
    nlohmann::ordered_json j = {
        {"split", split}, {"samples", ds.size()}, {"J", r.objective}, {"error_rate", r.error_rate}};
    write_text(output_dir(cfg) / ("eval_" + split + ".json"), j.dump(2) + "\n");
    out << j.dump() << "\n";
    return kExitOk;
  });
}

int cmd_diagnose(const std::filesystem::path& config_path, const std::filesystem::path& weights_path,
                 std::optional<std::size_t> perturbations, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_config(config_path);
    const Network net = load_matching_weights(cfg, weights_path);
    const LoadedData data = load_data(cfg);
    const std::size_t n = cfg.diagnostics.batch_size == 0 ? data.train.size() : cfg.diagnostics.batch_size;
    const Dataset batch = data.train.head(n);
    const TerminalLoss loss = make_loss(cfg.train.loss, batch, net.output_dim());

    nlohmann::ordered_json report;
    report["samples"] = batch.size();
    report["pmp_residual"] = to_json(pmp_residual(net, batch.inputs, loss));

    const std::size_t count = perturbations.value_or(cfg.diagnostics.perturbations);
    if (count > 0) {
      std::mt19937_64 rng(cfg.diagnostics.seed);
      std::vector<ErrorEstimateReport> terms;
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (std::size_t i = 0; i < count; ++i) {
        const Network phi = random_perturbation(net, rng, cfg.diagnostics.strength);
        terms.push_back(theorem2_terms(net, phi, batch.inputs, loss));
        arr.push_back(to_json(terms.back()));
      }
      report["error_estimate"] = {{"strength", cfg.diagnostics.strength},
                                  {"fitted_C", fit_error_constant(terms)},
                                  {"perturbations", arr}};
    }
    write_text(output_dir(cfg) / "diagnostics.json", report.dump(2) + "\n");
    out << report.dump(2) << "\n";
    return kExitOk;
  });
}

}  // namespace dmsa
