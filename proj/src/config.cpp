#include "dmsa/config.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace dmsa {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T read(const json& obj, const char* key, const std::string& where, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

template <typename T>
T require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing " + where + "." + key);
  return read<T>(obj, key, where, T{});
}

std::size_t read_count(const json& obj, const char* key, const std::string& where, std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(where + "." + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

void check_range(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

LayerSpec parse_layer(const json& j, std::size_t index) {
  const std::string where = "network.layers[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  LayerSpec spec;
  spec.type = require<std::string>(j, "type", where);
  if (spec.type == "binary_dense") {
    reject_unknown(j, where, {"type", "out"});
  } else if (spec.type == "ternary_dense") {
    reject_unknown(j, where, {"type", "out", "lambda"});
    if (j.contains("lambda")) {
      spec.lambda = read<double>(j, "lambda", where, 0.0);
      check_range(*spec.lambda >= 0.0, where + ".lambda must be non-negative");
    }
  } else if (spec.type == "float_dense") {
    reject_unknown(j, where, {"type", "out", "bias"});
    spec.bias = read<bool>(j, "bias", where, true);
  } else if (spec.type == "activation") {
    reject_unknown(j, where, {"type", "kind"});
    try {
      spec.activation = activation_from_string(read<std::string>(j, "kind", where, "relu"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ": " + e.what());
    }
    return spec;
  } else if (spec.type == "batch_norm") {
    reject_unknown(j, where, {"type", "eps", "momentum"});
    spec.eps = read<double>(j, "eps", where, 1e-5);
    spec.momentum = read<double>(j, "momentum", where, 0.9);
    check_range(spec.eps > 0.0, where + ".eps must be positive");
    check_range(spec.momentum >= 0.0 && spec.momentum < 1.0, where + ".momentum must lie in [0,1)");
    return spec;
  } else {
    throw ConfigError(where + ": unknown layer type '" + spec.type + "'");
  }
  spec.out = read_count(j, "out", where, 0);
  check_range(spec.out > 0, where + ".out must be positive");
  return spec;
}

Matrix random_signs(std::size_t rows, std::size_t cols, double zero_fraction, std::mt19937_64& rng) {
  std::bernoulli_distribution zero(zero_fraction);
  std::bernoulli_distribution coin(0.5);
  Matrix m(rows, cols);
  for (double& v : m.values()) {
    const bool z = zero_fraction > 0.0 && zero(rng);
    const double s = coin(rng) ? 1.0 : -1.0;
    v = z ? 0.0 : s;
  }
  return m;
}

}  // namespace

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j, "config", {"network", "optimizer", "training", "loss", "data", "diagnostics", "output_dir"});
  RunConfig cfg;

  if (!j.contains("network")) throw ConfigError("missing network");
  const json& net = j.at("network");
  reject_unknown(net, "network", {"input_dim", "layers", "ternary_init_zero_fraction"});
  cfg.input_dim = read_count(net, "input_dim", "network", 0);
  check_range(cfg.input_dim > 0, "network.input_dim must be positive");
  if (!net.contains("layers") || !net.at("layers").is_array() || net.at("layers").empty())
    throw ConfigError("network.layers must be a non-empty array");
  for (std::size_t i = 0; i < net.at("layers").size(); ++i) cfg.layers.push_back(parse_layer(net.at("layers")[i], i));
  cfg.ternary_init_zero_fraction = read<double>(net, "ternary_init_zero_fraction", "network", 1.0 / 3.0);
  check_range(cfg.ternary_init_zero_fraction >= 0.0 && cfg.ternary_init_zero_fraction <= 1.0,
              "network.ternary_init_zero_fraction must lie in [0,1]");

  const json opt = j.value("optimizer", json::object());
  reject_unknown(opt, "optimizer",
                 {"kind", "rho_fraction", "rho_source", "fixed_rho", "alpha0", "alpha_decay", "alpha_decay_steps", "lambda", "eta",
                  "adam_lr"});
  try {
    cfg.train.optimizer = optimizer_from_string(read<std::string>(opt, "kind", "optimizer", "binary-msa"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("optimizer.kind: ") + e.what());
  }
  MsaHyperparams& h = cfg.train.hyper;
  h = default_hyperparams(cfg.train.optimizer);
  h.rho_fraction = read<double>(opt, "rho_fraction", "optimizer", h.rho_fraction);
  if (opt.contains("fixed_rho") && !opt.at("fixed_rho").is_null())
    h.fixed_rho = read<double>(opt, "fixed_rho", "optimizer", 0.0);
  {
    const auto src = read<std::string>(opt, "rho_source", "optimizer", "averaged");
    check_range(src == "averaged" || src == "current", "optimizer.rho_source must be averaged or current");
    h.rho_from_current = src == "current";
  }
  h.alpha0 = read<double>(opt, "alpha0", "optimizer", h.alpha0);
  h.alpha_decay = read<double>(opt, "alpha_decay", "optimizer", h.alpha_decay);
  h.alpha_decay_steps = read_count(opt, "alpha_decay_steps", "optimizer", h.alpha_decay_steps);
  h.eta = read<double>(opt, "eta", "optimizer", h.eta);
  h.adam.rate = read<double>(opt, "adam_lr", "optimizer", h.adam.rate);
  cfg.lambda = read<double>(opt, "lambda", "optimizer", cfg.lambda);
  check_range(h.rho_fraction > 0.0, "optimizer.rho_fraction must be positive");
  check_range(!h.fixed_rho || *h.fixed_rho >= 0.0, "optimizer.fixed_rho must be non-negative");
  check_range(h.alpha0 >= 0.0 && h.alpha0 < 1.0, "optimizer.alpha0 must lie in [0,1)");
  check_range(h.alpha_decay > 0.0 && h.alpha_decay <= 1.0, "optimizer.alpha_decay must lie in (0,1]");
  check_range(h.eta >= 0.0, "optimizer.eta must be non-negative");
  check_range(h.adam.rate > 0.0, "optimizer.adam_lr must be positive");
  check_range(cfg.lambda >= 0.0, "optimizer.lambda must be non-negative");

  const json tr = j.value("training", json::object());
  reject_unknown(tr, "training", {"batch_size", "epochs", "seed"});
  cfg.train.batch_size = read_count(tr, "batch_size", "training", 100);
  cfg.train.epochs = read_count(tr, "epochs", "training", 1);
  cfg.train.seed = read<std::uint64_t>(tr, "seed", "training", 0);
  check_range(cfg.train.batch_size > 0, "training.batch_size must be positive");

  try {
    cfg.train.loss = loss_from_string(read<std::string>(j, "loss", "config", "squared-hinge"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("loss: ") + e.what());
  }

  if (!j.contains("data")) throw ConfigError("missing data");
  const json& d = j.at("data");
  const auto kind = require<std::string>(d, "kind", "data");
  if (kind == "mnist") {
    reject_unknown(d, "data",
                   {"kind", "train_images", "train_labels", "test_images", "test_labels", "train_limit", "test_limit"});
    cfg.data.kind = DataSpec::Kind::mnist;
    cfg.data.train_images = resolve(base_dir, require<std::string>(d, "train_images", "data"));
    cfg.data.train_labels = resolve(base_dir, require<std::string>(d, "train_labels", "data"));
    if (d.contains("test_images") != d.contains("test_labels"))
      throw ConfigError("data.test_images and data.test_labels go together");
    if (d.contains("test_images")) {
      cfg.data.test_images = resolve(base_dir, require<std::string>(d, "test_images", "data"));
      cfg.data.test_labels = resolve(base_dir, require<std::string>(d, "test_labels", "data"));
    }
    if (d.contains("train_limit")) cfg.data.train_limit = read_count(d, "train_limit", "data", 0);
    if (d.contains("test_limit")) cfg.data.test_limit = read_count(d, "test_limit", "data", 0);
  } else if (kind == "synthetic_regression") {
    reject_unknown(d, "data", {"kind", "d0", "d1", "samples", "seed"});
    cfg.data.kind = DataSpec::Kind::synthetic_regression;
    cfg.data.d0 = read_count(d, "d0", "data", 0);
    cfg.data.d1 = read_count(d, "d1", "data", 0);
    cfg.data.samples = read_count(d, "samples", "data", 0);
    cfg.data.seed = read<std::uint64_t>(d, "seed", "data", 0);
    check_range(cfg.data.d0 > 0 && cfg.data.d1 > 0 && cfg.data.samples > 0,
                "data.d0, data.d1 and data.samples must be positive");
    check_range(cfg.data.d0 == cfg.input_dim, "data.d0 must equal network.input_dim");
  } else {
    throw ConfigError("data.kind must be mnist or synthetic_regression, got '" + kind + "'");
  }

  const json diag = j.value("diagnostics", json::object());
  reject_unknown(diag, "diagnostics", {"batch_size", "perturbations", "strength", "seed"});
  cfg.diagnostics.batch_size = read_count(diag, "batch_size", "diagnostics", 100);
  cfg.diagnostics.perturbations = read_count(diag, "perturbations", "diagnostics", 10);
  cfg.diagnostics.strength = read<double>(diag, "strength", "diagnostics", 0.05);
  cfg.diagnostics.seed = read<std::uint64_t>(diag, "seed", "diagnostics", 0);
  check_range(cfg.diagnostics.strength >= 0.0, "diagnostics.strength must be non-negative");

  cfg.output_dir = resolve(base_dir, read<std::string>(j, "output_dir", "config", "out"));

  // Structural checks: dims chain and optimizer compatibility.
  Network probe = [&] {
    try {
      return build_network(cfg);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("network: ") + e.what());
    }
  }();
  if (cfg.data.kind == DataSpec::Kind::synthetic_regression && probe.output_dim() != cfg.data.d1)
    throw ConfigError("network output dimension must equal data.d1");
  if (cfg.data.kind == DataSpec::Kind::mnist && cfg.input_dim != 784)
    throw ConfigError("network.input_dim must be 784 for MNIST");
  try {
    validate_optimizer(cfg.train.optimizer, probe);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path());
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  using oj = nlohmann::ordered_json;
  oj layers = oj::array();
  for (const auto& l : cfg.layers) {
    oj e;
    e["type"] = l.type;
    if (l.type == "activation") {
      e["kind"] = to_string(l.activation);
    } else if (l.type == "batch_norm") {
      e["eps"] = l.eps;
      e["momentum"] = l.momentum;
    } else {
      e["out"] = l.out;
      if (l.type == "ternary_dense") e["lambda"] = l.lambda.value_or(cfg.lambda);
      if (l.type == "float_dense") e["bias"] = l.bias;
    }
    layers.push_back(std::move(e));
  }
  const auto& h = cfg.train.hyper;
  oj out;
  out["network"] = {{"input_dim", cfg.input_dim},
                    {"layers", layers},
                    {"ternary_init_zero_fraction", cfg.ternary_init_zero_fraction}};
  out["optimizer"] = {{"kind", to_string(cfg.train.optimizer)},
                      {"rho_fraction", h.rho_fraction},
                      {"rho_source", h.rho_from_current ? "current" : "averaged"},
                      {"fixed_rho", h.fixed_rho ? oj(*h.fixed_rho) : oj(nullptr)},
                      {"alpha0", h.alpha0},
                      {"alpha_decay", h.alpha_decay},
                      {"alpha_decay_steps", h.alpha_decay_steps},
                      {"lambda", cfg.lambda},
                      {"eta", h.eta},
                      {"adam_lr", h.adam.rate}};
  out["training"] = {{"batch_size", cfg.train.batch_size}, {"epochs", cfg.train.epochs}, {"seed", cfg.train.seed}};
  out["loss"] = to_string(cfg.train.loss);
  if (cfg.data.kind == DataSpec::Kind::mnist) {
    oj d = {{"kind", "mnist"},
            {"train_images", cfg.data.train_images.string()},
            {"train_labels", cfg.data.train_labels.string()}};
    if (cfg.data.test_images) {
      d["test_images"] = cfg.data.test_images->string();
      d["test_labels"] = cfg.data.test_labels->string();
    }
    if (cfg.data.train_limit) d["train_limit"] = *cfg.data.train_limit;
    if (cfg.data.test_limit) d["test_limit"] = *cfg.data.test_limit;
    out["data"] = d;
  } else {
    out["data"] = {{"kind", "synthetic_regression"},
                   {"d0", cfg.data.d0},
                   {"d1", cfg.data.d1},
                   {"samples", cfg.data.samples},
                   {"seed", cfg.data.seed}};
  }
  out["diagnostics"] = {{"batch_size", cfg.diagnostics.batch_size},
                        {"perturbations", cfg.diagnostics.perturbations},
                        {"strength", cfg.diagnostics.strength},
                        {"seed", cfg.diagnostics.seed}};
  out["output_dir"] = cfg.output_dir.string();
  return out;
}

Network build_network(const RunConfig& cfg) {
  // Offset keeps the init stream apart from the batch shuffles.
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.train.seed), static_cast<std::uint32_t>(cfg.train.seed >> 32),
                    0x1d1u};
  std::mt19937_64 rng(seq);
  std::vector<Layer> layers;
  std::size_t dim = cfg.input_dim;
  for (const auto& spec : cfg.layers) {
    if (spec.type == "binary_dense") {
      layers.emplace_back(BinaryDense(random_signs(spec.out, dim, 0.0, rng)));
      dim = spec.out;
    } else if (spec.type == "ternary_dense") {
      layers.emplace_back(
          TernaryDense(random_signs(spec.out, dim, cfg.ternary_init_zero_fraction, rng), spec.lambda.value_or(cfg.lambda)));
      dim = spec.out;
    } else if (spec.type == "float_dense") {
      const double a = std::sqrt(6.0 / static_cast<double>(dim + spec.out));
      std::uniform_real_distribution<double> u(-a, a);
      Matrix w(spec.out, dim);
      for (double& v : w.values()) v = u(rng);
      std::optional<Vector> bias;
      if (spec.bias) bias = Vector(spec.out);
      layers.emplace_back(FloatDense(std::move(w), std::move(bias)));
      dim = spec.out;
    } else if (spec.type == "activation") {
      layers.emplace_back(Activation{spec.activation});
    } else if (spec.type == "batch_norm") {
      layers.emplace_back(BatchNorm(dim, spec.eps, spec.momentum));
    } else {
      throw ConfigError("unknown layer type '" + spec.type + "'");
    }
  }
  return Network(cfg.input_dim, std::move(layers));
}

bool matches_config(const Network& net, const RunConfig& cfg) {
  if (net.input_dim() != cfg.input_dim || net.depth() != cfg.layers.size()) return false;
  const Network ref = build_network(cfg);
  if (ref.dims() != net.dims()) return false;
  for (std::size_t t = 0; t < net.depth(); ++t) {
    if (ref.layer(t).index() != net.layer(t).index()) return false;
    if (const auto* a = std::get_if<Activation>(&net.layer(t)))
      if (a->kind != std::get<Activation>(ref.layer(t)).kind) return false;
  }
  return true;
}

LoadedData load_data(const RunConfig& cfg) {
  LoadedData out;
  if (cfg.data.kind == DataSpec::Kind::synthetic_regression) {
    out.train = make_binary_regression(cfg.data.d0, cfg.data.d1, cfg.data.samples, cfg.data.seed).data;
    return out;
  }
  out.train = load_mnist_idx(cfg.data.train_images, cfg.data.train_labels, "train", cfg.data.train_limit);
  if (cfg.data.test_images)
    out.test = load_mnist_idx(*cfg.data.test_images, *cfg.data.test_labels, "test", cfg.data.test_limit);
  return out;
}

}  // namespace dmsa
