// Acceptance gate: one PASS/FAIL line per criterion.
//
//   dmsa_acceptance <configs dir> [criterion ...]
//
// With no criterion numbers every check runs. The MNIST checks (8, 9, 11)
// read configs/mnist_binary.json and configs/mnist_ternary.json.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dmsa/config.hpp"
#include "dmsa/data.hpp"
#include "dmsa/diagnostics.hpp"
#include "dmsa/io.hpp"
#include "dmsa/msa.hpp"
#include "oracles.hpp"

using namespace dmsa;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome discrete_update_vs_brute(bool ternary) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(ternary ? 202 : 101);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t mismatches = 0, entries = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const Matrix mbar = oracle::random_matrix(4, 3, rng);
    const Matrix theta = oracle::random_signs(4, 3, rng, ternary);
    const double rho = unit(rng);
    const double lambda = ternary ? unit(rng) : 0.0;
    const Matrix got = ternary ? ternary_update(theta, mbar, rho, lambda) : binary_update(theta, mbar, rho);
    const std::vector<double> choices = ternary ? std::vector<double>{-1, 0, 1} : std::vector<double>{-1, 1};
    for (std::size_t i = 0; i < got.size(); ++i, ++entries)
      if (got.values()[i] != oracle::brute_entry(mbar.values()[i], theta.values()[i], rho, lambda, choices))
        ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 1.0,
          fmt("%zu mismatches over %zu entries of 500 triples, %.3f s (limit 1 s)", mismatches, entries, secs)};
}

struct TanhProblem {
  Network net;
  Matrix x0;
  TerminalLoss loss;
};

TanhProblem tanh_problem() {
  std::mt19937_64 rng(303);
  auto layer = [&](std::size_t out, std::size_t in) {
    const Matrix w = oracle::random_matrix(out, in, rng, 1.0 / std::sqrt(double(in)));
    const Matrix b = oracle::random_matrix(1, out, rng, 0.1);
    return FloatDense(w, Vector(std::vector<double>(b.values().begin(), b.values().end())));
  };
  Network net(6, {layer(8, 6), Activation{ActivationKind::tanh}, layer(8, 8), Activation{ActivationKind::tanh},
                  layer(4, 8)});
  Matrix x0 = oracle::random_matrix(20, 6, rng);
  TerminalLoss loss(LossKind::mean_square, oracle::random_matrix(20, 4, rng));
  return {std::move(net), std::move(x0), std::move(loss)};
}

Outcome backprop_equivalence() {
  const auto t0 = Clock::now();
  const TanhProblem p = tanh_problem();
  const double dev = backprop_equivalence_check(p.net, p.x0, p.loss, 0.1);
  const double secs = seconds_since(t0);
  return {dev < 1e-5 && secs < 5.0, fmt("max relative deviation %.3e (limit 1e-5), %.3f s (limit 5 s)", dev, secs)};
}

Outcome costate_chain() {
  const TanhProblem p = tanh_problem();
  const double dev = costate_chain_deviation(p.net, p.x0, p.loss);
  return {dev < 1e-5, fmt("max |p + (1/S) dPhi/dx| = %.3e (limit 1e-5)", dev)};
}

// Runs up to 20 full-batch iterations and reports whether theta reached the
// planted matrix and stayed fixed there through the last iteration.
struct RegressionRun {
  bool converged = false;
  std::size_t first_hit = 0;
  double final_j = 0.0;
};

RegressionRun regression_run(std::uint64_t seed, bool proximal) {
  const auto prob = make_binary_regression(8, 4, 2000, seed);
  std::mt19937_64 rng(seed + 1000);
  Network net(8, {BinaryDense(oracle::random_signs(4, 8, rng))});
  const TerminalLoss loss(LossKind::mean_square, prob.data.targets);
  MsaHyperparams hyper = default_hyperparams(OptimizerKind::binary_msa);
  hyper.rho_fraction = 0.5;
  hyper.alpha0 = 0.0;
  hyper.alpha_decay = 1.0;
  MsaOptimizer opt(OptimizerKind::binary_msa, hyper, net, 1);

  RegressionRun r;
  bool at_star = false;
  for (std::size_t k = 1; k <= 20; ++k) {
    if (proximal)
      opt.step(net, prob.data.inputs, loss);
    else
      net = basic_msa_step(net, prob.data.inputs, loss);
    const bool now = discrete_theta(net.layer(0)) == prob.theta_star;
    if (now && !at_star) r.first_hit = k;
    at_star = now;
  }
  r.converged = at_star;
  r.final_j = objective(net, prob.data.inputs, loss);
  return r;
}

std::size_t regression_converged_5 = 0;

Outcome regression_recovery() {
  const auto t0 = Clock::now();
  std::size_t ok = 0;
  std::string hits;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RegressionRun r = regression_run(seed, true);
    ok += r.converged;
    hits += r.converged ? std::to_string(r.first_hit) : std::string("-");
    hits += seed < 9 ? "," : "";
  }
  regression_converged_5 = ok;
  const double secs = seconds_since(t0);
  return {ok >= 9 && secs < 10.0,
          fmt("%zu/10 seeds recover theta* (J=0) within 20 iterations (need 9); first hit per seed [%s]; %.2f s",
              ok, hits.c_str(), secs)};
}

Outcome regression_without_proximal(bool have_5) {
  if (!have_5) regression_recovery();
  std::size_t ok = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) ok += regression_run(seed, false).converged;
  const std::size_t failed = 10 - ok;
  return {failed >= 5 && ok < regression_converged_5,
          fmt("rho = 0: %zu/10 seeds reach and hold theta* (%zu fail, need >= 5); with rho: %zu/10", ok, failed,
              regression_converged_5)};
}

Outcome error_estimate_terms() {
  std::mt19937_64 rng(707);
  auto layer = [&](std::size_t out, std::size_t in) {
    const Matrix w = oracle::random_matrix(out, in, rng, 1.0 / std::sqrt(double(in)));
    return FloatDense(w, Vector(out, 0.05));
  };
  const Network net(5, {layer(7, 5), Activation{ActivationKind::tanh}, layer(7, 7), Activation{ActivationKind::tanh},
                        layer(3, 7)});
  const Matrix x0 = oracle::random_matrix(30, 5, rng);
  const TerminalLoss loss(LossKind::mean_square, oracle::random_matrix(30, 3, rng));
  const double strength = 0.1;

  std::size_t negative = 0;
  auto draw = [&](std::vector<ErrorEstimateReport>& out) {
    for (int i = 0; i < 200; ++i) {
      const ErrorEstimateReport r = theorem2_terms(net, random_perturbation(net, rng, strength), x0, loss);
      if (r.penalty_f < 0.0 || r.penalty_grad_f < 0.0 || r.penalty_grad_l < 0.0) ++negative;
      out.push_back(r);
    }
  };
  std::vector<ErrorEstimateReport> fit, fresh;
  draw(fit);
  draw(fresh);
  const ErrorEstimateReport same = theorem2_terms(net, net, x0, loss);
  const bool zero_at_theta = same.penalty_f == 0.0 && same.penalty_grad_f == 0.0 && same.penalty_grad_l == 0.0 &&
                             same.delta_j == 0.0 && same.hamiltonian_gain == 0.0;
  const double c_star = fit_error_constant(fit);
  std::size_t violations = 0;
  for (const auto& r : fresh) violations += !error_estimate_holds(r, 2.0 * c_star);
  return {negative == 0 && zero_at_theta && violations == 0,
          fmt("negative penalties %zu/400, zero at phi=theta: %s, C* = %.4g, violations of C=2C* on fresh 200: %zu",
              negative, zero_at_theta ? "yes" : "no", c_star, violations)};
}

Outcome gronwall_fuzz() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<double> kd(0.0, 3.0), ud(0.0, 10.0);
  std::size_t violations = 0, oracle_disagree = 0;
  for (int i = 0; i < 1000; ++i) {
    const double k = kd(rng), u0 = ud(rng);
    std::vector<double> w(1 + rng() % 20);
    for (double& v : w) v = ud(rng);
    if (!gronwall_check(k, u0, w)) ++violations;
    const auto seq = oracle::gronwall_sequence(k, u0, w);
    double wsum = 0.0;
    for (double v : w) wsum += v;
    const double bound = std::max(1.0, std::pow(k, double(w.size()))) * (u0 + wsum);
    for (double u : seq)
      if (u > bound * (1 + 1e-12)) ++oracle_disagree;
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && oracle_disagree == 0 && secs < 1.0,
          fmt("%zu violations over 1000 instances (direct recursion: %zu), %.3f s", violations, oracle_disagree,
              secs)};
}

// ---------------------------------------------------------------------------
// MNIST runs.

struct MnistRun {
  TrainResult result;
  double seconds = 0.0;
  std::string csv;
};

MnistRun mnist_run(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  const LoadedData data = load_data(cfg);
  const Dataset* test = data.test ? &*data.test : nullptr;
  MnistRun run{train(build_network(cfg), data.train, test, cfg.train), 0.0, {}};
  run.seconds = seconds_since(t0);
  run.csv = metrics_csv(run.result.net, run.result.metrics);
  return run;
}

double final_train_error(const MnistRun& r) {
  return r.result.metrics.empty() ? 1.0 : r.result.metrics.back().train_error;
}

struct MnistState {
  fs::path configs;
  std::optional<MnistRun> binary;
};

const MnistRun& binary_run(MnistState& st) {
  if (!st.binary) st.binary = mnist_run(load_config(st.configs / "mnist_binary.json"));
  return *st.binary;
}

Outcome mnist_binary(MnistState& st) {
  const MnistRun& r = binary_run(st);
  const double err = final_train_error(r);
  return {err <= 0.10 && r.seconds <= 300.0,
          fmt("%zu epochs, final train error %.4f (limit 0.10), test error %.4f, %.1f s (limit 300 s)",
              r.result.metrics.size(), err, r.result.metrics.empty() ? 1.0 : r.result.metrics.back().test_error.value_or(1.0),
              r.seconds)};
}

Outcome mnist_ternary(MnistState& st) {
  const double binary_err = final_train_error(binary_run(st));
  const RunConfig base = load_config(st.configs / "mnist_ternary.json");
  std::vector<double> nonzero, errors;
  std::string sweep;
  for (double lambda : {1e-7, 1e-6, 1e-5}) {
    RunConfig cfg = base;
    cfg.lambda = lambda;
    for (auto& l : cfg.layers) l.lambda.reset();
    const MnistRun r = mnist_run(cfg);
    nonzero.push_back(r.result.net.nonzero_fraction());
    errors.push_back(final_train_error(r));
    sweep += fmt("%s lambda=%.0e: nonzero %.4f, train error %.4f (%.0f s)", sweep.empty() ? "" : ";", lambda,
                 nonzero.back(), errors.back(), r.seconds);
  }
  const bool sparse = nonzero[0] < 0.5;
  const bool close = std::abs(errors[0] - binary_err) <= 0.03;
  const bool monotone = nonzero[1] <= nonzero[0] && nonzero[2] <= nonzero[1];
  return {sparse && close && monotone,
          fmt("nonzero < 0.5 at 1e-7: %s; error within 3 pp of binary (%.4f): %s; non-increasing: %s | ",
              sparse ? "yes" : "NO", binary_err, close ? "yes" : "NO", monotone ? "yes" : "NO") +
              sweep};
}

Outcome determinism(MnistState& st) {
  const MnistRun& first = binary_run(st);
  const MnistRun second = mnist_run(load_config(st.configs / "mnist_binary.json"));
  const bool same_csv = first.csv == second.csv && !first.csv.empty();

  const auto bytes = serialize_weights(first.result.net);
  const fs::path tmp = fs::temp_directory_path() / "dmsa_acceptance_weights.bin";
  save_weights(tmp, first.result.net);
  const bool round_trip = serialize_weights(load_weights(tmp)) == bytes &&
                          serialize_weights(deserialize_weights(bytes)) == bytes;
  fs::remove(tmp);
  return {same_csv && round_trip, fmt("metrics.csv identical across seeded runs: %s (%zu bytes); weights round-trip "
                                      "bit-exact: %s (%zu bytes)",
                                      same_csv ? "yes" : "NO", first.csv.size(), round_trip ? "yes" : "NO",
                                      bytes.size())};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <configs dir> [criterion ...]\n", argv[0]);
    return 2;
  }
  MnistState mnist{argv[1], std::nullopt};
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::stoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"binary update equals brute-force argmax", [] { return discrete_update_vs_brute(false); }},
      {"ternary update equals brute-force argmax", [] { return discrete_update_vs_brute(true); }},
      {"gradient-MSA step equals backprop descent", backprop_equivalence},
      {"co-states match finite-difference chain rule", costate_chain},
      {"binary MSA recovers planted regression weights", regression_recovery},
      {"rho = 0 fails to settle", [&] { return regression_without_proximal(only.empty() || only.count(5)); }},
      {"error-estimate terms and fitted constant", error_estimate_terms},
      {"MNIST binary training error", [&] { return mnist_binary(mnist); }},
      {"MNIST ternary sparsity", [&] { return mnist_ternary(mnist); }},
      {"discrete Gronwall bound", gronwall_fuzz},
      {"determinism and weight round-trip", [&] { return determinism(mnist); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
