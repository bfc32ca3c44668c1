// dmsa: train, evaluate and diagnose binary/ternary networks trained by the
// method of successive approximations.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "dmsa/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hamiltonian-maximization training for binary and ternary networks"};
  app.require_subcommand(1);

  std::string config;
  std::string weights;
  std::string split = "test";
  std::size_t perturbations = 0;

  auto* train = app.add_subcommand("train", "train a network and write metrics and weights");
  train->add_option("config", config, "JSON run configuration")->required();

  auto* eval = app.add_subcommand("eval", "evaluate saved weights in inference mode");
  eval->add_option("config", config, "JSON run configuration")->required();
  eval->add_option("weights", weights, "weights file written by train")->required();
  eval->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));

  auto* diagnose = app.add_subcommand("diagnose", "report maximum-principle residuals and error-estimate terms");
  diagnose->add_option("config", config, "JSON run configuration")->required();
  diagnose->add_option("weights", weights, "weights file written by train")->required();
  auto* pert = diagnose->add_option("--perturbations", perturbations, "number of random perturbations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dmsa::kExitInvalid;
  }

  if (*train) return dmsa::cmd_train(config, std::cout, std::cerr);
  if (*eval) return dmsa::cmd_eval(config, weights, split, std::cout, std::cerr);
  std::optional<std::size_t> n;
  if (*pert) n = perturbations;
  return dmsa::cmd_diagnose(config, weights, n, std::cout, std::cerr);
}
