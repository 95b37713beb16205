#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnn/baselines.hpp"
#include "bnn/samplers.hpp"
#include "bnn/vi.hpp"

namespace bnn {

enum class Method { hmc, sgld, sghmc, bbb, dropout, ensemble, moment_gaussian };
enum class SelectionCriterion { validation_loglik, elbo };

std::string to_string(Method method);
Method method_from_string(const std::string& name);
std::string to_string(SelectionCriterion criterion);
SelectionCriterion criterion_from_string(const std::string& name);

struct ExperimentConfig {
  std::string dataset = "reg1";
  std::uint64_t data_seed = 1;
  Method method = Method::hmc;
  std::uint64_t seed = 0;
  int n_restarts = 1;
  SelectionCriterion selection = SelectionCriterion::validation_loglik;
  Eigen::Index predictive_samples = 500;
  bool include_noise = true;
  double time_limit_seconds = 0.0;  // 0 = unlimited
  std::size_t grid_points = 200;    // regression band grid
  std::size_t raster_points = 50;   // classification raster, per axis
  std::string preset;

  HmcConfig hmc;
  SgldConfig sgld;
  SghmcConfig sghmc;
  VIConfig vi;
  std::string vi_hmc_samples;  // samples file for the hmc_mean init; empty = run HMC first
  DropoutConfig dropout;
  EnsembleConfig ensemble;

  // Throws ConfigError.
  void validate() const;

  // Canonical `[section]` / `key = value` text covering every setting.
  std::string to_text() const;
  // 16 hex digits, FNV-1a over to_text().
  std::string digest() const;
};

// Hyperparameters for `<dataset>-<method>`, e.g. "reg2-bbb" or "class1-sgld".
ExperimentConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

// Parses the `[section]` / `key = value` format. A `preset` key in
// [experiment] is applied first and the remaining keys override it.
// Throws ConfigError for unknown keys or invalid values, ParseError for
// syntax errors.
// `default_preset` applies when the text does not name a preset itself.
ExperimentConfig parse_config(const std::string& text, const std::string& default_preset = "");
ExperimentConfig load_config_file(const std::string& path, const std::string& default_preset = "");

}  // namespace bnn
