#include "bnn/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "bnn/datasets.hpp"
#include "bnn/errors.hpp"

namespace bnn {

namespace {

struct Binding {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  }
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long out = std::stoull(v, &used);
    if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

template <typename T>
Binding real(std::string section, std::string key, T& field) {
  return {section, key, [&field] { return fmt_double(static_cast<double>(field)); },
          [&field, key](const std::string& v) { field = static_cast<T>(to_double(key, v)); }};
}

template <typename T>
Binding integer(std::string section, std::string key, T& field) {
  return {section, key, [&field] { return std::to_string(field); },
          [&field, key](const std::string& v) { field = static_cast<T>(to_integer(key, v)); }};
}

template <typename T>
Binding unsigned_integer(std::string section, std::string key, T& field) {
  return {section, key, [&field] { return std::to_string(field); },
          [&field, key](const std::string& v) { field = static_cast<T>(to_unsigned(key, v)); }};
}

Binding boolean(std::string section, std::string key, bool& field) {
  return {section, key, [&field] { return std::string(field ? "true" : "false"); },
          [&field, key](const std::string& v) { field = to_bool(key, v); }};
}

Binding text(std::string section, std::string key, std::string& field) {
  return {section, key, [&field] { return field; }, [&field](const std::string& v) { field = v; }};
}

std::vector<Binding> bindings(ExperimentConfig& c) {
  const std::string e = "experiment";
  std::vector<Binding> b{
      text(e, "dataset", c.dataset),
      unsigned_integer(e, "data_seed", c.data_seed),
      {e, "method", [&c] { return to_string(c.method); },
       [&c](const std::string& v) { c.method = method_from_string(v); }},
      unsigned_integer(e, "seed", c.seed),
      integer(e, "restarts", c.n_restarts),
      {e, "selection", [&c] { return to_string(c.selection); },
       [&c](const std::string& v) { c.selection = criterion_from_string(v); }},
      integer(e, "predictive_samples", c.predictive_samples),
      boolean(e, "include_noise", c.include_noise),
      real(e, "time_limit_seconds", c.time_limit_seconds),
      unsigned_integer(e, "grid_points", c.grid_points),
      unsigned_integer(e, "raster_points", c.raster_points),
      text(e, "preset", c.preset),

      integer("hmc", "leapfrog_steps", c.hmc.leapfrog_steps),
      real("hmc", "step_size", c.hmc.initial_step_size),
      integer("hmc", "iterations", c.hmc.iterations),
      integer("hmc", "burn_in", c.hmc.burn_in),
      integer("hmc", "thinning", c.hmc.thinning),
      integer("hmc", "adaptation_window", c.hmc.adaptation_window),
      real("hmc", "adapt_high", c.hmc.adapt_high),
      real("hmc", "adapt_low", c.hmc.adapt_low),
      real("hmc", "step_up", c.hmc.step_up),
      real("hmc", "step_down", c.hmc.step_down),
      real("hmc", "init_scale", c.hmc.init_scale),

      real("sgld", "step_size", c.sgld.step_size),
      integer("sgld", "iterations", c.sgld.iterations),
      integer("sgld", "burn_in", c.sgld.burn_in),
      integer("sgld", "thinning", c.sgld.thinning),
      unsigned_integer("sgld", "batch_size", c.sgld.batch_size),
      real("sgld", "init_scale", c.sgld.init_scale),

      real("sghmc", "step_size", c.sghmc.step_size),
      integer("sghmc", "leapfrog_steps", c.sghmc.leapfrog_steps),
      real("sghmc", "friction", c.sghmc.friction),
      real("sghmc", "noise_estimate", c.sghmc.noise_estimate),
      integer("sghmc", "iterations", c.sghmc.iterations),
      integer("sghmc", "burn_in", c.sghmc.burn_in),
      integer("sghmc", "thinning", c.sghmc.thinning),
      unsigned_integer("sghmc", "batch_size", c.sghmc.batch_size),
      real("sghmc", "init_scale", c.sghmc.init_scale),

      real("bbb", "learning_rate", c.vi.learning_rate),
      integer("bbb", "max_steps", c.vi.max_steps),
      integer("bbb", "mc_samples", c.vi.mc_samples),
      integer("bbb", "patience", c.vi.patience),
      real("bbb", "tolerance", c.vi.tolerance),
      integer("bbb", "smoothing_window", c.vi.smoothing_window),
      {"bbb", "init", [&c] { return std::string(c.vi.init == ViInit::hmc_mean ? "hmc_mean" : "standard"); },
       [&c](const std::string& v) {
         if (v == "standard") c.vi.init = ViInit::standard;
         else if (v == "hmc_mean") c.vi.init = ViInit::hmc_mean;
         else throw ConfigError("'init' expects standard or hmc_mean, got '" + v + "'");
       }},
      real("bbb", "init_sigma", c.vi.init_sigma),
      real("bbb", "init_mean_scale", c.vi.init_mean_scale),
      text("bbb", "hmc_samples", c.vi_hmc_samples),

      real("dropout", "dropout_rate", c.dropout.dropout_rate),
      real("dropout", "learning_rate", c.dropout.training.learning_rate),
      real("dropout", "lambda", c.dropout.training.lambda),
      integer("dropout", "max_steps", c.dropout.training.max_steps),
      integer("dropout", "patience", c.dropout.training.patience),
      real("dropout", "tolerance", c.dropout.training.tolerance),
      integer("dropout", "smoothing_window", c.dropout.training.smoothing_window),
      real("dropout", "init_scale", c.dropout.training.init_scale),

      integer("ensemble", "members", c.ensemble.n_members),
      real("ensemble", "learning_rate", c.ensemble.training.learning_rate),
      real("ensemble", "lambda", c.ensemble.training.lambda),
      integer("ensemble", "max_steps", c.ensemble.training.max_steps),
      integer("ensemble", "patience", c.ensemble.training.patience),
      real("ensemble", "tolerance", c.ensemble.training.tolerance),
      integer("ensemble", "smoothing_window", c.ensemble.training.smoothing_window),
      real("ensemble", "init_scale", c.ensemble.training.init_scale),
      unsigned_integer("ensemble", "workers", c.ensemble.workers),
  };
  return b;
}

struct TaskHyperparameters {
  double bbb_lr, dropout_lr, dropout_rate, ensemble_lr, sgld_lr, lambda;
};

SplitSpec default_splits(const std::string& dataset) {
  if (dataset == "reg1") return reg_mismatched_splits();
  if (dataset == "reg2") return reg_matched_splits();
  if (dataset == "class1") return class_mismatched_splits();
  return class_matched_splits();
}

TaskHyperparameters task_table(const std::string& dataset) {
  // Tuned values per task: reg1, reg2, class1, class2.
  if (dataset == "reg1") return {0.001, 0.05, 0.005, 0.05, 0.001, 0.25};
  if (dataset == "reg2") return {0.001, 0.05, 0.01, 0.005, 0.001, 0.04};
  if (dataset == "class1") return {0.01, 0.005, 0.005, 0.1, 0.01, 0.5};
  if (dataset == "class2") return {0.001, 0.01, 0.005, 0.1, 0.01, 0.5};
  throw ConfigError("unknown dataset '" + dataset + "'");
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::hmc: return "hmc";
    case Method::sgld: return "sgld";
    case Method::sghmc: return "sghmc";
    case Method::bbb: return "bbb";
    case Method::dropout: return "dropout";
    case Method::ensemble: return "ensemble";
    case Method::moment_gaussian: return "moment-gaussian";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::hmc, Method::sgld, Method::sghmc, Method::bbb, Method::dropout,
                   Method::ensemble, Method::moment_gaussian}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

std::string to_string(SelectionCriterion criterion) {
  return criterion == SelectionCriterion::elbo ? "elbo" : "validation_loglik";
}

SelectionCriterion criterion_from_string(const std::string& name) {
  if (name == "validation_loglik") return SelectionCriterion::validation_loglik;
  if (name == "elbo") return SelectionCriterion::elbo;
  throw ConfigError("unknown selection criterion '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (!is_known_dataset(dataset)) throw ConfigError("unknown dataset '" + dataset + "'");
  if (n_restarts < 1) throw ConfigError("restarts must be >= 1");
  if (predictive_samples < 1) throw ConfigError("predictive_samples must be >= 1");
  if (selection == SelectionCriterion::elbo && method != Method::bbb) {
    throw ConfigError("ELBO selection is only defined for bbb");
  }
  if (time_limit_seconds < 0.0) throw ConfigError("time_limit_seconds must be >= 0");
  if (grid_points < 2 || raster_points < 2) throw ConfigError("grids need at least two points");
  try {
    switch (method) {
      case Method::hmc:
      case Method::moment_gaussian: hmc.validate(); break;
      case Method::sgld: sgld.validate(); break;
      case Method::sghmc: sghmc.validate(); break;
      case Method::bbb: {
        VIConfig check = vi;
        if (check.init == ViInit::hmc_mean) check.init_mean = Vector();
        check.validate();
        if (check.init == ViInit::hmc_mean && vi_hmc_samples.empty()) hmc.validate();
        break;
      }
      case Method::dropout: dropout.validate(); break;
      case Method::ensemble: ensemble.validate(); break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string ExperimentConfig::to_text() const {
  auto& self = const_cast<ExperimentConfig&>(*this);  // getters only read
  std::string out;
  std::string section;
  for (const auto& b : bindings(self)) {
    if (b.section != section) {
      out += (section.empty() ? "" : "\n") + fmt::format("[{}]\n", b.section);
      section = b.section;
    }
    out += fmt::format("{} = {}\n", b.key, b.get());
  }
  return out;
}

std::string ExperimentConfig::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const char* d : {"reg1", "reg2", "class1", "class2"}) {
    for (Method m : {Method::hmc, Method::sgld, Method::sghmc, Method::bbb, Method::dropout,
                     Method::ensemble, Method::moment_gaussian}) {
      names.push_back(fmt::format("{}-{}", d, to_string(m)));
    }
  }
  return names;
}

ExperimentConfig preset_config(const std::string& name) {
  const auto dash = name.find('-');
  if (dash == std::string::npos) throw ConfigError("preset must look like <dataset>-<method>");
  ExperimentConfig c;
  c.dataset = name.substr(0, dash);
  c.method = method_from_string(name.substr(dash + 1));
  const TaskHyperparameters t = task_table(c.dataset);
  c.preset = name;

  c.vi.learning_rate = t.bbb_lr;
  c.dropout.training.learning_rate = t.dropout_lr;
  c.dropout.dropout_rate = t.dropout_rate;
  c.dropout.training.lambda = t.lambda;
  c.ensemble.training.learning_rate = t.ensemble_lr;
  c.ensemble.training.lambda = t.lambda;
  // Tuned learning rates are per datum; samplers step on the full log posterior.
  const double n_train = static_cast<double>(default_splits(c.dataset).count(Split::train));
  c.sgld.step_size = 2.0 * t.sgld_lr / n_train;
  c.sghmc.step_size = 0.002 / std::sqrt(n_train);

  // Chains and the ensemble (itself a set of restarts) run once; optimizers restart 20 times.
  c.n_restarts = (c.method == Method::bbb || c.method == Method::dropout) ? 20 : 1;
  return c;
}

ExperimentConfig parse_config(const std::string& text, const std::string& default_preset) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }

  ExperimentConfig c;
  if (auto preset = tree.get_optional<std::string>("experiment.preset"); preset && !preset->empty()) {
    c = preset_config(*preset);
  } else if (!default_preset.empty()) {
    c = preset_config(default_preset);
  }
  auto table = bindings(c);
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) {
      throw ConfigError("key '" + section + "' must sit inside a [section]");
    }
    for (const auto& [key, node] : entries) {
      const auto it = std::find_if(table.begin(), table.end(), [&](const Binding& b) {
        return b.section == section && b.key == key;
      });
      if (it == table.end()) throw ConfigError("unknown setting [" + section + "] " + key);
      if (section == "experiment" && key == "preset") continue;
      it->set(node.data());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config_file(const std::string& path, const std::string& default_preset) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), default_preset);
}

}  // namespace bnn
