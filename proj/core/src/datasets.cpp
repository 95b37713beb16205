#include "bnn/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

#include "bnn/errors.hpp"

namespace bnn {

namespace {

const std::vector<Interval> kReg1Data{{-4.0, -1.0}, {1.0, 4.0}};
const std::vector<Interval> kReg1Test{{-4.0, 4.0}};
const std::vector<Interval> kReg2Data{{-6.0, -2.0}, {2.0, 6.0}};
const std::vector<Interval> kReg2Gap{{-2.0, 2.0}};
const std::vector<Interval> kReg2Test{{-6.0, 6.0}};

constexpr double kReg1NoiseVariance = 0.25;
constexpr double kReg2NoiseVariance = 0.04;

struct ClassConditionals {
  Eigen::Vector2d mean_positive;  // label 1 (p1)
  Eigen::Vector2d mean_negative;  // label 0 (p2)
  Eigen::Matrix2d chol;
  bool truncate_by_sign;          // label 1 keeps x2 <= 0, label 0 keeps x2 >= 0
};

Dataset make_regression(const std::string& id, std::uint64_t seed, const SplitSpec& splits,
                        double noise_variance, double (*mean)(double)) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  d.generator = id;
  d.seed = seed;
  d.kind = TaskKind::regression;
  d.noise_sigma = std::sqrt(noise_variance);
  std::size_t total = 0;
  for (const auto& part : splits.parts) total += part.count;
  d.x.resize(static_cast<Eigen::Index>(total), 1);
  d.y.resize(static_cast<Eigen::Index>(total), 1);
  Eigen::Index row = 0;
  for (const auto& part : splits.parts) {
    for (std::size_t i = 0; i < part.count; ++i, ++row) {
      const double x = sample_union_uniform(part.region, rng);
      d.x(row, 0) = x;
      d.y(row, 0) = mean(x) + (part.observation_noise ? d.noise_sigma * normal(rng) : 0.0);
      d.split.push_back(part.split);
    }
  }
  return d;
}

Dataset make_classification(const std::string& id, std::uint64_t seed, const SplitSpec& splits,
                            const ClassConditionals& cc) {
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  Dataset d;
  d.generator = id;
  d.seed = seed;
  d.kind = TaskKind::classification;
  std::size_t total = 0;
  for (const auto& part : splits.parts) total += part.count;
  d.x.resize(static_cast<Eigen::Index>(total), 2);
  d.y.resize(static_cast<Eigen::Index>(total), 1);

  const auto keep_positive = [](const Eigen::Vector2d& v) { return v[1] <= 0.0; };
  const auto keep_negative = [](const Eigen::Vector2d& v) { return v[1] >= 0.0; };
  const auto keep_all = [](const Eigen::Vector2d&) { return true; };

  Eigen::Index row = 0;
  for (const auto& part : splits.parts) {
    std::size_t positives = part.count / 2;
    if (part.count % 2 == 1 && coin(rng)) ++positives;
    const bool truncate = part.truncated && cc.truncate_by_sign;
    std::vector<std::pair<Eigen::Vector2d, double>> rows;
    rows.reserve(part.count);
    for (std::size_t i = 0; i < part.count; ++i) {
      const bool positive = i < positives;
      const Eigen::Vector2d& mean = positive ? cc.mean_positive : cc.mean_negative;
      Eigen::Vector2d v;
      if (truncate) {
        v = positive ? sample_truncated_gaussian(mean, cc.chol, keep_positive, rng)
                     : sample_truncated_gaussian(mean, cc.chol, keep_negative, rng);
      } else {
        v = sample_truncated_gaussian(mean, cc.chol, keep_all, rng);
      }
      rows.emplace_back(v, positive ? 1.0 : 0.0);
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    for (const auto& [v, label] : rows) {
      d.x.row(row) = v.transpose();
      d.y(row, 0) = label;
      d.split.push_back(part.split);
      ++row;
    }
  }
  return d;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::istringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size()) {
    throw ParseError("malformed number '" + cell + "'", line_no);
  }
  return v;
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

std::size_t SplitSpec::count(Split split) const {
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.split == split) n += p.count;
  }
  return n;
}

SplitSpec reg_mismatched_splits() {
  return {{{Split::train, 80, kReg1Data},
           {Split::val, 20, kReg1Data},
           {Split::test, 200, kReg1Test, false}}};
}

SplitSpec reg_matched_splits() {
  return {{{Split::train, 80, kReg2Data},
           {Split::val, 20, kReg2Data},
           {Split::train, 2, kReg2Gap},
           {Split::val, 2, kReg2Gap},
           {Split::test, 200, kReg2Test, false}}};
}

SplitSpec class_mismatched_splits() {
  return {{{Split::train, 80, {}, true, false},
           {Split::val, 20, {}, true, false},
           {Split::test, 100, {}, true, false}}};
}

SplitSpec class_matched_splits() {
  return {{{Split::train, 80, {}, true, true},
           {Split::val, 20, {}, true, true},
           {Split::test, 100, {}, true, false}}};
}

std::size_t Dataset::count(Split s) const { return static_cast<std::size_t>(std::count(split.begin(), split.end(), s)); }

Batch Dataset::subset(Split s) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) idx.push_back(i);
  }
  Batch all{x, y};
  return all.rows(idx);
}

LikelihoodModel Dataset::likelihood() const {
  return kind == TaskKind::regression ? LikelihoodModel::gaussian(noise_sigma) : LikelihoodModel::bernoulli();
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.generator == b.generator && a.seed == b.seed && a.kind == b.kind &&
         a.noise_sigma == b.noise_sigma && a.x == b.x && a.y == b.y && a.split == b.split;
}

double reg_mismatched_mean(double x) { return 0.1 * x * x * x; }

double reg_matched_mean(double x) { return -(1.0 + x) * std::sin(1.2 * x); }

double sample_union_uniform(const std::vector<Interval>& region, Rng& rng) {
  if (region.empty()) throw std::invalid_argument("sampling region is empty");
  double total = 0.0;
  for (const auto& iv : region) {
    if (!(iv.hi > iv.lo)) throw std::invalid_argument("sampling interval must have hi > lo");
    total += iv.hi - iv.lo;
  }
  std::uniform_real_distribution<double> u(0.0, total);
  double t = u(rng);
  for (const auto& iv : region) {
    const double len = iv.hi - iv.lo;
    if (t < len) return iv.lo + t;
    t -= len;
  }
  return region.back().hi;
}

Eigen::Vector2d sample_truncated_gaussian(const Eigen::Vector2d& mean, const Eigen::Matrix2d& chol,
                                          const std::function<bool(const Eigen::Vector2d&)>& accept,
                                          Rng& rng, std::size_t budget) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t tries = 0; tries <= budget; ++tries) {
    const double z0 = normal(rng);
    const double z1 = normal(rng);
    const Eigen::Vector2d v = mean + chol * Eigen::Vector2d(z0, z1);
    if (accept(v)) return v;
  }
  throw std::runtime_error(fmt::format("truncated sampling exceeded its budget of {} draws", budget));
}

Dataset gen_reg_mismatched(std::uint64_t seed, const SplitSpec& splits) {
  return make_regression("reg1", seed, splits, kReg1NoiseVariance, reg_mismatched_mean);
}

Dataset gen_reg_matched(std::uint64_t seed, const SplitSpec& splits) {
  return make_regression("reg2", seed, splits, kReg2NoiseVariance, reg_matched_mean);
}

Dataset gen_class_mismatched(std::uint64_t seed, const SplitSpec& splits) {
  ClassConditionals cc{{2.0, 2.0}, {-2.0, -2.0}, Eigen::Matrix2d::Identity(), false};
  return make_classification("class1", seed, splits, cc);
}

Dataset gen_class_matched(std::uint64_t seed, const SplitSpec& splits) {
  Eigen::Matrix2d cov;
  cov << 2.0, 1.0, 1.0, 2.0;
  const Eigen::Matrix2d chol = cov.llt().matrixL();
  ClassConditionals cc{{3.0, 0.0}, {-3.0, 0.0}, chol, true};
  return make_classification("class2", seed, splits, cc);
}

bool is_known_dataset(const std::string& id) {
  return id == "reg1" || id == "reg2" || id == "class1" || id == "class2";
}

bool is_regression_dataset(const std::string& id) { return id == "reg1" || id == "reg2"; }

Dataset generate_dataset(const std::string& id, std::uint64_t seed) {
  if (id == "reg1") return gen_reg_mismatched(seed);
  if (id == "reg2") return gen_reg_matched(seed);
  if (id == "class1") return gen_class_mismatched(seed);
  if (id == "class2") return gen_class_matched(seed);
  throw std::invalid_argument("unknown dataset '" + id + "'");
}

MlpSpec default_network(const std::string& id) {
  if (!is_known_dataset(id)) throw std::invalid_argument("unknown dataset '" + id + "'");
  return is_regression_dataset(id) ? MlpSpec({1, 50, 1}) : MlpSpec({2, 10, 10, 1});
}

Dataset evenly_spaced_grid(const std::string& id, std::size_t points) {
  if (points < 2) throw std::invalid_argument("grid needs at least two points per axis");
  Dataset d;
  d.generator = id + "-grid";
  if (is_regression_dataset(id)) {
    const bool first = id == "reg1";
    const double lo = first ? -4.0 : -6.0, hi = -lo;
    d.kind = TaskKind::regression;
    d.noise_sigma = std::sqrt(first ? kReg1NoiseVariance : kReg2NoiseVariance);
    d.x.resize(static_cast<Eigen::Index>(points), 1);
    d.y.resize(static_cast<Eigen::Index>(points), 1);
    for (std::size_t i = 0; i < points; ++i) {
      const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
      d.x(static_cast<Eigen::Index>(i), 0) = x;
      d.y(static_cast<Eigen::Index>(i), 0) = first ? reg_mismatched_mean(x) : reg_matched_mean(x);
    }
  } else if (is_known_dataset(id)) {
    d.kind = TaskKind::classification;
    const auto n = static_cast<Eigen::Index>(points * points);
    d.x.resize(n, 2);
    d.y = Matrix::Zero(n, 1);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < points; ++i) {
      for (std::size_t j = 0; j < points; ++j, ++row) {
        d.x(row, 0) = -6.0 + 12.0 * static_cast<double>(j) / static_cast<double>(points - 1);
        d.x(row, 1) = -6.0 + 12.0 * static_cast<double>(i) / static_cast<double>(points - 1);
      }
    }
  } else {
    throw std::invalid_argument("unknown dataset '" + id + "'");
  }
  d.split.assign(static_cast<std::size_t>(d.x.rows()), Split::test);
  return d;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  {
    auto out = fmt::output_file(path);
    for (Eigen::Index j = 0; j < dataset.x.cols(); ++j) out.print("x{},", j);
    out.print("y,split\n");
    for (Eigen::Index i = 0; i < dataset.size(); ++i) {
      for (Eigen::Index j = 0; j < dataset.x.cols(); ++j) out.print("{:.17g},", dataset.x(i, j));
      out.print("{:.17g},{}\n", dataset.y(i, 0), to_string(dataset.split[static_cast<std::size_t>(i)]));
    }
  }
  auto manifest = fmt::output_file(path + ".manifest");
  manifest.print("generator={} seed={} task={} noise_sigma={:.17g}\n", dataset.generator, dataset.seed,
                 dataset.kind == TaskKind::regression ? "regression" : "classification",
                 dataset.noise_sigma);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Dataset d;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw ParseError("empty dataset file", 1);
  const auto header = split_csv(line);
  if (header.size() < 3 || header[header.size() - 2] != "y" || header.back() != "split") {
    throw ParseError("header must be x0[,x1,...],y,split", 1);
  }
  const std::size_t x_cols = header.size() - 2;
  for (std::size_t j = 0; j < x_cols; ++j) {
    if (header[j] != "x" + std::to_string(j)) throw ParseError("unexpected column '" + header[j] + "'", 1);
  }

  std::vector<double> xs, ys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ParseError(fmt::format("expected {} fields, found {}", header.size(), cells.size()), line_no);
    }
    for (std::size_t j = 0; j < x_cols; ++j) xs.push_back(parse_number(cells[j], line_no));
    ys.push_back(parse_number(cells[x_cols], line_no));
    try {
      d.split.push_back(split_from_string(cells.back()));
    } catch (const std::invalid_argument&) {
      throw ParseError("unknown split '" + cells.back() + "'", line_no);
    }
  }
  const auto rows = static_cast<Eigen::Index>(ys.size());
  d.x.resize(rows, static_cast<Eigen::Index>(x_cols));
  d.y.resize(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < x_cols; ++j) {
      d.x(i, static_cast<Eigen::Index>(j)) = xs[static_cast<std::size_t>(i) * x_cols + j];
    }
    d.y(i, 0) = ys[static_cast<std::size_t>(i)];
  }

  d.kind = x_cols == 1 ? TaskKind::regression : TaskKind::classification;
  std::ifstream sidecar(path + ".manifest");
  if (sidecar && std::getline(sidecar, line)) {
    std::istringstream fields(line);
    std::string field;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw ParseError("sidecar field without '='", 1);
      const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
      if (key == "generator") d.generator = value;
      else if (key == "seed") d.seed = std::stoull(value);
      else if (key == "task") d.kind = value == "regression" ? TaskKind::regression : TaskKind::classification;
      else if (key == "noise_sigma") d.noise_sigma = std::strtod(value.c_str(), nullptr);
    }
  }
  return d;
}

}  // namespace bnn
