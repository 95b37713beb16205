#include "bnn/posterior.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/os.h>

#include "bnn/errors.hpp"

namespace bnn {

void write_samples_csv(const PosteriorSamples& samples, const std::string& path) {
  auto out = fmt::output_file(path);
  out.print("# method={} seed={} digest={} truncated={}\n", samples.method, samples.seed,
            samples.config_digest, samples.truncated ? 1 : 0);
  for (Eigen::Index s = 0; s < samples.size(); ++s) {
    for (Eigen::Index j = 0; j < samples.dim(); ++j) {
      if (j > 0) out.print(",");
      out.print("{:.17g}", samples.draws(s, j));
    }
    out.print("\n");
  }
}

PosteriorSamples read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  PosteriorSamples samples;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream header(line.substr(1));
      std::string field;
      while (header >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "method") samples.method = value;
        if (key == "seed") samples.seed = std::stoull(value);
        if (key == "digest") samples.config_digest = value;
        if (key == "truncated") samples.truncated = value == "1";
      }
      continue;
    }
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ParseError("bad number '" + cell + "'", line_no);
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("ragged sample row", line_no);
    }
    rows.push_back(std::move(row));
  }
  const auto cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  samples.draws.resize(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) samples.draws(static_cast<Eigen::Index>(r), c) = rows[r][c];
  }
  return samples;
}

}  // namespace bnn
