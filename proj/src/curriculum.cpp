#include "placl/curriculum.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "placl/errors.hpp"

namespace placl::curriculum {

double Curriculum::mean() const {
  if (thresholds.empty()) return 0.0;
  return std::accumulate(thresholds.begin(), thresholds.end(), 0.0) / static_cast<double>(thresholds.size());
}

Curriculum zeros(std::size_t num_groups) { return constant(num_groups, 0.0, 0); }

Curriculum constant(std::size_t num_groups, double threshold, int round) {
  if (num_groups == 0) throw InputError("a curriculum needs at least one epoch group");
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw InputError(fmt::format("threshold {} outside [0, 1]", threshold));
  }
  return Curriculum{std::vector<double>(num_groups, threshold), round};
}

Curriculum compose(const Curriculum& base, const CurriculumDelta& delta) {
  if (base.thresholds.size() != delta.deltas.size()) {
    throw InputError(fmt::format("cannot compose a {}-group curriculum with a {}-group delta",
                                 base.thresholds.size(), delta.deltas.size()));
  }
  Curriculum out{std::vector<double>(base.thresholds.size()), base.round + 1};
  for (std::size_t i = 0; i < out.thresholds.size(); ++i) {
    out.thresholds[i] = std::clamp(base.thresholds[i] + delta.deltas[i], 0.0, 1.0);
  }
  return out;
}

double threshold_for_epoch(const Curriculum& curriculum, int epoch, int group_size) {
  if (group_size < 1) throw InputError(fmt::format("group size must be positive, got {}", group_size));
  const long total = static_cast<long>(curriculum.thresholds.size()) * group_size;
  if (epoch < 0 || epoch >= total) {
    throw InputError(fmt::format("epoch {} outside [0, {})", epoch, total));
  }
  return curriculum.thresholds[static_cast<std::size_t>(epoch / group_size)];
}

std::string format_line(const Curriculum& curriculum) {
  std::string line = std::to_string(curriculum.round);
  for (double t : curriculum.thresholds) line += fmt::format(" {:.6f}", t);
  return line;
}

Curriculum parse_line(const std::string& line) {
  std::istringstream in(line);
  Curriculum c;
  if (!(in >> c.round)) throw InputError(fmt::format("malformed curriculum line '{}'", line));
  double t;
  while (in >> t) {
    if (!(t >= 0.0 && t <= 1.0)) throw InputError(fmt::format("threshold {} outside [0, 1] in '{}'", t, line));
    c.thresholds.push_back(t);
  }
  if (!in.eof()) throw InputError(fmt::format("malformed curriculum line '{}'", line));
  if (c.thresholds.empty()) throw InputError(fmt::format("curriculum line '{}' has no thresholds", line));
  return c;
}

void write_curricula(const std::filesystem::path& path, const std::vector<Curriculum>& curricula) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
  for (const auto& c : curricula) out << format_line(c) << '\n';
  if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

std::vector<Curriculum> read_curricula(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open curricula file {}", path.string()));
  std::vector<Curriculum> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(parse_line(line));
  }
  return out;
}

}  // namespace placl::curriculum
