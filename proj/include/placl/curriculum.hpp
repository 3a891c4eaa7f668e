#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace placl::curriculum {

// Thresholds for one self-training round, one per epoch group.
struct Curriculum {
  std::vector<double> thresholds;
  int round = 0;

  std::size_t num_groups() const { return thresholds.size(); }
  double mean() const;

  friend bool operator==(const Curriculum&, const Curriculum&) = default;
};

// Nonnegative residual added to the previous round's best curriculum.
struct CurriculumDelta {
  std::vector<double> deltas;

  friend bool operator==(const CurriculumDelta&, const CurriculumDelta&) = default;
};

Curriculum zeros(std::size_t num_groups);

// Constant curriculum, used for static-threshold baselines.
Curriculum constant(std::size_t num_groups, double threshold, int round = 0);

// Elementwise base + delta clamped to [0, 1]; round advances by one.
Curriculum compose(const Curriculum& base, const CurriculumDelta& delta);

double threshold_for_epoch(const Curriculum& curriculum, int epoch, int group_size);

// "round t_1 t_2 ... t_NG" with six decimals.
std::string format_line(const Curriculum& curriculum);
Curriculum parse_line(const std::string& line);

void write_curricula(const std::filesystem::path& path, const std::vector<Curriculum>& curricula);
std::vector<Curriculum> read_curricula(const std::filesystem::path& path);

}  // namespace placl::curriculum
