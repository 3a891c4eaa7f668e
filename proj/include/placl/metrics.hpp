#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "placl/learner.hpp"
#include "placl/pseudolabel.hpp"
#include "placl/synthgen.hpp"

namespace placl::metrics {

struct EvalReport {
  double pck = 0.0;
  std::vector<double> per_keypoint_pck;
  std::size_t n_samples = 0;
  double alpha = 0.1;
};

// A keypoint is correct iff its Euclidean distance to the truth is at most
// alpha times the sample's bounding-box longest side.
EvalReport pck(std::span<const Keypoints> predictions, std::span<const Keypoints> ground_truths,
               std::span<const double> bbox_sides, double alpha = 0.1);

// PCK of the learner's decoded predictions on samples with ground truth.
EvalReport evaluate(const learner::Learner& learner, std::span<const synth::KeypointSample> samples,
                    double alpha = 0.1);

// PCK of pseudo-labels against the hidden ground truth of their samples.
// Empty sets have no quality (nullopt). Throws StateError when a sample
// carries no ground truth.
std::optional<double> pseudo_label_quality(const pseudo::PseudoLabeledSet& set, double alpha = 0.1);

// One row of the results table. step is -1 for a round's final learner and
// the policy step index for per-step search rows. Absent values are written
// as empty fields.
struct ResultRow {
  std::string variant;
  std::uint64_t seed = 0;
  int round = 0;
  int step = -1;
  std::optional<double> val_pck;
  std::optional<double> test_pck;
  std::optional<double> pseudo_quality;
  std::optional<double> mean_threshold;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline constexpr const char* kResultsHeader =
    "variant,seed,round,step,val_pck,test_pck,pseudo_quality,mean_threshold";

std::string format_results_csv(std::span<const ResultRow> rows);
std::vector<ResultRow> parse_results_csv(const std::string& text);
void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

// Reads results.csv and curricula.txt from a run directory and writes
// score_curve.svg, thresholds.svg, pseudo_quality.svg and, when the table
// holds static-threshold rows, static_sweep.svg. Returns the written paths.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& run_dir);

}  // namespace placl::metrics
