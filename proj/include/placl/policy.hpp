#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "placl/curriculum.hpp"

namespace placl::policy {

double normal_pdf(double z);
double normal_cdf(double z);

// Diagonal normal N(mu, sigma^2 I) truncated to the unit box.
struct PolicyState {
  std::vector<double> mu;
  double sigma = 0.2;
  int step = 0;

  void validate() const;

  friend bool operator==(const PolicyState&, const PolicyState&) = default;
};

// One sampling step: the deltas drawn from the policy with mean mu_old, their
// raw scores and the mean-subtracted scores.
struct StepRecord {
  int round = 0;
  int step = 0;
  std::vector<double> mu_old;
  std::vector<curriculum::CurriculumDelta> deltas;
  std::vector<double> scores;
  std::vector<double> normalized;

  double mean_score() const;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

// M independent draws, each coordinate by rejection from N(mu_i, sigma^2)
// until it lands in [0, 1].
std::vector<curriculum::CurriculumDelta> sample_deltas(const PolicyState& policy, int count, std::uint64_t seed);

struct Density {
  double value = 0.0;
  bool in_support = true;
};

// Product of per-coordinate truncated-normal densities. Points outside the
// unit box get density 0 with in_support = false.
Density pdf(std::span<const double> mu, double sigma, std::span<const double> delta);
double pdf(double mu, double sigma, double x);

// Log density and its gradient with respect to mu.
double log_pdf(std::span<const double> mu, double sigma, std::span<const double> delta);
std::vector<double> log_pdf_gradient(std::span<const double> mu, double sigma, std::span<const double> delta);

std::vector<double> normalize_rewards(std::span<const double> scores);

double clip(double x, double lo, double hi);

StepRecord make_record(const PolicyState& policy, std::vector<curriculum::CurriculumDelta> deltas,
                       std::vector<double> scores, int round = 0);

// Clipped surrogate: mean_j min(r_j * a_j, clip(r_j, 1 - eps, 1 + eps) * a_j)
// where r_j = pdf(mu_new, delta_j) / pdf(mu_old, delta_j) and a_j are the
// normalized scores.
double ppo2_objective(std::span<const double> mu_new, const StepRecord& record, double sigma, double epsilon);
std::vector<double> ppo2_gradient(std::span<const double> mu_new, const StepRecord& record, double sigma,
                                  double epsilon);

// One gradient-ascent step on the surrogate at mu_new = mu_old, clamped to
// [0, 1]. Throws NumericalError on a non-finite gradient.
PolicyState update_mean(const PolicyState& policy, const StepRecord& record, double alpha, double epsilon);

// Index of the record with the highest mean raw score; earliest wins ties.
std::size_t best_step_index(std::span<const StepRecord> history);
std::vector<double> best_step(std::span<const StepRecord> history);

// Search log row: round, step, mu, scores and mean score, tab separated, with
// vector entries space separated at six decimals.
std::string format_log_row(const StepRecord& record);
inline constexpr const char* kSearchLogHeader = "round\tstep\tmu\tscores\tmean_score";

struct LogRow {
  int round = 0;
  int step = 0;
  std::vector<double> mu;
  std::vector<double> scores;
  double mean_score = 0.0;
};
LogRow parse_log_row(const std::string& line);

}  // namespace placl::policy
