#include "placl/policy.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "placl/errors.hpp"
#include "placl/rng.hpp"

namespace placl::policy {
namespace {

constexpr long kMaxRejections = 1'000'000;

void check_lengths(std::span<const double> mu, std::span<const double> delta) {
  if (mu.size() != delta.size()) {
    throw InputError(fmt::format("policy has {} coordinates but the delta has {}", mu.size(), delta.size()));
  }
}

// Normalizer Z = Phi((1 - mu) / sigma) - Phi(-mu / sigma).
double mass(double mu, double sigma) { return normal_cdf((1.0 - mu) / sigma) - normal_cdf(-mu / sigma); }

double log_pdf_1d(double mu, double sigma, double x) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma * std::sqrt(2.0 * std::numbers::pi)) - std::log(mass(mu, sigma));
}

double dlog_pdf_dmu(double mu, double sigma, double x) {
  const double a = -mu / sigma;
  const double b = (1.0 - mu) / sigma;
  return (x - mu) / (sigma * sigma) + (normal_pdf(b) - normal_pdf(a)) / (sigma * mass(mu, sigma));
}

bool in_unit_box(std::span<const double> delta) {
  return std::all_of(delta.begin(), delta.end(), [](double x) { return x >= 0.0 && x <= 1.0; });
}

std::string join(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += fmt::format("{}{:.6f}", i ? " " : "", values[i]);
  return out;
}

std::vector<double> split_doubles(const std::string& field) {
  std::istringstream in(field);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  if (!in.eof()) throw InputError(fmt::format("malformed number list '{}'", field));
  return out;
}

}  // namespace

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

void PolicyState::validate() const {
  if (mu.empty()) throw ConfigError("policy mean must have at least one coordinate");
  if (!(sigma > 0.0)) throw ConfigError(fmt::format("policy sigma must be positive, got {}", sigma));
  for (double m : mu) {
    if (!(m >= 0.0 && m <= 1.0)) throw ConfigError(fmt::format("policy mean {} outside [0, 1]", m));
  }
}

double StepRecord::mean_score() const {
  if (scores.empty()) return 0.0;
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

std::vector<curriculum::CurriculumDelta> sample_deltas(const PolicyState& policy, int count, std::uint64_t seed) {
  policy.validate();
  if (count < 1) throw InputError(fmt::format("need at least one sample per step, got {}", count));
  rng::CounterRng gen(seed);
  std::vector<curriculum::CurriculumDelta> out(static_cast<std::size_t>(count));
  for (auto& d : out) {
    d.deltas.resize(policy.mu.size());
    for (std::size_t i = 0; i < policy.mu.size(); ++i) {
      long tries = 0;
      double x;
      do {
        if (++tries > kMaxRejections) {
          throw NumericalError(fmt::format("truncated-normal rejection sampler stalled at mu={} sigma={}",
                                           policy.mu[i], policy.sigma));
        }
        x = gen.normal(policy.mu[i], policy.sigma);
      } while (x < 0.0 || x > 1.0);
      d.deltas[i] = x;
    }
  }
  return out;
}

double pdf(double mu, double sigma, double x) {
  if (x < 0.0 || x > 1.0) return 0.0;
  return normal_pdf((x - mu) / sigma) / (sigma * mass(mu, sigma));
}

Density pdf(std::span<const double> mu, double sigma, std::span<const double> delta) {
  check_lengths(mu, delta);
  if (!in_unit_box(delta)) return {0.0, false};
  double p = 1.0;
  for (std::size_t i = 0; i < mu.size(); ++i) p *= pdf(mu[i], sigma, delta[i]);
  return {p, true};
}

double log_pdf(std::span<const double> mu, double sigma, std::span<const double> delta) {
  check_lengths(mu, delta);
  if (!in_unit_box(delta)) return -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += log_pdf_1d(mu[i], sigma, delta[i]);
  return s;
}

std::vector<double> log_pdf_gradient(std::span<const double> mu, double sigma, std::span<const double> delta) {
  check_lengths(mu, delta);
  std::vector<double> g(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) g[i] = dlog_pdf_dmu(mu[i], sigma, delta[i]);
  return g;
}

std::vector<double> normalize_rewards(std::span<const double> scores) {
  if (scores.empty()) throw InputError("cannot normalize an empty score list");
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  std::vector<double> out(scores.size());
  std::transform(scores.begin(), scores.end(), out.begin(), [mean](double s) { return s - mean; });
  return out;
}

double clip(double x, double lo, double hi) {
  if (lo > hi) throw InputError(fmt::format("clip bounds reversed: [{}, {}]", lo, hi));
  return std::min(std::max(x, lo), hi);
}

StepRecord make_record(const PolicyState& policy, std::vector<curriculum::CurriculumDelta> deltas,
                       std::vector<double> scores, int round) {
  if (deltas.size() != scores.size()) {
    throw InputError(fmt::format("{} deltas but {} scores", deltas.size(), scores.size()));
  }
  StepRecord r;
  r.round = round;
  r.step = policy.step;
  r.mu_old = policy.mu;
  r.normalized = normalize_rewards(scores);
  r.deltas = std::move(deltas);
  r.scores = std::move(scores);
  return r;
}

namespace {

// Probability ratio of sample j under mu_new versus the record's mu_old.
double ratio(std::span<const double> mu_new, const StepRecord& record, std::size_t j, double sigma) {
  const auto& d = record.deltas[j].deltas;
  const double old_lp = log_pdf(record.mu_old, sigma, d);
  if (!std::isfinite(old_lp)) {
    throw NumericalError(fmt::format("sample {} of step {} has zero density under the old policy", j, record.step));
  }
  return std::exp(log_pdf(mu_new, sigma, d) - old_lp);
}

void check_record(std::span<const double> mu_new, const StepRecord& record, double epsilon) {
  if (!(epsilon > 0.0)) throw InputError(fmt::format("clip epsilon must be positive, got {}", epsilon));
  if (record.deltas.empty() || record.deltas.size() != record.normalized.size()) {
    throw InputError("step record needs one normalized score per sampled delta");
  }
  if (mu_new.size() != record.mu_old.size()) {
    throw InputError(fmt::format("mean has {} coordinates, record has {}", mu_new.size(), record.mu_old.size()));
  }
}

}  // namespace

double ppo2_objective(std::span<const double> mu_new, const StepRecord& record, double sigma, double epsilon) {
  check_record(mu_new, record, epsilon);
  double total = 0.0;
  for (std::size_t j = 0; j < record.deltas.size(); ++j) {
    const double r = ratio(mu_new, record, j, sigma);
    const double a = record.normalized[j];
    total += std::min(r * a, clip(r, 1.0 - epsilon, 1.0 + epsilon) * a);
  }
  return total / static_cast<double>(record.deltas.size());
}

std::vector<double> ppo2_gradient(std::span<const double> mu_new, const StepRecord& record, double sigma,
                                  double epsilon) {
  check_record(mu_new, record, epsilon);
  std::vector<double> grad(mu_new.size(), 0.0);
  for (std::size_t j = 0; j < record.deltas.size(); ++j) {
    const double r = ratio(mu_new, record, j, sigma);
    const double a = record.normalized[j];
    // The clipped branch is the minimum only once r has left the trust
    // interval on the side that would increase the objective; its slope is 0.
    const bool clipped = (a > 0.0 && r > 1.0 + epsilon) || (a < 0.0 && r < 1.0 - epsilon);
    if (clipped || a == 0.0) continue;
    const auto g = log_pdf_gradient(mu_new, sigma, record.deltas[j].deltas);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += a * r * g[i];
  }
  for (double& g : grad) g /= static_cast<double>(record.deltas.size());
  return grad;
}

PolicyState update_mean(const PolicyState& policy, const StepRecord& record, double alpha, double epsilon) {
  policy.validate();
  if (record.mu_old != policy.mu) throw InputError("step record was not produced by this policy state");
  const auto grad = ppo2_gradient(policy.mu, record, policy.sigma, epsilon);
  PolicyState next = policy;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalError(fmt::format("non-finite policy gradient at coordinate {} (mu={}, sigma={}, step={})", i,
                                       policy.mu[i], policy.sigma, policy.step));
    }
    next.mu[i] = std::clamp(policy.mu[i] + alpha * grad[i], 0.0, 1.0);
  }
  ++next.step;
  return next;
}

std::size_t best_step_index(std::span<const StepRecord> history) {
  if (history.empty()) throw InputError("best_step needs a non-empty history");
  std::size_t best = 0;
  double best_mean = history[0].mean_score();
  for (std::size_t t = 1; t < history.size(); ++t) {
    const double m = history[t].mean_score();
    if (m > best_mean) {
      best = t;
      best_mean = m;
    }
  }
  return best;
}

std::vector<double> best_step(std::span<const StepRecord> history) { return history[best_step_index(history)].mu_old; }

std::string format_log_row(const StepRecord& record) {
  return fmt::format("{}\t{}\t{}\t{}\t{:.6f}", record.round, record.step, join(record.mu_old), join(record.scores),
                     record.mean_score());
}

LogRow parse_log_row(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string f;
  while (std::getline(in, f, '\t')) fields.push_back(f);
  if (fields.size() != 5) throw InputError(fmt::format("search log row has {} fields, expected 5", fields.size()));
  LogRow row;
  try {
    row.round = std::stoi(fields[0]);
    row.step = std::stoi(fields[1]);
    row.mean_score = std::stod(fields[4]);
  } catch (const std::exception&) {
    throw InputError(fmt::format("malformed search log row '{}'", line));
  }
  row.mu = split_doubles(fields[2]);
  row.scores = split_doubles(fields[3]);
  return row;
}

}  // namespace placl::policy
