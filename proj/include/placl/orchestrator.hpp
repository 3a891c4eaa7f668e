#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "placl/curriculum.hpp"
#include "placl/learner.hpp"
#include "placl/metrics.hpp"
#include "placl/policy.hpp"
#include "placl/pseudolabel.hpp"
#include "placl/synthgen.hpp"

namespace placl::orch {

struct SearchConfig {
  int rounds = 6;         // R
  int steps = 16;         // T
  int samples = 8;        // M
  int group_size = 10;    // G
  int epochs = 30;        // N, per round
  double epsilon = 0.2;
  double alpha = 0.2;
  double sigma = 0.2;
  double mu_init = 0.05;  // initial policy mean, every coordinate, every round
  std::uint64_t seed = 0;
  int parallelism = 1;
  int batch_size = 8;
  double pck_alpha = 0.1;
  pseudo::Aggregate aggregate = pseudo::Aggregate::mean;
  learner::LearnerConfig learner;

  int num_groups() const { return epochs / group_size; }
  pseudo::InnerLoopOptions inner_options() const { return {epochs, group_size, batch_size, aggregate}; }

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Reads PLACL_PARALLELISM; a positive integer replaces config.parallelism.
void apply_environment(SearchConfig& config);

std::string config_to_json(const SearchConfig& config);
SearchConfig config_from_json(const std::string& text);
SearchConfig load_config(const std::filesystem::path& path);

// Runs fn(0) ... fn(count - 1) on up to `parallelism` threads. Results must
// be written to per-index slots; the first exception is rethrown after all
// workers finish.
void parallel_for(std::size_t count, int parallelism, const std::function<void(std::size_t)>& fn);

std::pair<synth::SampleList, synth::SampleList> partition_unlabeled(const synth::SampleList& unlabeled,
                                                                     std::uint64_t seed);

// How a round obtains its curriculum.
enum class SearchMode {
  ppo2,             // N_G-dimensional truncated-normal policy
  fixed_threshold,  // one scalar policy, broadcast to every group
  random,           // T*M uniform residuals, best single candidate
  replay,           // fixed curriculum per round, no search
};

struct VariantSpec {
  std::string name = "placl";
  SearchMode mode = SearchMode::ppo2;
  bool cross_training = true;
  std::vector<curriculum::Curriculum> replay;  // one per round for SearchMode::replay
};

// Scores one candidate curriculum; the seed identifies the task.
using CandidateEvaluator = std::function<double(const curriculum::Curriculum&, std::uint64_t)>;

struct RoundSearch {
  std::vector<policy::StepRecord> history;
  curriculum::Curriculum best;
  int policy_updates = 0;
  std::size_t candidate_trainings = 0;
};

// The outer loop of one round: T steps of M candidates composed onto `base`.
// Candidate (t, j) is scored with seed derive_seed(master, round, t, j).
RoundSearch search_round(const curriculum::Curriculum& base, int round, const SearchConfig& config, SearchMode mode,
                         const CandidateEvaluator& evaluate);

struct RoundPlan {
  int round = 0;
  int active_partition = 0;  // 0 when cross-training is off
  std::uint64_t partition_fingerprint = 0;
  curriculum::Curriculum base_curriculum;
  curriculum::Curriculum best_curriculum;
  pseudo::PseudoLabeledSet pseudo_set;  // borrows samples from the split
  std::optional<double> pseudo_quality;
  double val_score = 0.0;
  double test_score = 0.0;
  int policy_updates = 0;
  std::size_t inner_trainings = 0;
  std::uint64_t initial_fingerprint = 0;  // final learner, before training
  std::uint64_t final_fingerprint = 0;
  std::vector<pseudo::GroupDiagnostics> diagnostics;
  std::filesystem::path checkpoint;
};

struct RoundState {
  int round = 1;
  curriculum::Curriculum base;
  const learner::Learner* previous = nullptr;
  const synth::SampleList* pool = nullptr;  // samples to pseudo-label
  int active_partition = 0;
};

struct RoundOutcome {
  RoundPlan plan;
  learner::Learner learner;
  std::vector<policy::StepRecord> history;
};

// Pseudo-labels the pool with the previous learner, searches (or replays) the
// curriculum, and retrains one final learner with the chosen curriculum. When
// `evaluator` is empty, candidates are scored by real inner-loop training and
// validation PCK.
RoundOutcome run_round(const RoundState& state, const synth::DatasetSplit& split, const SearchConfig& config,
                       const VariantSpec& variant, const CandidateEvaluator& evaluator = {});

struct SearchResult {
  std::string variant;
  std::vector<curriculum::Curriculum> curricula{};
  learner::Learner pretrained;
  learner::Learner final_learner;
  std::vector<RoundPlan> rounds{};
  // Owns the cross-training halves that the rounds' pseudo sets point into.
  std::shared_ptr<const std::pair<synth::SampleList, synth::SampleList>> partitions{};
  std::vector<policy::StepRecord> search_log{};
  std::vector<metrics::ResultRow> rows{};
  double pretrained_val = 0.0;
  double pretrained_test = 0.0;
  std::filesystem::path run_dir{};

  double final_val() const { return rounds.empty() ? pretrained_val : rounds.back().val_score; }
  double final_test() const { return rounds.empty() ? pretrained_test : rounds.back().test_score; }
};

struct RunOptions {
  std::optional<std::filesystem::path> run_dir;  // artifacts are written when set
  const learner::Learner* pretrained = nullptr;  // reuse instead of retraining
};

learner::Learner pretrain(const synth::DatasetSplit& split, const SearchConfig& config);

// Labeled-only training with the seed of round R's final learner, so that a
// static threshold of 1.0 reproduces it exactly.
learner::Learner supervised_baseline(const synth::DatasetSplit& split, const SearchConfig& config);

SearchResult run_variant(const synth::DatasetSplit& split, const SearchConfig& config, const VariantSpec& variant,
                         const RunOptions& options = {});

SearchResult run_placl(const synth::DatasetSplit& split, const SearchConfig& config, const RunOptions& options = {});

// Searches on a subset keeping every labeled sample and proxy_size - N_l
// unlabeled ones, then replays the searched curricula on the full split.
struct ProxyResult {
  SearchResult proxy;
  SearchResult replay;
};
ProxyResult run_proxy_then_retrain(const synth::DatasetSplit& split, std::size_t proxy_size,
                                   const SearchConfig& config, const RunOptions& options = {});

// Linearly decreasing curricula from 0.9 down to each of these end points.
inline constexpr double kManualEnds[] = {0.7, 0.5, 0.3, 0.1, 0.0};
curriculum::Curriculum manual_curriculum(int num_groups, double start, double end);

struct AblationResult {
  std::string kind;
  SearchResult result;  // for manual_curriculum: the slope with the best final val PCK
  std::vector<SearchResult> candidates;
};

// kind: no_cross_training, fixed_threshold_search, random_search,
// manual_curriculum, or static_threshold (uses gamma).
AblationResult run_ablation(const std::string& kind, const synth::DatasetSplit& split, const SearchConfig& config,
                            const RunOptions& options = {}, double gamma = 0.0);

std::string static_variant_name(double gamma);

// FNV-1a over the raw bytes; used to fingerprint parameter vectors and
// partitions in the run log.
std::uint64_t fingerprint(std::span<const double> values);
std::uint64_t fingerprint(const synth::SampleList& samples);

// rounds.tsv row layout.
inline constexpr const char* kRoundsHeader =
    "round\tpartition\tpartition_fingerprint\tbase\tbest\tval_pck\ttest_pck\tpseudo_quality\tpolicy_updates\t"
    "inner_trainings\tinitial_fingerprint\tfinal_fingerprint";

struct RoundLogRow {
  int round = 0;
  int partition = 0;
  std::uint64_t partition_fingerprint = 0;
  std::vector<double> base;
  std::vector<double> best;
  double val_pck = 0.0;
  double test_pck = 0.0;
  std::optional<double> pseudo_quality;
  int policy_updates = 0;
  std::size_t inner_trainings = 0;
  std::uint64_t initial_fingerprint = 0;
  std::uint64_t final_fingerprint = 0;
};

std::vector<RoundLogRow> read_round_log(const std::filesystem::path& path);

}  // namespace placl::orch
