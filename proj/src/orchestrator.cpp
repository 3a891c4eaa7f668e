#include "placl/orchestrator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <thread>

#include "placl/errors.hpp"
#include "placl/rng.hpp"

namespace placl::orch {
namespace {

using nlohmann::json;

constexpr std::uint64_t kPretrainTag = 0x9E7A;
constexpr std::uint64_t kPartitionTag = 0x9A27;
constexpr std::uint64_t kSampleTag = 0x5A3F;
constexpr std::uint64_t kFinalTag = 0xF1A1;
constexpr std::uint64_t kProxyTag = 0x9B0C;

std::uint64_t final_seed(const SearchConfig& c, int round) {
  return rng::derive_seed({c.seed, static_cast<std::uint64_t>(round), kFinalTag});
}

std::vector<learner::TrainExample> labeled_examples(const synth::SampleList& labeled) {
  std::vector<learner::TrainExample> out;
  out.reserve(labeled.size());
  for (const auto& s : labeled) out.push_back({&s.image(), s.keypoints()});
  return out;
}

learner::Learner train_labeled_only(const synth::DatasetSplit& split, const SearchConfig& config, std::uint64_t seed) {
  if (split.labeled.empty()) throw InputError("the labeled split is empty");
  learner::Learner l(config.learner, seed);
  const auto examples = labeled_examples(split.labeled);
  l.train_epochs(examples, config.epochs, config.batch_size);
  return l;
}

// Broadcasts a one-coordinate delta over every epoch group.
curriculum::CurriculumDelta expand(const curriculum::CurriculumDelta& d, std::size_t num_groups) {
  if (d.deltas.size() == num_groups) return d;
  return {std::vector<double>(num_groups, d.deltas.at(0))};
}

std::string join(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += fmt::format("{}{:.6f}", i ? " " : "", v[i]);
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::istringstream in(s);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

}  // namespace

void SearchConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("SearchConfig." + msg); };
  if (rounds < 0) fail(fmt::format("rounds must be >= 0, got {}", rounds));
  if (steps < 1) fail(fmt::format("steps must be >= 1, got {}", steps));
  if (samples < 1) fail(fmt::format("samples must be >= 1, got {}", samples));
  if (group_size < 1) fail(fmt::format("group_size must be >= 1, got {}", group_size));
  if (epochs < 1 || epochs % group_size != 0) {
    fail(fmt::format("epochs ({}) must be a positive multiple of group_size ({})", epochs, group_size));
  }
  if (!(epsilon > 0.0)) fail(fmt::format("epsilon must be > 0, got {}", epsilon));
  if (!(alpha > 0.0)) fail(fmt::format("alpha must be > 0, got {}", alpha));
  if (!(sigma > 0.0)) fail(fmt::format("sigma must be > 0, got {}", sigma));
  if (!(mu_init >= 0.0 && mu_init <= 1.0)) fail(fmt::format("mu_init must lie in [0, 1], got {}", mu_init));
  if (parallelism < 1) fail(fmt::format("parallelism must be >= 1, got {}", parallelism));
  if (batch_size < 1) fail(fmt::format("batch_size must be >= 1, got {}", batch_size));
  if (!(pck_alpha > 0.0)) fail(fmt::format("pck_alpha must be > 0, got {}", pck_alpha));
  learner.validate();
}

void apply_environment(SearchConfig& config) {
  const char* env = std::getenv("PLACL_PARALLELISM");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 4096) {
    throw ConfigError(fmt::format("PLACL_PARALLELISM must be a positive integer, got '{}'", env));
  }
  config.parallelism = static_cast<int>(v);
}

std::string config_to_json(const SearchConfig& c) {
  const auto& l = c.learner;
  json j = {
      {"rounds", c.rounds},
      {"steps", c.steps},
      {"samples", c.samples},
      {"group_size", c.group_size},
      {"epochs", c.epochs},
      {"epsilon", c.epsilon},
      {"alpha", c.alpha},
      {"sigma", c.sigma},
      {"mu_init", c.mu_init},
      {"seed", c.seed},
      {"parallelism", c.parallelism},
      {"batch_size", c.batch_size},
      {"pck_alpha", c.pck_alpha},
      {"aggregate", pseudo::to_string(c.aggregate)},
      {"learner",
       {{"image_size", l.image_size},
        {"num_keypoints", l.num_keypoints},
        {"conv_channels", l.conv_channels},
        {"kernel_size", l.kernel_size},
        {"heatmap_size", l.heatmap_size},
        {"target_sigma", l.target_sigma},
        {"learning_rate", l.learning_rate},
        {"decay_epochs", l.decay_epochs},
        {"decay_factor", l.decay_factor},
        {"leaky_slope", l.leaky_slope},
        {"adam_beta1", l.adam_beta1},
        {"adam_beta2", l.adam_beta2},
        {"adam_eps", l.adam_eps}}},
  };
  return j.dump(2) + "\n";
}

namespace {

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& scope) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}.{}: {}", scope, key, e.what()));
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& scope) {
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(fmt::format("unknown configuration key {}.{}", scope, key));
    }
  }
}

}  // namespace

SearchConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("configuration is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  reject_unknown(j,
                 {"rounds", "steps", "samples", "group_size", "epochs", "epsilon", "alpha", "sigma", "mu_init", "seed",
                  "parallelism", "batch_size", "pck_alpha", "aggregate", "learner"},
                 "SearchConfig");
  SearchConfig c;
  const std::string s = "SearchConfig";
  read_field(j, "rounds", c.rounds, s);
  read_field(j, "steps", c.steps, s);
  read_field(j, "samples", c.samples, s);
  read_field(j, "group_size", c.group_size, s);
  read_field(j, "epochs", c.epochs, s);
  read_field(j, "epsilon", c.epsilon, s);
  read_field(j, "alpha", c.alpha, s);
  read_field(j, "sigma", c.sigma, s);
  read_field(j, "mu_init", c.mu_init, s);
  read_field(j, "seed", c.seed, s);
  read_field(j, "parallelism", c.parallelism, s);
  read_field(j, "batch_size", c.batch_size, s);
  read_field(j, "pck_alpha", c.pck_alpha, s);
  if (j.contains("aggregate")) {
    std::string agg;
    read_field(j, "aggregate", agg, s);
    c.aggregate = pseudo::parse_aggregate(agg);
  }
  if (j.contains("learner")) {
    const auto& lj = j.at("learner");
    if (!lj.is_object()) throw ConfigError("SearchConfig.learner must be an object");
    reject_unknown(lj,
                   {"image_size", "num_keypoints", "conv_channels", "kernel_size", "heatmap_size", "target_sigma",
                    "learning_rate", "decay_epochs", "decay_factor", "leaky_slope", "adam_beta1", "adam_beta2",
                    "adam_eps"},
                   "LearnerConfig");
    auto& l = c.learner;
    const std::string ls = "LearnerConfig";
    read_field(lj, "image_size", l.image_size, ls);
    read_field(lj, "num_keypoints", l.num_keypoints, ls);
    read_field(lj, "conv_channels", l.conv_channels, ls);
    read_field(lj, "kernel_size", l.kernel_size, ls);
    read_field(lj, "heatmap_size", l.heatmap_size, ls);
    read_field(lj, "target_sigma", l.target_sigma, ls);
    read_field(lj, "learning_rate", l.learning_rate, ls);
    read_field(lj, "decay_epochs", l.decay_epochs, ls);
    read_field(lj, "decay_factor", l.decay_factor, ls);
    read_field(lj, "leaky_slope", l.leaky_slope, ls);
    read_field(lj, "adam_beta1", l.adam_beta1, ls);
    read_field(lj, "adam_beta2", l.adam_beta2, ls);
    read_field(lj, "adam_eps", l.adam_eps, ls);
  }
  c.validate();
  return c;
}

SearchConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open configuration file {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

void parallel_for(std::size_t count, int parallelism, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, parallelism)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = count;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

std::pair<synth::SampleList, synth::SampleList> partition_unlabeled(const synth::SampleList& unlabeled,
                                                                     std::uint64_t seed) {
  if (unlabeled.size() < 2) {
    throw InputError(fmt::format("cross-training needs at least 2 unlabeled samples, got {}", unlabeled.size()));
  }
  std::vector<std::size_t> order(unlabeled.size());
  std::iota(order.begin(), order.end(), 0);
  rng::CounterRng gen(seed);
  rng::shuffle(std::span(order), gen);
  const std::size_t half = unlabeled.size() / 2;
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
  std::pair<synth::SampleList, synth::SampleList> out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < half ? out.first : out.second).push_back(unlabeled[order[i]]);
  return out;
}

RoundSearch search_round(const curriculum::Curriculum& base, int round, const SearchConfig& config, SearchMode mode,
                         const CandidateEvaluator& evaluate) {
  if (mode == SearchMode::replay) throw InputError("search_round cannot run in replay mode");
  if (!evaluate) throw InputError("search_round needs a candidate evaluator");
  const std::size_t groups = base.thresholds.size();
  const std::size_t dim = mode == SearchMode::fixed_threshold ? 1 : groups;
  const auto r = static_cast<std::uint64_t>(round);

  RoundSearch out;
  policy::PolicyState pol{std::vector<double>(dim, config.mu_init), config.sigma, 0};
  std::optional<std::pair<double, curriculum::Curriculum>> best_single;

  for (int t = 0; t < config.steps; ++t) {
    const auto ts = static_cast<std::uint64_t>(t);
    std::vector<curriculum::CurriculumDelta> deltas;
    const std::uint64_t sample_seed = rng::derive_seed({config.seed, r, ts, kSampleTag});
    if (mode == SearchMode::random) {
      rng::CounterRng gen(sample_seed);
      deltas.resize(static_cast<std::size_t>(config.samples));
      for (auto& d : deltas) {
        d.deltas.resize(dim);
        for (double& x : d.deltas) x = gen.uniform();
      }
    } else {
      deltas = policy::sample_deltas(pol, config.samples, sample_seed);
    }
    std::vector<curriculum::Curriculum> candidates;
    for (const auto& d : deltas) {
      candidates.push_back(curriculum::compose(base, expand(d, groups)));
      candidates.back().round = round;
    }
    std::vector<double> scores(candidates.size());
    parallel_for(candidates.size(), config.parallelism, [&](std::size_t j) {
      scores[j] = evaluate(candidates[j], rng::derive_seed({config.seed, r, ts, static_cast<std::uint64_t>(j)}));
    });
    out.candidate_trainings += candidates.size();

    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (!best_single || scores[j] > best_single->first) best_single.emplace(scores[j], candidates[j]);
    }
    auto record = policy::make_record(pol, std::move(deltas), std::move(scores), round);
    record.step = t;
    if (mode != SearchMode::random) {
      pol = policy::update_mean(pol, record, config.alpha, config.epsilon);
      ++out.policy_updates;
    }
    out.history.push_back(std::move(record));
  }

  if (mode == SearchMode::random) {
    out.best = best_single->second;
  } else {
    out.best = curriculum::compose(base, expand({policy::best_step(out.history)}, groups));
  }
  out.best.round = round;
  return out;
}

std::uint64_t fingerprint(std::span<const double> values) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

std::uint64_t fingerprint(const synth::SampleList& samples) {
  std::vector<double> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(static_cast<double>(s.id()));
  return fingerprint(ids);
}

RoundOutcome run_round(const RoundState& state, const synth::DatasetSplit& split, const SearchConfig& config,
                       const VariantSpec& variant, const CandidateEvaluator& evaluator) {
  if (state.previous == nullptr || state.pool == nullptr) throw InputError("run_round needs a previous learner and a pool");
  if (state.round < 1) throw InputError(fmt::format("rounds are numbered from 1, got {}", state.round));
  if (state.base.thresholds.size() != static_cast<std::size_t>(config.num_groups())) {
    throw InputError(fmt::format("base curriculum has {} groups, configuration has {}", state.base.thresholds.size(),
                                 config.num_groups()));
  }
  const auto opts = config.inner_options();

  RoundPlan plan;
  plan.round = state.round;
  plan.active_partition = state.active_partition;
  plan.partition_fingerprint = fingerprint(*state.pool);
  plan.base_curriculum = state.base;
  plan.pseudo_set = pseudo::predict_pseudo_labels(*state.previous, *state.pool, state.round, state.active_partition);
  plan.pseudo_quality = metrics::pseudo_label_quality(plan.pseudo_set, config.pck_alpha);

  std::vector<policy::StepRecord> history;
  if (variant.mode == SearchMode::replay) {
    if (variant.replay.size() < static_cast<std::size_t>(state.round)) {
      throw InputError(fmt::format("replay has {} curricula, round {} needs one", variant.replay.size(), state.round));
    }
    plan.best_curriculum = variant.replay[static_cast<std::size_t>(state.round - 1)];
    plan.best_curriculum.round = state.round;
  } else {
    CandidateEvaluator eval = evaluator;
    if (!eval) {
      eval = [&](const curriculum::Curriculum& c, std::uint64_t seed) {
        const auto res = pseudo::inner_loop_train(split.labeled, plan.pseudo_set, c, config.learner, opts, seed);
        return metrics::evaluate(res.learner, split.validation, config.pck_alpha).pck;
      };
    }
    auto rs = search_round(state.base, state.round, config, variant.mode, eval);
    plan.best_curriculum = rs.best;
    plan.policy_updates = rs.policy_updates;
    plan.inner_trainings = rs.candidate_trainings;
    history = std::move(rs.history);
  }

  const std::uint64_t seed = final_seed(config, state.round);
  plan.initial_fingerprint = fingerprint(learner::Learner(config.learner, seed).parameters());
  auto trained = pseudo::inner_loop_train(split.labeled, plan.pseudo_set, plan.best_curriculum, config.learner, opts, seed);
  ++plan.inner_trainings;
  plan.final_fingerprint = fingerprint(trained.learner.parameters());
  plan.diagnostics = std::move(trained.groups);
  plan.val_score = metrics::evaluate(trained.learner, split.validation, config.pck_alpha).pck;
  plan.test_score = metrics::evaluate(trained.learner, split.test, config.pck_alpha).pck;
  return RoundOutcome{std::move(plan), std::move(trained.learner), std::move(history)};
}

learner::Learner pretrain(const synth::DatasetSplit& split, const SearchConfig& config) {
  config.validate();
  return train_labeled_only(split, config, rng::derive_seed({config.seed, kPretrainTag}));
}

learner::Learner supervised_baseline(const synth::DatasetSplit& split, const SearchConfig& config) {
  config.validate();
  return train_labeled_only(split, config, final_seed(config, std::max(config.rounds, 1)));
}

namespace {

std::string format_round_row(const RoundPlan& p) {
  return fmt::format("{}\t{}\t{:016x}\t{}\t{}\t{:.6f}\t{:.6f}\t{}\t{}\t{}\t{:016x}\t{:016x}", p.round,
                     p.active_partition, p.partition_fingerprint, join(p.base_curriculum.thresholds),
                     join(p.best_curriculum.thresholds), p.val_score, p.test_score,
                     p.pseudo_quality ? fmt::format("{:.6f}", *p.pseudo_quality) : std::string(), p.policy_updates,
                     p.inner_trainings, p.initial_fingerprint, p.final_fingerprint);
}

void write_artifacts(const SearchResult& result, const SearchConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "checkpoints");
  std::filesystem::create_directories(dir / "diagnostics");
  write_text(dir / "config.json", config_to_json(config));
  std::string log = std::string(policy::kSearchLogHeader) + "\n";
  for (const auto& r : result.search_log) log += policy::format_log_row(r) + "\n";
  write_text(dir / "search_log.tsv", log);
  curriculum::write_curricula(dir / "curricula.txt", result.curricula);
  std::string rounds = std::string(kRoundsHeader) + "\n";
  for (const auto& p : result.rounds) {
    rounds += format_round_row(p) + "\n";
    write_text(dir / "diagnostics" / fmt::format("round_{}.tsv", p.round), pseudo::format_diagnostics(p.diagnostics));
  }
  write_text(dir / "rounds.tsv", rounds);
  metrics::write_results_csv(dir / "results.csv", result.rows);
}

}  // namespace

SearchResult run_variant(const synth::DatasetSplit& split, const SearchConfig& config, const VariantSpec& variant,
                         const RunOptions& options) {
  config.validate();
  if (variant.mode == SearchMode::replay && variant.replay.size() != static_cast<std::size_t>(config.rounds)) {
    throw ConfigError(fmt::format("replay variant '{}' has {} curricula for {} rounds", variant.name,
                                  variant.replay.size(), config.rounds));
  }
  learner::Learner pre = options.pretrained ? *options.pretrained : pretrain(split, config);
  if (pre.config() != config.learner) throw ConfigError("reused pretrained learner has a different architecture");

  SearchResult result{.variant = variant.name, .pretrained = pre, .final_learner = pre};
  result.pretrained_val = metrics::evaluate(pre, split.validation, config.pck_alpha).pck;
  result.pretrained_test = metrics::evaluate(pre, split.test, config.pck_alpha).pck;
  result.rows.push_back({variant.name, config.seed, 0, -1, result.pretrained_val, result.pretrained_test, {}, {}});

  if (variant.cross_training && config.rounds > 0) {
    result.partitions = std::make_shared<const std::pair<synth::SampleList, synth::SampleList>>(
        partition_unlabeled(split.unlabeled, rng::derive_seed({config.seed, kPartitionTag})));
  }
  if (options.run_dir) std::filesystem::create_directories(*options.run_dir / "checkpoints");
  if (options.run_dir) pre.save(*options.run_dir / "checkpoints" / "pretrained.ckpt");

  curriculum::Curriculum base = curriculum::zeros(static_cast<std::size_t>(config.num_groups()));
  for (int r = 1; r <= config.rounds; ++r) {
    RoundState state;
    state.round = r;
    state.base = base;
    state.previous = &result.final_learner;
    if (variant.cross_training) {
      state.active_partition = r % 2 == 1 ? 1 : 2;
      state.pool = state.active_partition == 1 ? &result.partitions->first : &result.partitions->second;
    } else {
      state.pool = &split.unlabeled;
    }
    auto outcome = run_round(state, split, config, variant);

    for (const auto& rec : outcome.history) {
      std::optional<double> mean_threshold;
      if (variant.mode == SearchMode::random) {
        double s = 0.0;
        for (const auto& d : rec.deltas) {
          s += curriculum::compose(base, expand(d, base.thresholds.size())).mean();
        }
        mean_threshold = s / static_cast<double>(rec.deltas.size());
      } else {
        mean_threshold = curriculum::compose(base, expand({rec.mu_old}, base.thresholds.size())).mean();
      }
      result.rows.push_back({variant.name, config.seed, r, rec.step, rec.mean_score(), {}, {}, mean_threshold});
    }
    auto& plan = outcome.plan;
    result.rows.push_back({variant.name, config.seed, r, -1, plan.val_score, plan.test_score, plan.pseudo_quality,
                           plan.best_curriculum.mean()});
    if (options.run_dir) {
      plan.checkpoint = *options.run_dir / "checkpoints" / fmt::format("round_{}.ckpt", r);
      outcome.learner.save(plan.checkpoint);
    }
    result.search_log.insert(result.search_log.end(), outcome.history.begin(), outcome.history.end());
    result.curricula.push_back(plan.best_curriculum);
    base = plan.best_curriculum;
    result.final_learner = std::move(outcome.learner);
    result.rounds.push_back(std::move(plan));
  }
  if (options.run_dir) {
    result.run_dir = *options.run_dir;
    write_artifacts(result, config, *options.run_dir);
  }
  return result;
}

SearchResult run_placl(const synth::DatasetSplit& split, const SearchConfig& config, const RunOptions& options) {
  return run_variant(split, config, VariantSpec{}, options);
}

ProxyResult run_proxy_then_retrain(const synth::DatasetSplit& split, std::size_t proxy_size,
                                   const SearchConfig& config, const RunOptions& options) {
  const std::size_t full = split.labeled.size() + split.unlabeled.size();
  if (proxy_size >= full) {
    throw ConfigError(fmt::format("proxy_size ({}) must be smaller than the full training set ({})", proxy_size, full));
  }
  if (proxy_size < split.labeled.size() + 2) {
    throw ConfigError(fmt::format("proxy_size ({}) must keep all {} labeled samples plus at least 2 unlabeled ones",
                                  proxy_size, split.labeled.size()));
  }
  synth::DatasetSplit proxy_split;
  proxy_split.labeled = split.labeled;
  proxy_split.validation = split.validation;
  proxy_split.test = split.test;
  std::vector<std::size_t> order(split.unlabeled.size());
  std::iota(order.begin(), order.end(), 0);
  rng::CounterRng gen(rng::derive_seed({config.seed, kProxyTag}));
  rng::shuffle(std::span(order), gen);
  order.resize(proxy_size - split.labeled.size());
  std::sort(order.begin(), order.end());
  for (std::size_t i : order) proxy_split.unlabeled.push_back(split.unlabeled[i]);

  RunOptions proxy_opts = options;
  RunOptions replay_opts = options;
  if (options.run_dir) {
    proxy_opts.run_dir = *options.run_dir / "proxy";
    replay_opts.run_dir = *options.run_dir / "replay";
  }
  auto proxy = run_variant(proxy_split, config, VariantSpec{"proxy_search", SearchMode::ppo2, true, {}}, proxy_opts);
  replay_opts.pretrained = &proxy.pretrained;
  auto replay = run_variant(split, config, VariantSpec{"proxy_replay", SearchMode::replay, true, proxy.curricula},
                            replay_opts);
  return ProxyResult{std::move(proxy), std::move(replay)};
}

curriculum::Curriculum manual_curriculum(int num_groups, double start, double end) {
  if (num_groups < 1) throw InputError("a curriculum needs at least one epoch group");
  curriculum::Curriculum c{std::vector<double>(static_cast<std::size_t>(num_groups)), 0};
  for (int g = 0; g < num_groups; ++g) {
    const double f = num_groups == 1 ? 0.0 : static_cast<double>(g) / (num_groups - 1);
    c.thresholds[static_cast<std::size_t>(g)] = std::clamp(start + (end - start) * f, 0.0, 1.0);
  }
  return c;
}

std::string static_variant_name(double gamma) { return fmt::format("static_{:.2f}", gamma); }

AblationResult run_ablation(const std::string& kind, const synth::DatasetSplit& split, const SearchConfig& config,
                            const RunOptions& options, double gamma) {
  config.validate();
  const auto groups = static_cast<std::size_t>(config.num_groups());
  auto sub = [&](const std::string& name) {
    RunOptions o = options;
    if (options.run_dir) o.run_dir = *options.run_dir / name;
    return o;
  };
  std::optional<learner::Learner> shared;
  RunOptions base_opts = options;
  if (!base_opts.pretrained && (kind == "manual_curriculum")) {
    shared.emplace(pretrain(split, config));
    base_opts.pretrained = &*shared;
  }

  if (kind == "no_cross_training") {
    auto r = run_variant(split, config, VariantSpec{kind, SearchMode::ppo2, false, {}}, options);
    return AblationResult{kind, std::move(r), {}};
  }
  if (kind == "fixed_threshold_search") {
    auto r = run_variant(split, config, VariantSpec{kind, SearchMode::fixed_threshold, true, {}}, options);
    return AblationResult{kind, std::move(r), {}};
  }
  if (kind == "random_search") {
    auto r = run_variant(split, config, VariantSpec{kind, SearchMode::random, true, {}}, options);
    return AblationResult{kind, std::move(r), {}};
  }
  if (kind == "static_threshold") {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError(fmt::format("static threshold {} outside [0, 1]", gamma));
    const auto name = static_variant_name(gamma);
    std::vector<curriculum::Curriculum> replay(static_cast<std::size_t>(config.rounds),
                                               curriculum::constant(groups, gamma));
    auto r = run_variant(split, config, VariantSpec{name, SearchMode::replay, true, replay}, options);
    return AblationResult{kind, std::move(r), {}};
  }
  if (kind == "manual_curriculum") {
    std::vector<SearchResult> candidates;
    for (double end : kManualEnds) {
      const auto name = fmt::format("manual_0.90_{:.2f}", end);
      std::vector<curriculum::Curriculum> replay(static_cast<std::size_t>(config.rounds),
                                                 manual_curriculum(config.num_groups(), 0.9, end));
      RunOptions o = sub(name);
      o.pretrained = base_opts.pretrained;
      candidates.push_back(run_variant(split, config, VariantSpec{name, SearchMode::replay, true, replay}, o));
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
      if (candidates[i].final_val() > candidates[best].final_val()) best = i;
    }
    SearchResult chosen = candidates[best];
    chosen.variant = kind;
    for (auto& row : chosen.rows) row.variant = kind;
    return AblationResult{kind, std::move(chosen), std::move(candidates)};
  }
  throw ConfigError(fmt::format("unknown ablation kind '{}' (expected no_cross_training, fixed_threshold_search, "
                                "random_search, manual_curriculum or static_threshold)",
                                kind));
}

std::vector<RoundLogRow> read_round_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open round log {}", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != kRoundsHeader) {
    throw InputError(fmt::format("{} does not start with the round log header", path.string()));
  }
  std::vector<RoundLogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '\t')) f.push_back(field);
    if (!line.empty() && line.back() == '\t') f.emplace_back();
    if (f.size() != 12) throw InputError(fmt::format("round log row has {} fields, expected 12", f.size()));
    try {
      RoundLogRow r;
      r.round = std::stoi(f[0]);
      r.partition = std::stoi(f[1]);
      r.partition_fingerprint = std::stoull(f[2], nullptr, 16);
      r.base = split_doubles(f[3]);
      r.best = split_doubles(f[4]);
      r.val_pck = std::stod(f[5]);
      r.test_pck = std::stod(f[6]);
      if (!f[7].empty()) r.pseudo_quality = std::stod(f[7]);
      r.policy_updates = std::stoi(f[8]);
      r.inner_trainings = std::stoull(f[9]);
      r.initial_fingerprint = std::stoull(f[10], nullptr, 16);
      r.final_fingerprint = std::stoull(f[11], nullptr, 16);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw InputError(fmt::format("malformed round log row '{}'", line));
    }
  }
  return rows;
}

}  // namespace placl::orch
