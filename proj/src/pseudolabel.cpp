#include "placl/pseudolabel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "placl/errors.hpp"

namespace placl::pseudo {

Aggregate parse_aggregate(const std::string& name) {
  if (name == "mean") return Aggregate::mean;
  if (name == "min") return Aggregate::min;
  throw ConfigError(fmt::format("unknown confidence aggregate '{}' (expected mean or min)", name));
}

std::string to_string(Aggregate aggregate) { return aggregate == Aggregate::mean ? "mean" : "min"; }

PseudoLabeledSet predict_pseudo_labels(const learner::Learner& learner, std::span<const synth::KeypointSample> partition,
                                       int source_round, int source_partition) {
  if (learner.step() == 0) throw StateError("cannot predict pseudo-labels with an untrained learner");
  PseudoLabeledSet set;
  set.source_round = source_round;
  set.source_partition = source_partition;
  set.entries.reserve(partition.size());
  const int image_size = learner.config().image_size;
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < partition.size(); begin += kChunk) {
    const std::size_t end = std::min(partition.size(), begin + kChunk);
    std::vector<const Image*> images;
    for (std::size_t i = begin; i < end; ++i) images.push_back(&partition[i].image());
    const auto maps = learner.forward_batch(images);
    for (std::size_t i = begin; i < end; ++i) {
      set.entries.push_back({&partition[i], learner::decode(maps[i - begin], image_size)});
    }
  }
  return set;
}

double image_confidence(const learner::PseudoLabel& label, Aggregate aggregate) {
  const auto& c = label.confidences;
  if (c.empty()) throw InputError("pseudo-label has no keypoints");
  if (aggregate == Aggregate::min) return *std::min_element(c.begin(), c.end());
  return std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
}

SelectionMask select(const PseudoLabeledSet& set, double gamma, Aggregate aggregate) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InputError(fmt::format("threshold {} outside [0, 1]", gamma));
  SelectionMask g(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) g[i] = image_confidence(set.entries[i].label, aggregate) > gamma;
  return g;
}

std::vector<learner::TrainExample> assemble_train_set(std::span<const synth::KeypointSample> labeled,
                                                      const PseudoLabeledSet& set, const SelectionMask& mask) {
  if (mask.size() != set.size()) {
    throw InputError(fmt::format("mask has {} bits but the pseudo-labeled set has {} entries", mask.size(), set.size()));
  }
  std::vector<learner::TrainExample> out;
  out.reserve(labeled.size() + set.size());
  for (const auto& s : labeled) out.push_back({&s.image(), s.keypoints()});
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (mask[i]) out.push_back({&set.entries[i].sample->image(), set.entries[i].label.keypoints});
  }
  return out;
}

std::vector<std::size_t> InnerLoopResult::selection_counts() const {
  std::vector<std::size_t> out;
  for (const auto& g : groups) out.push_back(g.selected);
  return out;
}

InnerLoopResult inner_loop_train(std::span<const synth::KeypointSample> labeled, const PseudoLabeledSet& set,
                                 const curriculum::Curriculum& curriculum, const learner::LearnerConfig& config,
                                 const InnerLoopOptions& options, std::uint64_t seed) {
  if (options.group_size < 1 || options.epochs < 1 || options.epochs % options.group_size != 0) {
    throw ConfigError(fmt::format("epochs ({}) must be a positive multiple of group_size ({})", options.epochs,
                                  options.group_size));
  }
  const auto num_groups = static_cast<std::size_t>(options.epochs / options.group_size);
  if (curriculum.thresholds.size() != num_groups) {
    throw InputError(fmt::format("curriculum has {} thresholds but training has {} epoch groups",
                                 curriculum.thresholds.size(), num_groups));
  }
  if (labeled.empty()) throw InputError("inner loop needs at least one labeled sample");

  std::vector<double> confidence(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) confidence[i] = image_confidence(set.entries[i].label, options.aggregate);

  InnerLoopResult result{learner::Learner(config, seed), {}};
  SelectionMask previous;
  std::vector<learner::TrainExample> train;
  for (std::size_t g = 0; g < curriculum.thresholds.size(); ++g) {
    const double gamma = curriculum.thresholds[g];
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InputError(fmt::format("threshold {} outside [0, 1]", gamma));
    SelectionMask mask(set.size());
    GroupDiagnostics diag;
    diag.group = static_cast<int>(g);
    diag.gamma = gamma;
    double conf_sum = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      mask[i] = confidence[i] > gamma;
      if (mask[i]) {
        ++diag.selected;
        conf_sum += confidence[i];
      }
    }
    diag.mean_selected_confidence = diag.selected ? conf_sum / static_cast<double>(diag.selected) : 0.0;
    if (g == 0 || mask != previous) train = assemble_train_set(labeled, set, mask);
    previous = std::move(mask);
    diag.losses = result.learner.train_epochs(train, options.group_size, options.batch_size);
    result.groups.push_back(std::move(diag));
  }
  return result;
}

std::string format_diagnostics(std::span<const GroupDiagnostics> groups) {
  std::string out = "group\tgamma\tselected\tmean_conf\tloss_first\tloss_last\n";
  for (const auto& g : groups) {
    const double first = g.losses.empty() ? 0.0 : g.losses.front();
    const double last = g.losses.empty() ? 0.0 : g.losses.back();
    out += fmt::format("{}\t{:.6f}\t{}\t{:.6f}\t{:.6f}\t{:.6f}\n", g.group, g.gamma, g.selected,
                       g.mean_selected_confidence, first, last);
  }
  return out;
}

}  // namespace placl::pseudo
