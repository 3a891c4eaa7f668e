#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "placl/curriculum.hpp"
#include "placl/learner.hpp"
#include "placl/synthgen.hpp"

namespace placl::pseudo {

// How the K keypoint confidences of one image collapse into the single score
// compared against the threshold.
enum class Aggregate { mean, min };

Aggregate parse_aggregate(const std::string& name);
std::string to_string(Aggregate aggregate);

struct Entry {
  const synth::KeypointSample* sample = nullptr;  // borrowed from the partition
  learner::PseudoLabel label;
};

struct PseudoLabeledSet {
  std::vector<Entry> entries;
  int source_round = 0;
  int source_partition = 1;

  std::size_t size() const { return entries.size(); }
};

using SelectionMask = std::vector<std::uint8_t>;

// Forward + decode on every sample of the partition. The samples must outlive
// the returned set. Throws StateError if the learner has never been trained.
PseudoLabeledSet predict_pseudo_labels(const learner::Learner& learner, std::span<const synth::KeypointSample> partition,
                                       int source_round = 0, int source_partition = 1);

double image_confidence(const learner::PseudoLabel& label, Aggregate aggregate = Aggregate::mean);

// g_i = 1 iff image_confidence(entry_i) > gamma.
SelectionMask select(const PseudoLabeledSet& set, double gamma, Aggregate aggregate = Aggregate::mean);

// Labeled samples with their annotations, then the selected entries with their
// pseudo-coordinates, both in source order.
std::vector<learner::TrainExample> assemble_train_set(std::span<const synth::KeypointSample> labeled,
                                                      const PseudoLabeledSet& set, const SelectionMask& mask);

struct InnerLoopOptions {
  int epochs = 30;
  int group_size = 10;
  int batch_size = 8;
  Aggregate aggregate = Aggregate::mean;
};

struct GroupDiagnostics {
  int group = 0;
  double gamma = 0.0;
  std::size_t selected = 0;
  double mean_selected_confidence = 0.0;  // 0 when nothing is selected
  std::vector<double> losses;             // one per epoch of the group
};

struct InnerLoopResult {
  learner::Learner learner;
  std::vector<GroupDiagnostics> groups;

  std::vector<std::size_t> selection_counts() const;
};

// Fresh learner trained for options.epochs epochs in groups of
// options.group_size; group g uses threshold curriculum.thresholds[g], so the
// curriculum must have epochs / group_size entries. Pseudo-labels stay fixed.
InnerLoopResult inner_loop_train(std::span<const synth::KeypointSample> labeled, const PseudoLabeledSet& set,
                                 const curriculum::Curriculum& curriculum, const learner::LearnerConfig& config,
                                 const InnerLoopOptions& options, std::uint64_t seed);

// Text table: group, gamma, selected, mean confidence of selected, first and
// last epoch loss of the group.
std::string format_diagnostics(std::span<const GroupDiagnostics> groups);

}  // namespace placl::pseudo
