#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "placl/types.hpp"

namespace placl::synth {

struct SynthConfig {
  int image_size = 32;
  int num_keypoints = 5;
  int num_samples = 2000;
  double pose_jitter = 0.35;    // scale of joint-angle randomness
  double noise_level = 0.25;    // amplitude of uniform additive pixel noise
  double occlusion_prob = 0.15; // chance a limb segment and its end joint are not drawn

  // Throws ConfigError naming the first offending field.
  void validate() const;
};

// One rendered figure. Unlabeled samples keep their ground truth for
// diagnostics, but keypoints() refuses to hand it out.
class KeypointSample {
 public:
  KeypointSample() = default;
  KeypointSample(int id, Image image, Keypoints keypoints, double bbox_longest_side, bool is_labeled);

  int id() const { return id_; }
  const Image& image() const { return image_; }
  double bbox_longest_side() const { return bbox_longest_side_; }
  bool is_labeled() const { return is_labeled_; }
  std::size_t num_keypoints() const { return keypoints_.size(); }

  // Training-visible annotation. Throws StateError for unlabeled samples.
  const Keypoints& keypoints() const;

  // Ground truth regardless of the labeled flag. Only for evaluation and
  // pseudo-label quality diagnostics; never feed this into training.
  const Keypoints& hidden_keypoints() const { return keypoints_; }

  KeypointSample with_label_visibility(bool labeled) const;

  friend bool operator==(const KeypointSample&, const KeypointSample&) = default;

 private:
  int id_ = -1;
  Image image_;
  Keypoints keypoints_;
  double bbox_longest_side_ = 0.0;
  bool is_labeled_ = true;
};

using SampleList = std::vector<KeypointSample>;

struct DatasetSplit {
  SampleList labeled;
  SampleList unlabeled;
  SampleList validation;
  SampleList test;
};

// Parent joint of each joint in the fixed chain-plus-branches skeleton; the
// root has parent -1. Joints 1..4 hang off the root (two arms, head, pelvis);
// joint k >= 5 extends the limb ending at joint k - 4.
std::vector<int> skeleton_parents(int num_keypoints);

// Longest side of the axis-aligned box around the keypoints, at least 1 pixel.
double bbox_longest_side(const Keypoints& keypoints);

SampleList generate_dataset(const SynthConfig& config, std::uint64_t seed);

DatasetSplit split_dataset(const SampleList& samples, double labeled_fraction, double val_fraction,
                           double test_fraction, std::uint64_t seed);

// On-disk dataset: manifest.json (config, seeds, split ids, column layout),
// images.bin (float64 little-endian, sample-id order, row-major) and
// keypoints.tsv (sample_id, k, x, y, bbox_longest_side, split).
struct DatasetManifest {
  SynthConfig config;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  double labeled_fraction = 0.0;
  double val_fraction = 0.0;
  double test_fraction = 0.0;
};

void save_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest, const DatasetSplit& split);

struct LoadedDataset {
  DatasetManifest manifest;
  DatasetSplit split;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace placl::synth
