#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "placl/types.hpp"

namespace placl::learner {

// Architecture: a stack of kernel_size x kernel_size convolutions with leaky
// rectifiers, where layer `kDownsampleLayer` has stride 2 and the others
// stride 1 with same padding, followed by a 1x1 convolution to K channels and
// a logistic sigmoid. heatmap_size is therefore image_size / 2.
struct LearnerConfig {
  int image_size = 32;
  int num_keypoints = 5;
  std::vector<int> conv_channels{8, 8, 8, 8};
  int kernel_size = 3;
  int heatmap_size = 16;
  double target_sigma = 1.5;  // heatmap cells
  double learning_rate = 3e-3;
  std::vector<int> decay_epochs{24, 28};
  double decay_factor = 0.1;
  double leaky_slope = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;

  friend bool operator==(const LearnerConfig&, const LearnerConfig&) = default;
};

inline constexpr int kDownsampleLayer = 1;

// One convolution layer. Weights are stored at weight_offset with index
// ((ky * kernel + kx) * in_channels + ci) * out_channels + co, followed by
// out_channels biases at bias_offset.
struct LayerShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int in_size = 0;
  int out_size = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  bool is_head = false;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(in_channels) * out_channels * kernel * kernel;
  }

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

std::vector<LayerShape> architecture(const LearnerConfig& config);
std::size_t parameter_count(const LearnerConfig& config);

// Gaussian target stack. Each keypoint is quantized to the heatmap cell that
// contains it, so every map peaks at exactly 1 on that cell.
HeatmapStack target_heatmaps(const Keypoints& keypoints, int image_size, int heatmap_size, double sigma);

double mse_loss(const HeatmapStack& prediction, const HeatmapStack& target);

struct PseudoLabel {
  Keypoints keypoints;
  std::vector<double> confidences;
};

// Per-map integer argmax (first maximum in row-major order), mapped back to
// the image pixel at the center of the winning cell.
PseudoLabel decode(const HeatmapStack& heatmaps, int image_size);

// Training pair; `image` is borrowed and must outlive the training call.
struct TrainExample {
  const Image* image = nullptr;
  Keypoints targets;
};

class Learner {
 public:
  Learner(LearnerConfig config, std::uint64_t seed);

  const LearnerConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  long step() const { return step_; }
  int epoch() const { return epoch_; }

  std::span<const double> parameters() const { return params_; }
  std::span<double> mutable_parameters() { return params_; }
  std::span<const double> first_moments() const { return adam_m_; }
  std::span<const double> second_moments() const { return adam_v_; }

  HeatmapStack forward(const Image& image) const;
  std::vector<HeatmapStack> forward_batch(std::span<const Image* const> images) const;

  // Mean squared error over the batch and, when `gradient` is non-null, its
  // gradient with respect to parameters().
  double loss_and_gradient(std::span<const Image* const> images, std::span<const HeatmapStack> targets,
                           std::vector<double>* gradient) const;

  // Runs `epochs` epochs of Adam with step decay, continuing this learner's
  // epoch counter. Returns the mean training loss of each epoch.
  std::vector<double> train_epochs(std::span<const TrainExample> train_set, int epochs, int batch_size);

  double learning_rate_at(int epoch) const;

  void save(const std::filesystem::path& path) const;
  static Learner load(const std::filesystem::path& path);

  friend bool operator==(const Learner&, const Learner&) = default;

 private:
  struct Workspace;

  double batch_pass(Workspace& ws, std::span<const Image* const> images, std::span<const HeatmapStack* const> targets,
                    std::vector<double>* gradient) const;
  void forward_pass(Workspace& ws, std::span<const Image* const> images) const;
  void check_image(const Image& image) const;

  LearnerConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
  std::vector<double> adam_m_;
  std::vector<double> adam_v_;
  long step_ = 0;
  int epoch_ = 0;
};

inline Learner init_learner(const LearnerConfig& config, std::uint64_t seed) { return Learner(config, seed); }

}  // namespace placl::learner
