#include "placl/learner.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "placl/errors.hpp"
#include "placl/rng.hpp"

namespace placl::learner {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr char kCheckpointMagic[] = "placl-checkpoint v1";

// Head biases start near logit(0.05), the background level of a Gaussian
// target map. Starting at sigmoid(0) = 0.5 instead drives every output into
// saturation before any spatial feature is learned.
constexpr double kHeadBiasPrior = -3.0;

// Gathers kernel windows of a channels-last activation (rows: b, y, x) into
// one row per output position. In this layout the kx taps of one kernel row
// are contiguous in the input, so interior windows copy kernel*channels
// values per kernel row.
void im2col(const RowMat& in, const LayerShape& l, int batch, RowMat& col) {
  const int k = l.kernel, pad = (l.kernel - 1) / 2, ci = l.in_channels;
  const int si = l.in_size, so = l.out_size, stride = l.stride;
  const int span = k * ci;
  col.resize(static_cast<Eigen::Index>(batch) * so * so, static_cast<Eigen::Index>(k) * span);
  const double* src_base = in.data();
  double* dst = col.data();
  for (int b = 0; b < batch; ++b) {
    for (int yo = 0; yo < so; ++yo) {
      for (int xo = 0; xo < so; ++xo) {
        const int x0 = xo * stride - pad;
        const bool x_inside = x0 >= 0 && x0 + k <= si;
        for (int ky = 0; ky < k; ++ky, dst += span) {
          const int yi = yo * stride + ky - pad;
          if (yi < 0 || yi >= si) {
            std::fill(dst, dst + span, 0.0);
            continue;
          }
          const double* row = src_base + ((static_cast<std::ptrdiff_t>(b) * si + yi) * si) * ci;
          if (x_inside) {
            std::copy(row + static_cast<std::ptrdiff_t>(x0) * ci, row + static_cast<std::ptrdiff_t>(x0 + k) * ci, dst);
          } else {
            for (int kx = 0; kx < k; ++kx) {
              const int xi = x0 + kx;
              double* cell = dst + kx * ci;
              if (xi < 0 || xi >= si) {
                std::fill(cell, cell + ci, 0.0);
              } else {
                std::copy(row + static_cast<std::ptrdiff_t>(xi) * ci, row + static_cast<std::ptrdiff_t>(xi + 1) * ci, cell);
              }
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds window gradients back onto the input grid.
void col2im(const RowMat& col, const LayerShape& l, int batch, RowMat& out) {
  const int k = l.kernel, pad = (l.kernel - 1) / 2, ci = l.in_channels;
  const int si = l.in_size, so = l.out_size, stride = l.stride;
  const int span = k * ci;
  out.setZero(static_cast<Eigen::Index>(batch) * si * si, ci);
  double* dst_base = out.data();
  const double* src = col.data();
  for (int b = 0; b < batch; ++b) {
    for (int yo = 0; yo < so; ++yo) {
      for (int xo = 0; xo < so; ++xo) {
        const int x0 = xo * stride - pad;
        const int kx_lo = std::max(0, -x0);
        const int kx_hi = std::min(k, si - x0);
        for (int ky = 0; ky < k; ++ky, src += span) {
          const int yi = yo * stride + ky - pad;
          if (yi < 0 || yi >= si) continue;
          double* row = dst_base + ((static_cast<std::ptrdiff_t>(b) * si + yi) * si + x0) * ci;
          for (int j = kx_lo * ci; j < kx_hi * ci; ++j) row[j] += src[j];
        }
      }
    }
  }
}

void write_le(std::ostream& out, std::span<const double> values) {
  std::array<char, 8> bytes{};
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(bytes.data(), bytes.size());
  }
}

void read_le(std::istream& in, std::vector<double>& values) {
  std::array<unsigned char, 8> bytes{};
  for (double& v : values) {
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) throw InputError("checkpoint payload is truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
}

}  // namespace

struct Learner::Workspace {
  int batch = 0;
  std::vector<RowMat> inputs;  // inputs[l]: activation entering layer l
  std::vector<RowMat> cols;    // im2col of inputs[l] (unused for the 1x1 head)
  std::vector<RowMat> pre;     // pre-activations of layer l
  RowMat output;               // sigmoid of the head
  RowMat grad_pre;
  RowMat grad_col;
  RowMat grad_in;
};

void LearnerConfig::validate() const {
  if (image_size < 4 || image_size % 2 != 0) {
    throw ConfigError(fmt::format("LearnerConfig.image_size must be even and >= 4, got {}", image_size));
  }
  if (num_keypoints < 1) throw ConfigError("LearnerConfig.num_keypoints must be >= 1");
  if (conv_channels.size() < 2) {
    throw ConfigError("LearnerConfig.conv_channels needs at least 2 layers (the second one downsamples)");
  }
  for (int c : conv_channels) {
    if (c < 1) throw ConfigError(fmt::format("LearnerConfig.conv_channels entries must be >= 1, got {}", c));
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError(fmt::format("LearnerConfig.kernel_size must be odd and >= 1, got {}", kernel_size));
  }
  if (heatmap_size < 1 || image_size % heatmap_size != 0) {
    throw ConfigError(fmt::format("LearnerConfig.heatmap_size {} must divide image_size {}", heatmap_size, image_size));
  }
  if (heatmap_size * 2 != image_size) {
    throw ConfigError(fmt::format("LearnerConfig.heatmap_size must equal image_size / 2 = {} for the stride-2 "
                                  "architecture, got {}",
                                  image_size / 2, heatmap_size));
  }
  if (!(target_sigma > 0.0)) throw ConfigError("LearnerConfig.target_sigma must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("LearnerConfig.learning_rate must be > 0");
  for (std::size_t i = 1; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] <= decay_epochs[i - 1]) {
      throw ConfigError(fmt::format("LearnerConfig.decay_epochs must be strictly increasing, got [{}]",
                                    fmt::join(decay_epochs, ", ")));
    }
  }
  if (!(decay_factor > 0.0)) throw ConfigError("LearnerConfig.decay_factor must be > 0");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("LearnerConfig.leaky_slope must be in [0, 1)");
}

std::vector<LayerShape> architecture(const LearnerConfig& config) {
  config.validate();
  std::vector<LayerShape> layers;
  std::size_t offset = 0;
  int in_channels = 1;
  int size = config.image_size;
  for (std::size_t i = 0; i < config.conv_channels.size(); ++i) {
    LayerShape l;
    l.in_channels = in_channels;
    l.out_channels = config.conv_channels[i];
    l.kernel = config.kernel_size;
    l.stride = static_cast<int>(i) == kDownsampleLayer ? 2 : 1;
    l.in_size = size;
    l.out_size = size / l.stride;
    l.weight_offset = offset;
    l.bias_offset = offset + l.weight_count();
    offset = l.bias_offset + static_cast<std::size_t>(l.out_channels);
    layers.push_back(l);
    in_channels = l.out_channels;
    size = l.out_size;
  }
  LayerShape head;
  head.in_channels = in_channels;
  head.out_channels = config.num_keypoints;
  head.kernel = 1;
  head.stride = 1;
  head.in_size = size;
  head.out_size = size;
  head.weight_offset = offset;
  head.bias_offset = offset + head.weight_count();
  head.is_head = true;
  layers.push_back(head);
  return layers;
}

std::size_t parameter_count(const LearnerConfig& config) {
  const auto layers = architecture(config);
  return layers.back().bias_offset + static_cast<std::size_t>(layers.back().out_channels);
}

HeatmapStack target_heatmaps(const Keypoints& keypoints, int image_size, int heatmap_size, double sigma) {
  if (heatmap_size < 1 || image_size % heatmap_size != 0) {
    throw InputError(fmt::format("heatmap_size {} must divide image_size {}", heatmap_size, image_size));
  }
  if (!(sigma > 0.0)) throw InputError("target sigma must be > 0");
  const double scale = static_cast<double>(image_size) / heatmap_size;
  HeatmapStack stack(static_cast<int>(keypoints.size()), heatmap_size);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const Point& p = keypoints[k];
    if (!(p.x >= 0.0 && p.x < image_size && p.y >= 0.0 && p.y < image_size)) {
      throw InputError(fmt::format("keypoint {} at ({}, {}) is outside the {}px image", k, p.x, p.y, image_size));
    }
    const double cu = std::floor(p.x / scale);
    const double cv = std::floor(p.y / scale);
    for (int v = 0; v < heatmap_size; ++v) {
      for (int u = 0; u < heatmap_size; ++u) {
        const double du = u - cu;
        const double dv = v - cv;
        stack.at(static_cast<int>(k), v, u) = std::exp(-(du * du + dv * dv) * inv_two_var);
      }
    }
  }
  return stack;
}

double mse_loss(const HeatmapStack& prediction, const HeatmapStack& target) {
  if (prediction.num_maps != target.num_maps || prediction.size != target.size ||
      prediction.values.size() != target.values.size()) {
    throw InputError(fmt::format("mse_loss shape mismatch: {}x{}^2 vs {}x{}^2", prediction.num_maps, prediction.size,
                                 target.num_maps, target.size));
  }
  if (prediction.values.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < prediction.values.size(); ++i) {
    const double d = prediction.values[i] - target.values[i];
    sum += d * d;
  }
  return sum / static_cast<double>(prediction.values.size());
}

PseudoLabel decode(const HeatmapStack& heatmaps, int image_size) {
  PseudoLabel label;
  const double scale = static_cast<double>(image_size) / heatmaps.size;
  const std::size_t cells = heatmaps.cells_per_map();
  for (int k = 0; k < heatmaps.num_maps; ++k) {
    const auto first = heatmaps.values.begin() + static_cast<std::ptrdiff_t>(k * cells);
    // max_element returns the first of equal maxima, i.e. the smallest row-major index.
    const auto best = std::max_element(first, first + static_cast<std::ptrdiff_t>(cells));
    const auto index = static_cast<int>(best - first);
    const int row = index / heatmaps.size;
    const int col = index % heatmaps.size;
    label.keypoints.push_back({(col + 0.5) * scale, (row + 0.5) * scale});
    label.confidences.push_back(*best);
  }
  return label;
}

Learner::Learner(LearnerConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed), layers_(architecture(config_)) {
  const std::size_t n = layers_.back().bias_offset + static_cast<std::size_t>(layers_.back().out_channels);
  params_.resize(n);
  adam_m_.assign(n, 0.0);
  adam_v_.assign(n, 0.0);
  rng::CounterRng rng(rng::derive_seed({seed, 0x1417ULL}));
  for (const LayerShape& l : layers_) {
    const double fan_in = static_cast<double>(l.in_channels) * l.kernel * l.kernel;
    // He-uniform for the rectified layers, Glorot-style bound for the sigmoid head.
    const double bound = l.is_head ? std::sqrt(6.0 / (fan_in + l.out_channels)) : std::sqrt(6.0 / fan_in);
    for (std::size_t i = 0; i < l.weight_count(); ++i) params_[l.weight_offset + i] = rng.uniform(-bound, bound);
    const double bias_bound = 1.0 / std::sqrt(fan_in);
    const double bias_center = l.is_head ? kHeadBiasPrior : 0.0;
    for (int c = 0; c < l.out_channels; ++c) {
      params_[l.bias_offset + c] = bias_center + rng.uniform(-bias_bound, bias_bound);
    }
  }
}

void Learner::check_image(const Image& image) const {
  if (image.size != config_.image_size ||
      image.pixels.size() != static_cast<std::size_t>(config_.image_size) * config_.image_size) {
    throw InputError(fmt::format("image is {}px but the learner expects {}px", image.size, config_.image_size));
  }
}

void Learner::forward_pass(Workspace& ws, std::span<const Image* const> images) const {
  const int batch = static_cast<int>(images.size());
  ws.batch = batch;
  const std::size_t num_layers = layers_.size();
  ws.inputs.resize(num_layers);
  ws.cols.resize(num_layers);
  ws.pre.resize(num_layers);

  const int s0 = config_.image_size;
  RowMat& x0 = ws.inputs[0];
  x0.resize(static_cast<Eigen::Index>(batch) * s0 * s0, 1);
  for (int b = 0; b < batch; ++b) {
    check_image(*images[b]);
    std::copy(images[b]->pixels.begin(), images[b]->pixels.end(), x0.data() + static_cast<std::ptrdiff_t>(b) * s0 * s0);
  }

  const double slope = config_.leaky_slope;
  for (std::size_t li = 0; li < num_layers; ++li) {
    const LayerShape& l = layers_[li];
    const ConstMap w(params_.data() + l.weight_offset, static_cast<Eigen::Index>(l.kernel) * l.kernel * l.in_channels,
                     l.out_channels);
    const Eigen::Map<const Eigen::RowVectorXd> bias(params_.data() + l.bias_offset, l.out_channels);
    const bool pointwise = l.kernel == 1 && l.stride == 1;
    if (!pointwise) im2col(ws.inputs[li], l, batch, ws.cols[li]);
    const RowMat& col = pointwise ? ws.inputs[li] : ws.cols[li];
    RowMat& z = ws.pre[li];
    z.noalias() = col * w;
    z.rowwise() += bias;
    if (l.is_head) {
      ws.output.resize(z.rows(), z.cols());
      ws.output.array() = 1.0 / (1.0 + (-z.array()).exp());
    } else {
      // leaky(z) = max(z, slope * z) for slope in [0, 1).
      ws.inputs[li + 1].resize(z.rows(), z.cols());
      ws.inputs[li + 1].array() = z.array().max(slope * z.array());
    }
  }
}

double Learner::batch_pass(Workspace& ws, std::span<const Image* const> images,
                           std::span<const HeatmapStack* const> targets, std::vector<double>* gradient) const {
  if (images.size() != targets.size()) throw InputError("images and targets differ in length");
  if (images.empty()) throw InputError("empty batch");
  forward_pass(ws, images);
  const int batch = ws.batch;
  const int k = config_.num_keypoints;
  const int hs = config_.heatmap_size;
  const std::size_t cells = static_cast<std::size_t>(hs) * hs;

  // ws.output rows are (b, v, u), columns keypoints; targets are map-major.
  ws.grad_pre.resize(ws.output.rows(), ws.output.cols());
  const double norm = 1.0 / (static_cast<double>(batch) * k * static_cast<double>(cells));
  double loss = 0.0;
  for (int b = 0; b < batch; ++b) {
    const HeatmapStack& t = *targets[b];
    if (t.num_maps != k || t.size != hs) throw InputError("target stack shape does not match the learner");
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const Eigen::Index row = static_cast<Eigen::Index>(b * cells + cell);
      for (int m = 0; m < k; ++m) {
        const double y = ws.output(row, m);
        const double d = y - t.values[m * cells + cell];
        loss += d * d;
        ws.grad_pre(row, m) = 2.0 * d * norm * y * (1.0 - y);
      }
    }
  }
  loss *= norm;
  if (gradient == nullptr) return loss;

  gradient->assign(params_.size(), 0.0);
  const double slope = config_.leaky_slope;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const LayerShape& l = layers_[li];
    const Eigen::Index fan = static_cast<Eigen::Index>(l.kernel) * l.kernel * l.in_channels;
    const RowMat& col = l.kernel == 1 && l.stride == 1 ? ws.inputs[li] : ws.cols[li];
    MutMap gw(gradient->data() + l.weight_offset, fan, l.out_channels);
    Eigen::Map<Eigen::RowVectorXd> gb(gradient->data() + l.bias_offset, l.out_channels);
    gw.noalias() = col.transpose() * ws.grad_pre;
    gb.setZero();
    const Eigen::Index cols = ws.grad_pre.cols();
    const double* gp = ws.grad_pre.data();
    for (Eigen::Index r = 0; r < ws.grad_pre.rows(); ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) gb[c] += gp[r * cols + c];
    }
    if (li == 0) break;

    const ConstMap w(params_.data() + l.weight_offset, fan, l.out_channels);
    if (l.kernel == 1 && l.stride == 1) {
      ws.grad_in.noalias() = ws.grad_pre * w.transpose();
    } else {
      ws.grad_col.noalias() = ws.grad_pre * w.transpose();
      col2im(ws.grad_col, l, batch, ws.grad_in);
    }
    const RowMat& z_prev = ws.pre[li - 1];
    double* g = ws.grad_in.data();
    const double* z = z_prev.data();
    const Eigen::Index n = ws.grad_in.size();
    for (Eigen::Index i = 0; i < n; ++i) g[i] *= z[i] > 0.0 ? 1.0 : slope;
    std::swap(ws.grad_pre, ws.grad_in);
  }
  return loss;
}

HeatmapStack Learner::forward(const Image& image) const {
  const Image* one[] = {&image};
  return std::move(forward_batch(one).front());
}

std::vector<HeatmapStack> Learner::forward_batch(std::span<const Image* const> images) const {
  std::vector<HeatmapStack> out;
  if (images.empty()) return out;
  Workspace ws;
  forward_pass(ws, images);
  const int k = config_.num_keypoints;
  const int hs = config_.heatmap_size;
  const std::size_t cells = static_cast<std::size_t>(hs) * hs;
  out.reserve(images.size());
  for (int b = 0; b < ws.batch; ++b) {
    HeatmapStack stack(k, hs);
    for (std::size_t cell = 0; cell < cells; ++cell) {
      for (int m = 0; m < k; ++m) stack.values[m * cells + cell] = ws.output(static_cast<Eigen::Index>(b * cells + cell), m);
    }
    out.push_back(std::move(stack));
  }
  return out;
}

double Learner::loss_and_gradient(std::span<const Image* const> images, std::span<const HeatmapStack> targets,
                                  std::vector<double>* gradient) const {
  std::vector<const HeatmapStack*> target_ptrs;
  target_ptrs.reserve(targets.size());
  for (const HeatmapStack& t : targets) target_ptrs.push_back(&t);
  Workspace ws;
  return batch_pass(ws, images, target_ptrs, gradient);
}

double Learner::learning_rate_at(int epoch) const {
  double lr = config_.learning_rate;
  for (int e : config_.decay_epochs) {
    if (epoch >= e) lr *= config_.decay_factor;
  }
  return lr;
}

std::vector<double> Learner::train_epochs(std::span<const TrainExample> train_set, int epochs, int batch_size) {
  std::vector<double> history;
  if (epochs <= 0) return history;
  if (train_set.empty()) throw InputError("train_epochs: empty training set");
  if (batch_size < 1) throw InputError("train_epochs: batch_size must be >= 1");

  std::vector<HeatmapStack> targets;
  targets.reserve(train_set.size());
  for (const TrainExample& ex : train_set) {
    if (ex.image == nullptr) throw InputError("train_epochs: example without an image");
    check_image(*ex.image);
    if (static_cast<int>(ex.targets.size()) != config_.num_keypoints) {
      throw InputError("train_epochs: example has the wrong number of keypoints");
    }
    targets.push_back(target_heatmaps(ex.targets, config_.image_size, config_.heatmap_size, config_.target_sigma));
  }

  Workspace ws;
  std::vector<double> gradient;
  std::vector<std::size_t> order(train_set.size());
  std::vector<const Image*> batch_images;
  std::vector<const HeatmapStack*> batch_targets;
  const double b1 = config_.adam_beta1, b2 = config_.adam_beta2, eps = config_.adam_eps;

  for (int e = 0; e < epochs; ++e) {
    const double lr = learning_rate_at(epoch_);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng::CounterRng shuffler(rng::derive_seed({seed_, 0xE90CULL, static_cast<std::uint64_t>(epoch_)}));
    rng::shuffle(std::span<std::size_t>(order), shuffler);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      batch_images.clear();
      batch_targets.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_images.push_back(train_set[order[i]].image);
        batch_targets.push_back(&targets[order[i]]);
      }
      const double loss = batch_pass(ws, batch_images, batch_targets, &gradient);
      epoch_loss += loss * static_cast<double>(end - start);

      ++step_;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
      for (std::size_t p = 0; p < params_.size(); ++p) {
        const double g = gradient[p];
        adam_m_[p] = b1 * adam_m_[p] + (1.0 - b1) * g;
        adam_v_[p] = b2 * adam_v_[p] + (1.0 - b2) * g * g;
        params_[p] -= lr * (adam_m_[p] / c1) / (std::sqrt(adam_v_[p] / c2) + eps);
      }
    }
    history.push_back(epoch_loss / static_cast<double>(order.size()));
    ++epoch_;
  }
  return history;
}

void Learner::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write checkpoint {}", path.string()));
  out << kCheckpointMagic << '\n';
  out << "image_size " << config_.image_size << '\n';
  out << "num_keypoints " << config_.num_keypoints << '\n';
  out << "conv_channels " << fmt::format("{}", fmt::join(config_.conv_channels, " ")) << '\n';
  out << "kernel_size " << config_.kernel_size << '\n';
  out << "heatmap_size " << config_.heatmap_size << '\n';
  out << fmt::format("target_sigma {:.17g}\n", config_.target_sigma);
  out << fmt::format("learning_rate {:.17g}\n", config_.learning_rate);
  out << "decay_epochs " << fmt::format("{}", fmt::join(config_.decay_epochs, " ")) << '\n';
  out << fmt::format("decay_factor {:.17g}\n", config_.decay_factor);
  out << fmt::format("leaky_slope {:.17g}\n", config_.leaky_slope);
  out << fmt::format("adam {:.17g} {:.17g} {:.17g}\n", config_.adam_beta1, config_.adam_beta2, config_.adam_eps);
  out << "seed " << seed_ << '\n';
  out << "step " << step_ << '\n';
  out << "epoch " << epoch_ << '\n';
  out << "num_params " << params_.size() << '\n';
  out << "payload float64-le weights first_moments second_moments\n";
  out << "end\n";
  write_le(out, params_);
  write_le(out, adam_m_);
  write_le(out, adam_v_);
  if (!out) throw InputError(fmt::format("failed writing checkpoint {}", path.string()));
}

Learner Learner::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open checkpoint {}", path.string()));
  std::string line;
  std::getline(in, line);
  if (line != kCheckpointMagic) throw InputError(fmt::format("{} is not a placl checkpoint", path.string()));

  LearnerConfig config;
  std::uint64_t seed = 0;
  long step = 0;
  int epoch = 0;
  std::size_t num_params = 0;
  while (std::getline(in, line) && line != "end") {
    std::istringstream row(line);
    std::string key;
    row >> key;
    const auto read_ints = [&row] {
      std::vector<int> v;
      int x;
      while (row >> x) v.push_back(x);
      return v;
    };
    if (key == "image_size") row >> config.image_size;
    else if (key == "num_keypoints") row >> config.num_keypoints;
    else if (key == "conv_channels") config.conv_channels = read_ints();
    else if (key == "kernel_size") row >> config.kernel_size;
    else if (key == "heatmap_size") row >> config.heatmap_size;
    else if (key == "target_sigma") row >> config.target_sigma;
    else if (key == "learning_rate") row >> config.learning_rate;
    else if (key == "decay_epochs") config.decay_epochs = read_ints();
    else if (key == "decay_factor") row >> config.decay_factor;
    else if (key == "leaky_slope") row >> config.leaky_slope;
    else if (key == "adam") row >> config.adam_beta1 >> config.adam_beta2 >> config.adam_eps;
    else if (key == "seed") row >> seed;
    else if (key == "step") row >> step;
    else if (key == "epoch") row >> epoch;
    else if (key == "num_params") row >> num_params;
  }
  if (line != "end") throw InputError("checkpoint header is not terminated");

  Learner learner(config, seed);
  if (learner.params_.size() != num_params) {
    throw InputError(fmt::format("checkpoint declares {} parameters but the architecture has {}", num_params,
                                 learner.params_.size()));
  }
  read_le(in, learner.params_);
  read_le(in, learner.adam_m_);
  read_le(in, learner.adam_v_);
  learner.step_ = step;
  learner.epoch_ = epoch;
  return learner;
}

}  // namespace placl::learner
