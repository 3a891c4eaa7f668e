#pragma once

// Slow, direct re-implementations used to cross-check the library. Nothing
// here calls into the code under test except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "placl/learner.hpp"
#include "placl/policy.hpp"
#include "placl/types.hpp"

namespace oracle {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Convolution network evaluated pixel by pixel from the documented parameter
// layout. Hidden pre-activations are appended to `pre` when non-null.
inline placl::HeatmapStack forward(const placl::learner::LearnerConfig& cfg, std::span<const double> p,
                                   const placl::Image& img, std::vector<double>* pre = nullptr) {
  using Grid = std::vector<std::vector<std::vector<double>>>;  // [c][y][x]
  int size = cfg.image_size;
  int channels = 1;
  Grid act(1, std::vector<std::vector<double>>(size, std::vector<double>(size)));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) act[0][y][x] = img.at(y, x);
  }
  std::size_t offset = 0;
  const int k = cfg.kernel_size;
  const int pad = (k - 1) / 2;
  for (std::size_t l = 0; l < cfg.conv_channels.size(); ++l) {
    const int out_c = cfg.conv_channels[l];
    const int stride = static_cast<int>(l) == placl::learner::kDownsampleLayer ? 2 : 1;
    const int out_size = size / stride;
    const std::size_t bias_at = offset + static_cast<std::size_t>(k * k * channels * out_c);
    Grid next(out_c, std::vector<std::vector<double>>(out_size, std::vector<double>(out_size)));
    for (int co = 0; co < out_c; ++co) {
      for (int yo = 0; yo < out_size; ++yo) {
        for (int xo = 0; xo < out_size; ++xo) {
          double z = p[bias_at + co];
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int yi = yo * stride + ky - pad;
              const int xi = xo * stride + kx - pad;
              if (yi < 0 || yi >= size || xi < 0 || xi >= size) continue;
              for (int ci = 0; ci < channels; ++ci) {
                z += p[offset + static_cast<std::size_t>(((ky * k + kx) * channels + ci) * out_c + co)] *
                     act[ci][yi][xi];
              }
            }
          }
          if (pre) pre->push_back(z);
          next[co][yo][xo] = z > 0.0 ? z : cfg.leaky_slope * z;
        }
      }
    }
    offset = bias_at + static_cast<std::size_t>(out_c);
    act = std::move(next);
    channels = out_c;
    size = out_size;
  }
  placl::HeatmapStack out(cfg.num_keypoints, size);
  const std::size_t bias_at = offset + static_cast<std::size_t>(channels * cfg.num_keypoints);
  for (int m = 0; m < cfg.num_keypoints; ++m) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double z = p[bias_at + m];
        for (int ci = 0; ci < channels; ++ci) {
          z += p[offset + static_cast<std::size_t>(ci * cfg.num_keypoints + m)] * act[ci][y][x];
        }
        out.at(m, y, x) = sigmoid(z);
      }
    }
  }
  return out;
}

inline double loss(const placl::learner::LearnerConfig& cfg, std::span<const double> p,
                   const std::vector<const placl::Image*>& images, const std::vector<placl::HeatmapStack>& targets,
                   std::vector<double>* pre = nullptr) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto out = forward(cfg, p, *images[i], pre);
    for (std::size_t c = 0; c < out.values.size(); ++c) {
      const double d = out.values[c] - targets[i].values[c];
      s += d * d;
      ++n;
    }
  }
  return s / static_cast<double>(n);
}

// True when some hidden pre-activation changes sign between two evaluations.
inline bool crosses_kink(const std::vector<double>& pre_a, const std::vector<double>& pre_b) {
  for (std::size_t j = 0; j < pre_a.size(); ++j) {
    if ((pre_a[j] > 0.0) != (pre_b[j] > 0.0)) return true;
  }
  return false;
}

// Full scan over every cell; strict > keeps the first maximum.
inline placl::learner::PseudoLabel decode(const placl::HeatmapStack& h, int image_size) {
  const double scale = static_cast<double>(image_size) / h.size;
  placl::learner::PseudoLabel out;
  for (int m = 0; m < h.num_maps; ++m) {
    int br = 0, bc = 0;
    for (int r = 0; r < h.size; ++r) {
      for (int c = 0; c < h.size; ++c) {
        if (h.at(m, r, c) > h.at(m, br, bc)) br = r, bc = c;
      }
    }
    out.keypoints.push_back({(bc + 0.5) * scale, (br + 0.5) * scale});
    out.confidences.push_back(h.at(m, br, bc));
  }
  return out;
}

// Phi(z) = 1/2 + phi(z) * sum_n z^(2n+1) / (2n+1)!!
inline double series_cdf(double z, int terms = 60) {
  double term = z, sum = z;
  for (int n = 1; n < terms; ++n) {
    term *= z * z / (2 * n + 1);
    sum += term;
  }
  return 0.5 + std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi) * sum;
}

inline double truncated_pdf(double mu, double sigma, double x) {
  if (x < 0.0 || x > 1.0) return 0.0;
  const auto cdf = [](double z) { return 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2)); };
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2 * std::numbers::pi)) / (cdf((1 - mu) / sigma) - cdf(-mu / sigma));
}

inline double truncated_mean(double mu, double sigma) {
  const auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi); };
  const double a = -mu / sigma, b = (1 - mu) / sigma;
  return mu + sigma * (phi(a) - phi(b)) / (series_cdf(b) - series_cdf(a));
}

inline double ppo2_objective(const std::vector<double>& mu_new, const placl::policy::StepRecord& rec, double sigma,
                             double eps) {
  double total = 0.0;
  for (std::size_t j = 0; j < rec.deltas.size(); ++j) {
    double num = 1.0, den = 1.0;
    for (std::size_t i = 0; i < mu_new.size(); ++i) {
      num *= truncated_pdf(mu_new[i], sigma, rec.deltas[j].deltas[i]);
      den *= truncated_pdf(rec.mu_old[i], sigma, rec.deltas[j].deltas[i]);
    }
    const double r = num / den, a = rec.normalized[j];
    total += std::min(r * a, std::clamp(r, 1 - eps, 1 + eps) * a);
  }
  return total / static_cast<double>(rec.deltas.size());
}

inline double pck(const std::vector<placl::Keypoints>& p, const std::vector<placl::Keypoints>& t,
                  const std::vector<double>& side, double alpha) {
  int hit = 0, n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t k = 0; k < p[i].size(); ++k) {
      hit += std::hypot(p[i][k].x - t[i][k].x, p[i][k].y - t[i][k].y) <= alpha * side[i];
      ++n;
    }
  }
  return static_cast<double>(hit) / n;
}

}  // namespace oracle
