#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "placl/errors.hpp"
#include "placl/learner.hpp"
#include "placl/synthgen.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace placl;
using namespace placl::learner;

namespace {

struct Fixture {
  synth::SampleList samples;
  std::vector<const Image*> images;
  std::vector<HeatmapStack> targets;
  std::vector<TrainExample> examples;

  Fixture(int n, std::uint64_t seed, const LearnerConfig& cfg = {}) {
    synth::SynthConfig sc;
    sc.num_samples = n;
    samples = synth::generate_dataset(sc, seed);
    for (const auto& s : samples) {
      images.push_back(&s.image());
      targets.push_back(target_heatmaps(s.keypoints(), cfg.image_size, cfg.heatmap_size, cfg.target_sigma));
      examples.push_back({&s.image(), s.keypoints()});
    }
  }
};

}  // namespace

TEST_CASE("parameter count matches the closed form for the default network") {
  const LearnerConfig cfg;
  // conv layers: in*out*k^2 + out; head: 8*5 + 5
  const std::size_t expected = (1 * 8 * 9 + 8) + 3 * (8 * 8 * 9 + 8) + (8 * 5 + 5);
  CHECK(expected == 1877);
  CHECK(parameter_count(cfg) == expected);
  const Learner l(cfg, 1);
  CHECK(l.parameters().size() == expected);
  CHECK(l.first_moments().size() == expected);
  CHECK(l.second_moments().size() == expected);
}

TEST_CASE("initialization is deterministic and seed dependent") {
  const LearnerConfig cfg;
  CHECK(Learner(cfg, 1) == Learner(cfg, 1));
  const Learner a(cfg, 1), b(cfg, 2);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) differ += a.parameters()[i] != b.parameters()[i];
  CHECK(static_cast<double>(differ) >= 0.99 * static_cast<double>(a.parameters().size()));
  CHECK(a.step() == 0);
}

TEST_CASE("configuration validation") {
  LearnerConfig c;
  c.heatmap_size = 10;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = LearnerConfig{};
  c.target_sigma = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = LearnerConfig{};
  c.decay_epochs = {5, 5};
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("decay_epochs"), ConfigError);
  c = LearnerConfig{};
  c.kernel_size = 2;
  CHECK_THROWS_AS(Learner(c, 1), ConfigError);
}

TEST_CASE("target heatmaps") {
  SUBCASE("peak of one on the quantized cell") {
    // Cell (u=3, v=5) covers pixels [6, 8) x [10, 12); its center is (7, 11).
    const auto t = target_heatmaps({{7.0, 11.0}}, 32, 16, 1.5);
    CHECK(t.at(0, 5, 3) == 1.0);
    CHECK(t.at(0, 5, 4) == doctest::Approx(std::exp(-1.0 / (2 * 1.5 * 1.5))).epsilon(1e-15));
    const auto u = target_heatmaps({{7.9, 10.1}}, 32, 16, 1.5);
    CHECK(u == t);
  }
  SUBCASE("value one sigma away") {
    const auto t = target_heatmaps({{1.0, 1.0}}, 32, 16, 2.0);
    CHECK(t.at(0, 0, 2) == doctest::Approx(0.6065306597126334).epsilon(1e-14));
    CHECK(t.at(0, 2, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  }
  SUBCASE("map sums agree with a brute-force loop") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.0, 31.999);
    for (int trial = 0; trial < 20; ++trial) {
      const Point p{u(gen), u(gen)};
      const double sigma = 0.5 + trial * 0.2;
      const auto t = target_heatmaps({p}, 32, 16, sigma);
      const int cu = static_cast<int>(p.x / 2.0), cv = static_cast<int>(p.y / 2.0);
      double direct = 0.0, got = 0.0;
      for (int v = 0; v < 16; ++v) {
        for (int w = 0; w < 16; ++w) {
          direct += std::exp(-((w - cu) * (w - cu) + (v - cv) * (v - cv)) / (2.0 * sigma * sigma));
          got += t.at(0, v, w);
        }
      }
      CHECK(std::abs(got - direct) < 1e-12);
    }
  }
  SUBCASE("out-of-bounds keypoints are rejected") {
    CHECK_THROWS_AS(target_heatmaps({{32.0, 3.0}}, 32, 16, 1.5), InputError);
    CHECK_THROWS_AS(target_heatmaps({{-0.1, 3.0}}, 32, 16, 1.5), InputError);
  }
}

TEST_CASE("mse loss") {
  HeatmapStack a(2, 4), b(2, 4);
  CHECK(mse_loss(a, a) == 0.0);
  std::fill(a.values.begin(), a.values.end(), 1.0);
  CHECK(mse_loss(a, b) == 1.0);
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : a.values) v = u(gen);
  for (auto& v : b.values) v = u(gen);
  double s = 0.0;
  for (int m = 0; m < 2; ++m) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) s += (a.at(m, y, x) - b.at(m, y, x)) * (a.at(m, y, x) - b.at(m, y, x));
    }
  }
  CHECK(std::abs(mse_loss(a, b) - s / 32.0) < 1e-12);
  CHECK_THROWS_AS(mse_loss(a, HeatmapStack(2, 3)), InputError);
}

TEST_CASE("decode") {
  SUBCASE("inverts target heatmaps on quantized keypoints") {
    for (double sigma : {0.3, 1.0, 1.5, 4.0}) {
      const Keypoints kps{{7.0, 11.0}, {0.5, 31.5}, {16.2, 3.9}};
      const auto label = decode(target_heatmaps(kps, 32, 16, sigma), 32);
      CHECK(label.keypoints == Keypoints{{7.0, 11.0}, {1.0, 31.0}, {17.0, 3.0}});
      for (double c : label.confidences) CHECK(c == 1.0);
    }
  }
  SUBCASE("uniform maps resolve to the first cell") {
    HeatmapStack h(1, 16);
    std::fill(h.values.begin(), h.values.end(), 0.3);
    const auto label = decode(h, 32);
    CHECK(label.keypoints[0] == Point{1.0, 1.0});
    CHECK(label.confidences[0] == 0.3);
  }
  SUBCASE("agrees with a full scan on random stacks") {
    std::mt19937_64 gen(21);
    std::uniform_int_distribution<int> level(0, 20);  // coarse levels force ties
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      HeatmapStack h(3, 16);
      for (auto& v : h.values) v = level(gen) / 20.0;
      const auto label = decode(h, 32);
      const auto expect = oracle::decode(h, 32);
      mismatches += !(label.keypoints == expect.keypoints) || label.confidences != expect.confidences;
    }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("forward matches a nested-loop oracle") {
  const LearnerConfig cfg;
  Fixture f(4, 13);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Learner l(cfg, seed);
    const auto batch = l.forward_batch(f.images);
    for (std::size_t i = 0; i < f.images.size(); ++i) {
      const auto fast = l.forward(*f.images[i]);
      const auto slow = oracle::forward(cfg, l.parameters(), *f.images[i]);
      REQUIRE(fast.num_maps == cfg.num_keypoints);
      REQUIRE(fast.size == cfg.heatmap_size);
      double worst = 0.0;
      for (std::size_t c = 0; c < fast.values.size(); ++c) {
        worst = std::max(worst, std::abs(fast.values[c] - slow.values[c]));
        CHECK(fast.values[c] > 0.0);
        CHECK(fast.values[c] < 1.0);
      }
      CHECK(worst < 1e-10);
      CHECK(batch[i] == fast);
    }
  }
}

TEST_CASE("zero weights give sigmoid of the head bias everywhere") {
  const LearnerConfig cfg;
  Learner l(cfg, 9);
  auto p = l.mutable_parameters();
  for (const auto& layer : architecture(cfg)) {
    std::fill(p.begin() + static_cast<std::ptrdiff_t>(layer.weight_offset),
              p.begin() + static_cast<std::ptrdiff_t>(layer.bias_offset), 0.0);
  }
  const auto head = architecture(cfg).back();
  Fixture f(1, 2);
  const auto out = l.forward(*f.images[0]);
  for (int m = 0; m < cfg.num_keypoints; ++m) {
    const double expect = oracle::sigmoid(p[head.bias_offset + m]);
    for (int y = 0; y < cfg.heatmap_size; ++y) {
      for (int x = 0; x < cfg.heatmap_size; ++x) CHECK(out.at(m, y, x) == expect);
    }
  }
}

TEST_CASE("forward rejects images of the wrong size") {
  const Learner l(LearnerConfig{}, 1);
  CHECK_THROWS_AS(l.forward(Image(16)), InputError);
}

TEST_CASE("analytic gradient matches central finite differences") {
  const LearnerConfig cfg;
  Fixture f(3, 17);
  Learner l(cfg, 5);
  std::vector<double> grad;
  const double loss = l.loss_and_gradient(f.images, f.targets, &grad);
  CHECK(std::abs(loss - oracle::loss(cfg, l.parameters(), f.images, f.targets)) < 1e-12);

  // Parameters whose +-h perturbation moves a hidden pre-activation across the
  // leaky-rectifier kink have no meaningful finite difference; they are
  // replaced by fresh draws.
  const double h = 1e-5;
  auto p = l.mutable_parameters();
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
  int checked = 0, skipped = 0;
  double worst = 0.0;
  while (checked < 200) {
    const std::size_t i = pick(gen);
    const double orig = p[i];
    std::vector<double> pre_plus, pre_minus;
    p[i] = orig + h;
    const double lp = l.loss_and_gradient(f.images, f.targets, nullptr);
    oracle::loss(cfg, p, f.images, f.targets, &pre_plus);
    p[i] = orig - h;
    const double lm = l.loss_and_gradient(f.images, f.targets, nullptr);
    oracle::loss(cfg, p, f.images, f.targets, &pre_minus);
    p[i] = orig;
    if (oracle::crosses_kink(pre_plus, pre_minus)) {
      ++skipped;
      continue;
    }
    const double fd = (lp - lm) / (2 * h);
    const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-7});
    worst = std::max(worst, rel);
    ++checked;
  }
  MESSAGE("finite-difference check: worst relative error " << worst << ", kink crossings skipped " << skipped);
  CHECK(worst < 1e-4);
  CHECK(skipped < 20);
}

TEST_CASE("training") {
  const LearnerConfig cfg;
  SUBCASE("zero epochs leave the learner untouched") {
    Fixture f(2, 3);
    Learner l(cfg, 4);
    const Learner before = l;
    CHECK(l.train_epochs(f.examples, 0, 8).empty());
    CHECK(l == before);
  }
  SUBCASE("empty training sets are rejected") {
    Learner l(cfg, 4);
    CHECK_THROWS_AS(l.train_epochs({}, 1, 8), InputError);
  }
  SUBCASE("loss falls when fitting a single sample") {
    Fixture f(1, 3);
    Learner l(cfg, 4);
    const auto history = l.train_epochs(f.examples, 50, 8);
    REQUIRE(history.size() == 50);
    CHECK(history.back() < history.front());
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 10; ++i) early += history[i], late += history[40 + i];
    CHECK(late < early);
    CHECK(l.step() == 50);
    CHECK(l.epoch() == 50);
  }
  SUBCASE("identical seeds and data give identical weights") {
    Fixture f(12, 5);
    Learner a(cfg, 8), b(cfg, 8);
    a.train_epochs(f.examples, 3, 4);
    b.train_epochs(f.examples, 3, 4);
    CHECK(a == b);
    Learner c(cfg, 8);
    c.train_epochs(f.examples, 1, 4);
    c.train_epochs(f.examples, 2, 4);
    CHECK(c == a);
  }
  SUBCASE("step decay") {
    CHECK(Learner(cfg, 1).learning_rate_at(0) == cfg.learning_rate);
    CHECK(Learner(cfg, 1).learning_rate_at(24) == doctest::Approx(cfg.learning_rate * 0.1));
    CHECK(Learner(cfg, 1).learning_rate_at(29) == doctest::Approx(cfg.learning_rate * 0.01));
  }
}

TEST_CASE("checkpoints round trip exactly") {
  TempDir dir("ckpt");
  Fixture f(6, 3);
  Learner l(LearnerConfig{}, 12);
  l.train_epochs(f.examples, 2, 4);
  l.save(dir.path() / "a.ckpt");
  const Learner back = Learner::load(dir.path() / "a.ckpt");
  CHECK(back == l);
  std::ifstream in(dir.path() / "a.ckpt");
  std::string first;
  std::getline(in, first);
  CHECK(first == "placl-checkpoint v1");
  const auto size = std::filesystem::file_size(dir.path() / "a.ckpt");
  CHECK(size > 3 * 8 * l.parameters().size());

  std::ofstream bad(dir.path() / "bad.ckpt");
  bad << "not a checkpoint\n";
  bad.close();
  CHECK_THROWS_AS(Learner::load(dir.path() / "bad.ckpt"), InputError);
}
