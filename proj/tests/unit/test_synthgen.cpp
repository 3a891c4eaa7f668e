#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "placl/errors.hpp"
#include "placl/synthgen.hpp"
#include "test_support.hpp"

using namespace placl;
using namespace placl::synth;

namespace {

SynthConfig small_config(int n) {
  SynthConfig c;
  c.num_samples = n;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("invalid configurations name the offending field") {
  SynthConfig c;
  c.num_samples = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("num_samples"), ConfigError);
  c = SynthConfig{};
  c.image_size = 8;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("image_size"), ConfigError);
  c = SynthConfig{};
  c.num_keypoints = 1;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("num_keypoints"), ConfigError);
  c = SynthConfig{};
  c.occlusion_prob = 1.5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("occlusion_prob"), ConfigError);
  c = SynthConfig{};
  c.noise_level = -0.1;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("noise_level"), ConfigError);
  CHECK_THROWS_AS(generate_dataset(small_config(0), 1), ConfigError);
}

TEST_CASE("generation is deterministic in config and seed") {
  const auto a = generate_dataset(small_config(20), 11);
  const auto b = generate_dataset(small_config(20), 11);
  CHECK(a == b);
  const auto c = generate_dataset(small_config(20), 12);
  CHECK_FALSE(a == c);
}

TEST_CASE("every generated keypoint lies inside the image") {
  SynthConfig c = small_config(100);
  c.image_size = 32;
  c.num_keypoints = 5;
  const auto samples = generate_dataset(c, 7);
  REQUIRE(samples.size() == 100);
  std::size_t inside = 0, total = 0;
  for (const auto& s : samples) {
    CHECK(s.image().size == 32);
    CHECK(s.bbox_longest_side() > 0.0);
    for (double v : s.image().pixels) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (const auto& p : s.hidden_keypoints()) {
      ++total;
      if (p.x > 0.0 && p.x < 32.0 && p.y > 0.0 && p.y < 32.0) ++inside;
    }
  }
  CHECK(total == 500);
  CHECK(inside == total);
}

TEST_CASE("larger skeletons extend existing limbs") {
  CHECK(skeleton_parents(5) == std::vector<int>{-1, 0, 0, 0, 0});
  CHECK(skeleton_parents(9) == std::vector<int>{-1, 0, 0, 0, 0, 1, 2, 3, 4});
  CHECK(skeleton_parents(2) == std::vector<int>{-1, 0});
  SynthConfig c = small_config(10);
  c.num_keypoints = 12;
  for (const auto& s : generate_dataset(c, 3)) CHECK(s.hidden_keypoints().size() == 12);
}

TEST_CASE("unlabeled samples hide their keypoints from training") {
  const auto s = generate_dataset(small_config(1), 1).front();
  CHECK_NOTHROW(s.keypoints());
  const auto hidden = s.with_label_visibility(false);
  CHECK_THROWS_AS(hidden.keypoints(), StateError);
  CHECK(hidden.hidden_keypoints() == s.keypoints());
}

TEST_CASE("split sizes are floor-rounded with the remainder unlabeled") {
  const auto samples = generate_dataset(small_config(100), 2);
  const auto split = split_dataset(samples, 0.05, 0.1, 0.1, 9);
  CHECK(split.labeled.size() == 5);
  CHECK(split.validation.size() == 10);
  CHECK(split.test.size() == 10);
  CHECK(split.unlabeled.size() == 75);
  for (const auto& s : split.unlabeled) CHECK_FALSE(s.is_labeled());
  for (const auto& s : split.labeled) CHECK(s.is_labeled());
}

TEST_CASE("fractions that do not leave an unlabeled remainder are rejected") {
  const auto samples = generate_dataset(small_config(10), 2);
  CHECK_THROWS_AS(split_dataset(samples, 0.5, 0.3, 0.3, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(samples, 0.0, 0.3, 0.3, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(samples, 0.2, -0.1, 0.3, 1), ConfigError);
}

TEST_CASE("splits are disjoint and complete for many seeds") {
  const auto samples = generate_dataset(small_config(57), 4);
  std::multiset<int> all;
  for (const auto& s : samples) all.insert(s.id());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto split = split_dataset(samples, 0.1, 0.15, 0.2, seed);
    std::multiset<int> got;
    for (const auto* part : {&split.labeled, &split.unlabeled, &split.validation, &split.test}) {
      for (const auto& s : *part) got.insert(s.id());
    }
    CHECK(got == all);
    CHECK(std::set<int>(got.begin(), got.end()).size() == got.size());
    CHECK(split.labeled.size() <= split.unlabeled.size());
  }
  const auto a = split_dataset(samples, 0.1, 0.1, 0.1, 3);
  const auto b = split_dataset(samples, 0.1, 0.1, 0.1, 3);
  CHECK(a.labeled == b.labeled);
  CHECK(a.unlabeled == b.unlabeled);
}

TEST_CASE("datasets survive a save and load round trip") {
  TempDir dir("synth");
  DatasetManifest m;
  m.config = small_config(40);
  m.seed = 5;
  m.split_seed = 6;
  m.labeled_fraction = 0.1;
  m.val_fraction = 0.1;
  m.test_fraction = 0.2;
  const auto split = split_dataset(generate_dataset(m.config, m.seed), 0.1, 0.1, 0.2, m.split_seed);
  save_dataset(dir.path() / "a", m, split);
  const auto loaded = load_dataset(dir.path() / "a");
  CHECK(loaded.split.labeled == split.labeled);
  CHECK(loaded.split.unlabeled == split.unlabeled);
  CHECK(loaded.split.validation == split.validation);
  CHECK(loaded.split.test == split.test);
  CHECK(loaded.manifest.seed == 5);
  CHECK(loaded.manifest.config.num_samples == 40);

  save_dataset(dir.path() / "b", m, split);
  for (const char* f : {"manifest.json", "images.bin", "keypoints.tsv"}) {
    CHECK(slurp(dir.path() / "a" / f) == slurp(dir.path() / "b" / f));
  }
  std::ifstream tsv(dir.path() / "a" / "keypoints.tsv");
  std::string header;
  std::getline(tsv, header);
  CHECK(header == "sample_id\tk\tx\ty\tbbox_longest_side\tsplit");
  CHECK(std::filesystem::file_size(dir.path() / "a" / "images.bin") == 40u * 32 * 32 * 8);
}

TEST_CASE("loading a missing dataset reports the path") {
  CHECK_THROWS_WITH(load_dataset("/nonexistent/placl"), doctest::Contains("/nonexistent/placl"));
}
