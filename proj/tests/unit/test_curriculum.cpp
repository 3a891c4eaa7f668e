#include <doctest.h>

#include <random>

#include "placl/curriculum.hpp"
#include "placl/errors.hpp"
#include "test_support.hpp"

using namespace placl;
using namespace placl::curriculum;

TEST_CASE("zeros has the requested length and round 0") {
  CHECK(zeros(3).thresholds == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(zeros(1).thresholds.size() == 1);
  CHECK(zeros(21).thresholds.size() == 21);
  CHECK(zeros(3).round == 0);
  CHECK_THROWS_AS(zeros(0), InputError);
}

TEST_CASE("compose adds, clamps and advances the round") {
  const Curriculum base{{0.2, 0.5}, 2};
  const auto c = compose(base, {{0.1, 0.1}});
  CHECK(c.thresholds[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(c.thresholds[1] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(c.round == 3);
  CHECK(compose(Curriculum{{0.9}, 0}, {{0.5}}).thresholds == std::vector<double>{1.0});
  CHECK_THROWS_AS(compose(base, {{0.1}}), InputError);
}

TEST_CASE("composing onto zeros clamps the delta") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    CurriculumDelta d{std::vector<double>(6)};
    for (double& x : d.deltas) x = u(gen);
    const auto c = compose(zeros(6), d);
    for (std::size_t i = 0; i < 6; ++i) CHECK(c.thresholds[i] == std::min(1.0, std::max(0.0, d.deltas[i])));
  }
}

TEST_CASE("nonnegative deltas never lower a threshold") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Curriculum base{std::vector<double>(4), 0};
    CurriculumDelta d{std::vector<double>(4)};
    for (double& x : base.thresholds) x = u(gen);
    for (double& x : d.deltas) x = u(gen);
    const auto c = compose(base, d);
    for (std::size_t i = 0; i < 4; ++i) violations += c.thresholds[i] < base.thresholds[i];
  }
  CHECK(violations == 0);
}

TEST_CASE("epoch lookup is constant within each group") {
  const Curriculum c{{0.1, 0.2, 0.3}, 1};
  for (int e = 0; e < 10; ++e) CHECK(threshold_for_epoch(c, e, 10) == 0.1);
  CHECK(threshold_for_epoch(c, 10, 10) == 0.2);
  CHECK(threshold_for_epoch(c, 29, 10) == 0.3);
  CHECK_THROWS_AS(threshold_for_epoch(c, 30, 10), InputError);
  CHECK_THROWS_AS(threshold_for_epoch(c, -1, 10), InputError);

  const Curriculum d{{0.5, 0.25, 0.75, 1.0}, 0};
  const int g = 3;
  std::vector<double> table;
  for (double t : d.thresholds) table.insert(table.end(), g, t);
  for (int e = 0; e < static_cast<int>(table.size()); ++e) CHECK(threshold_for_epoch(d, e, g) == table[e]);
}

TEST_CASE("curricula serialize one line per round with six decimals") {
  const Curriculum c{{0.1234567, 1.0, 0.0}, 4};
  CHECK(format_line(c) == "4 0.123457 1.000000 0.000000");
  const auto back = parse_line(format_line(c));
  CHECK(back.round == 4);
  CHECK(back.thresholds == std::vector<double>{0.123457, 1.0, 0.0});
  CHECK_THROWS_AS(parse_line("x 0.1"), InputError);
  CHECK_THROWS_AS(parse_line("1 1.5"), InputError);
  CHECK_THROWS_AS(parse_line("1"), InputError);

  TempDir dir("curr");
  const std::vector<Curriculum> all{{{0.1, 0.2}, 1}, {{0.3, 0.4}, 2}};
  write_curricula(dir.path() / "c.txt", all);
  CHECK(read_curricula(dir.path() / "c.txt") == all);
}
