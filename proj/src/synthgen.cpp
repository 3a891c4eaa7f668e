#include "placl/synthgen.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numbers>
#include <sstream>

#include "placl/errors.hpp"
#include "placl/rng.hpp"

namespace placl::synth {
namespace {

using nlohmann::json;

constexpr double kSegmentIntensity = 0.55;
constexpr double kSegmentHalfWidth = 0.5;
constexpr double kBlobRadius = 1.6;
constexpr double kRootBlobRadius = 2.0;
constexpr double kBorderMargin = 1.0;
constexpr int kMaxPoseAttempts = 10000;

void require_probability(double value, const char* field) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw ConfigError(fmt::format("SynthConfig.{} must lie in [0, 1], got {}", field, value));
  }
}

// Base direction (radians, y pointing down) and length (fraction of the image
// side) of the bone ending at joint k.
struct BoneSpec {
  double angle;
  double length;
};

BoneSpec bone_spec(int k) {
  static constexpr std::array<BoneSpec, 4> kFirstLevel{{
      {std::numbers::pi, 0.26},         // left arm
      {0.0, 0.26},                      // right arm
      {-std::numbers::pi / 2.0, 0.20},  // head
      {std::numbers::pi / 2.0, 0.24},   // pelvis
  }};
  if (k <= 4) return kFirstLevel[k - 1];
  return {bone_spec(k - 4).angle, 0.16};
}

double distance_to_segment(double px, double py, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = a.x + t * dx - px;
  const double qy = a.y + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

// Adds `intensity * coverage` to every pixel near the shape; coverage falls
// off linearly over one pixel outside `half_width` of the shape's skeleton.
template <typename DistanceFn>
void splat(std::vector<double>& canvas, int size, double xmin, double xmax, double ymin, double ymax,
           double half_width, double intensity, DistanceFn&& distance) {
  const int c0 = std::max(0, static_cast<int>(std::floor(xmin - half_width - 1.5)));
  const int c1 = std::min(size - 1, static_cast<int>(std::ceil(xmax + half_width + 1.5)));
  const int r0 = std::max(0, static_cast<int>(std::floor(ymin - half_width - 1.5)));
  const int r1 = std::min(size - 1, static_cast<int>(std::ceil(ymax + half_width + 1.5)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double d = distance(c + 0.5, r + 0.5);
      const double coverage = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
      if (coverage > 0.0) canvas[static_cast<std::size_t>(r) * size + c] += intensity * coverage;
    }
  }
}

Keypoints sample_pose(const SynthConfig& config, const std::vector<int>& parents, rng::CounterRng& rng) {
  const double size = config.image_size;
  const double jitter = config.pose_jitter;
  for (int attempt = 0; attempt < kMaxPoseAttempts; ++attempt) {
    Keypoints joints(static_cast<std::size_t>(config.num_keypoints));
    std::vector<double> bone_angle(static_cast<std::size_t>(config.num_keypoints), 0.0);
    joints[0] = {size / 2.0 + rng.uniform(-0.08, 0.08) * size, size / 2.0 + rng.uniform(-0.08, 0.08) * size};
    const double global_rotation = rng.uniform(-1.0, 1.0) * jitter * std::numbers::pi / 6.0;
    const double scale = rng.uniform(0.85, 1.1);
    for (int k = 1; k < config.num_keypoints; ++k) {
      const BoneSpec spec = bone_spec(k);
      const double angle = spec.angle + global_rotation + rng.uniform(-1.0, 1.0) * jitter * std::numbers::pi / 4.0;
      const double length = spec.length * size * scale * rng.uniform(0.9, 1.1);
      const Point& from = joints[static_cast<std::size_t>(parents[k])];
      joints[k] = {from.x + length * std::cos(angle), from.y + length * std::sin(angle)};
      bone_angle[k] = angle;
    }
    const bool inside = std::all_of(joints.begin(), joints.end(), [&](const Point& p) {
      return p.x >= kBorderMargin && p.x < size - kBorderMargin && p.y >= kBorderMargin &&
             p.y < size - kBorderMargin;
    });
    if (inside) return joints;
  }
  throw ConfigError("SynthConfig.image_size too small: could not place a figure inside the image");
}

KeypointSample render_sample(const SynthConfig& config, const std::vector<int>& parents, int id,
                             std::uint64_t seed) {
  rng::CounterRng rng(rng::derive_seed({seed, 0x5A17ULL, static_cast<std::uint64_t>(id)}));
  Keypoints joints = sample_pose(config, parents, rng);
  const int size = config.image_size;
  std::vector<double> canvas(static_cast<std::size_t>(size) * size, 0.0);

  for (int k = 0; k < config.num_keypoints; ++k) {
    const bool occluded = k > 0 && rng.uniform() < config.occlusion_prob;
    if (occluded) continue;
    const Point p = joints[k];
    if (k > 0) {
      const Point a = joints[static_cast<std::size_t>(parents[k])];
      splat(canvas, size, std::min(a.x, p.x), std::max(a.x, p.x), std::min(a.y, p.y), std::max(a.y, p.y),
            kSegmentHalfWidth, kSegmentIntensity,
            [&](double x, double y) { return distance_to_segment(x, y, a, p); });
    }
    const double radius = k == 0 ? kRootBlobRadius : kBlobRadius;
    splat(canvas, size, p.x, p.x, p.y, p.y, radius, 1.0, [&](double x, double y) {
      return std::hypot(x - p.x, y - p.y);
    });
  }

  Image image(size);
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    const double noise = config.noise_level > 0.0 ? rng.uniform(-config.noise_level, config.noise_level) : 0.0;
    image.pixels[i] = std::clamp(canvas[i] + noise, 0.0, 1.0);
  }
  const double bbox = bbox_longest_side(joints);
  return KeypointSample(id, std::move(image), std::move(joints), bbox, true);
}

void write_le_double(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

double read_le_double(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw InputError("images.bin is truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

json config_to_json(const SynthConfig& c) {
  return json{{"image_size", c.image_size},   {"num_keypoints", c.num_keypoints},
              {"num_samples", c.num_samples}, {"pose_jitter", c.pose_jitter},
              {"noise_level", c.noise_level}, {"occlusion_prob", c.occlusion_prob}};
}

SynthConfig config_from_json(const json& j) {
  SynthConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.num_keypoints = j.at("num_keypoints").get<int>();
  c.num_samples = j.at("num_samples").get<int>();
  c.pose_jitter = j.at("pose_jitter").get<double>();
  c.noise_level = j.at("noise_level").get<double>();
  c.occlusion_prob = j.at("occlusion_prob").get<double>();
  return c;
}

std::vector<int> ids_of(const SampleList& list) {
  std::vector<int> ids;
  ids.reserve(list.size());
  for (const auto& s : list) ids.push_back(s.id());
  return ids;
}

}  // namespace

void SynthConfig::validate() const {
  if (image_size < 16) throw ConfigError(fmt::format("SynthConfig.image_size must be >= 16, got {}", image_size));
  if (num_keypoints < 2) {
    throw ConfigError(fmt::format("SynthConfig.num_keypoints must be >= 2, got {}", num_keypoints));
  }
  if (num_samples < 1) throw ConfigError(fmt::format("SynthConfig.num_samples must be >= 1, got {}", num_samples));
  if (!(pose_jitter >= 0.0 && std::isfinite(pose_jitter))) {
    throw ConfigError(fmt::format("SynthConfig.pose_jitter must be finite and >= 0, got {}", pose_jitter));
  }
  require_probability(noise_level, "noise_level");
  require_probability(occlusion_prob, "occlusion_prob");
}

KeypointSample::KeypointSample(int id, Image image, Keypoints keypoints, double bbox_longest_side, bool is_labeled)
    : id_(id),
      image_(std::move(image)),
      keypoints_(std::move(keypoints)),
      bbox_longest_side_(bbox_longest_side),
      is_labeled_(is_labeled) {
  if (!(bbox_longest_side_ > 0.0)) throw InputError("KeypointSample: bbox_longest_side must be > 0");
  for (const Point& p : keypoints_) {
    if (!(p.x >= 0.0 && p.x < image_.size && p.y >= 0.0 && p.y < image_.size)) {
      throw InputError(fmt::format("KeypointSample {}: keypoint ({}, {}) outside the image", id_, p.x, p.y));
    }
  }
}

const Keypoints& KeypointSample::keypoints() const {
  if (!is_labeled_) throw StateError(fmt::format("sample {} is unlabeled; its annotation is hidden", id_));
  return keypoints_;
}

KeypointSample KeypointSample::with_label_visibility(bool labeled) const {
  KeypointSample copy = *this;
  copy.is_labeled_ = labeled;
  return copy;
}

std::vector<int> skeleton_parents(int num_keypoints) {
  std::vector<int> parents(static_cast<std::size_t>(num_keypoints), 0);
  if (num_keypoints > 0) parents[0] = -1;
  for (int k = 5; k < num_keypoints; ++k) parents[k] = k - 4;
  return parents;
}

double bbox_longest_side(const Keypoints& keypoints) {
  if (keypoints.empty()) return 1.0;
  double xmin = keypoints[0].x, xmax = xmin, ymin = keypoints[0].y, ymax = ymin;
  for (const Point& p : keypoints) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  return std::max({xmax - xmin, ymax - ymin, 1.0});
}

SampleList generate_dataset(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const auto parents = skeleton_parents(config.num_keypoints);
  SampleList samples;
  samples.reserve(static_cast<std::size_t>(config.num_samples));
  for (int i = 0; i < config.num_samples; ++i) samples.push_back(render_sample(config, parents, i, seed));
  return samples;
}

DatasetSplit split_dataset(const SampleList& samples, double labeled_fraction, double val_fraction,
                           double test_fraction, std::uint64_t seed) {
  if (!(labeled_fraction > 0.0) || !(val_fraction > 0.0) || !(test_fraction > 0.0)) {
    throw ConfigError(fmt::format("split fractions must be positive (labeled={}, val={}, test={})",
                                  labeled_fraction, val_fraction, test_fraction));
  }
  if (!(labeled_fraction + val_fraction + test_fraction < 1.0)) {
    throw ConfigError(fmt::format("split fractions must sum to < 1 (labeled={} + val={} + test={})",
                                  labeled_fraction, val_fraction, test_fraction));
  }
  const std::size_t n = samples.size();
  const auto count = [n](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n))); };
  const std::size_t n_labeled = count(labeled_fraction);
  const std::size_t n_val = count(val_fraction);
  const std::size_t n_test = count(test_fraction);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng::CounterRng rng(rng::derive_seed({seed, 0x5B117ULL}));
  rng::shuffle(std::span<std::size_t>(order), rng);

  DatasetSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    const KeypointSample& s = samples[order[i]];
    if (i < n_labeled) {
      split.labeled.push_back(s.with_label_visibility(true));
    } else if (i < n_labeled + n_val) {
      split.validation.push_back(s.with_label_visibility(true));
    } else if (i < n_labeled + n_val + n_test) {
      split.test.push_back(s.with_label_visibility(true));
    } else {
      split.unlabeled.push_back(s.with_label_visibility(false));
    }
  }
  return split;
}

void save_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest, const DatasetSplit& split) {
  std::filesystem::create_directories(dir);
  struct Tagged {
    const KeypointSample* sample;
    const char* split;
  };
  std::map<int, Tagged> by_id;
  const std::array<std::pair<const SampleList*, const char*>, 4> parts{
      {{&split.labeled, "labeled"}, {&split.unlabeled, "unlabeled"}, {&split.validation, "validation"},
       {&split.test, "test"}}};
  for (const auto& [list, name] : parts) {
    for (const auto& s : *list) by_id[s.id()] = {&s, name};
  }

  json m;
  m["format"] = "placl-dataset";
  m["version"] = 1;
  m["config"] = config_to_json(manifest.config);
  m["seed"] = manifest.seed;
  m["split_seed"] = manifest.split_seed;
  m["fractions"] = {{"labeled", manifest.labeled_fraction},
                    {"validation", manifest.val_fraction},
                    {"test", manifest.test_fraction}};
  m["splits"] = {{"labeled", ids_of(split.labeled)},
                 {"unlabeled", ids_of(split.unlabeled)},
                 {"validation", ids_of(split.validation)},
                 {"test", ids_of(split.test)}};
  m["images_file"] = "images.bin";
  m["images_layout"] = "float64 little-endian, one image_size*image_size row-major block per sample, ascending sample_id";
  m["keypoints_file"] = "keypoints.tsv";
  m["keypoints_columns"] = {"sample_id", "k", "x", "y", "bbox_longest_side", "split"};
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';

  std::ofstream images(dir / "images.bin", std::ios::binary);
  std::ofstream table(dir / "keypoints.tsv");
  table << "sample_id\tk\tx\ty\tbbox_longest_side\tsplit\n";
  for (const auto& [id, tagged] : by_id) {
    for (double v : tagged.sample->image().pixels) write_le_double(images, v);
    const Keypoints& kps = tagged.sample->hidden_keypoints();
    for (std::size_t k = 0; k < kps.size(); ++k) {
      table << fmt::format("{}\t{}\t{:.17g}\t{:.17g}\t{:.17g}\t{}\n", id, k, kps[k].x, kps[k].y,
                           tagged.sample->bbox_longest_side(), tagged.split);
    }
  }
  if (!images || !table) throw InputError(fmt::format("failed writing dataset to {}", dir.string()));
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest_file(dir / "manifest.json");
  if (!manifest_file) throw InputError(fmt::format("no manifest.json in {}", dir.string()));
  const json m = json::parse(manifest_file);
  if (m.value("format", "") != "placl-dataset") throw InputError("manifest.json is not a placl dataset");

  LoadedDataset out;
  out.manifest.config = config_from_json(m.at("config"));
  out.manifest.seed = m.at("seed").get<std::uint64_t>();
  out.manifest.split_seed = m.at("split_seed").get<std::uint64_t>();
  out.manifest.labeled_fraction = m.at("fractions").at("labeled").get<double>();
  out.manifest.val_fraction = m.at("fractions").at("validation").get<double>();
  out.manifest.test_fraction = m.at("fractions").at("test").get<double>();
  const SynthConfig& config = out.manifest.config;

  std::map<int, Keypoints> keypoints;
  std::map<int, double> bbox;
  std::ifstream table(dir / "keypoints.tsv");
  if (!table) throw InputError("missing keypoints.tsv");
  std::string line;
  std::getline(table, line);  // header
  while (std::getline(table, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    int id = 0, k = 0;
    double x = 0, y = 0, side = 0;
    std::string split_name;
    row >> id >> k >> x >> y >> side >> split_name;
    if (!row) throw InputError(fmt::format("malformed keypoints.tsv row: {}", line));
    auto& kps = keypoints[id];
    if (static_cast<int>(kps.size()) != k) throw InputError("keypoints.tsv rows out of order");
    kps.push_back({x, y});
    bbox[id] = side;
  }

  std::ifstream images(dir / "images.bin", std::ios::binary);
  if (!images) throw InputError("missing images.bin");
  std::map<int, KeypointSample> samples;
  for (const auto& [id, kps] : keypoints) {
    Image image(config.image_size);
    for (double& v : image.pixels) v = read_le_double(images);
    samples.emplace(id, KeypointSample(id, std::move(image), kps, bbox.at(id), true));
  }

  const auto collect = [&](const char* name, bool labeled) {
    SampleList list;
    for (int id : m.at("splits").at(name).get<std::vector<int>>()) {
      auto it = samples.find(id);
      if (it == samples.end()) throw InputError(fmt::format("split {} references unknown sample {}", name, id));
      list.push_back(it->second.with_label_visibility(labeled));
    }
    return list;
  };
  out.split.labeled = collect("labeled", true);
  out.split.unlabeled = collect("unlabeled", false);
  out.split.validation = collect("validation", true);
  out.split.test = collect("test", true);
  return out;
}

}  // namespace placl::synth
