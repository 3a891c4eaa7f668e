#include "placl/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "placl/curriculum.hpp"
#include "placl/errors.hpp"

namespace placl::metrics {

EvalReport pck(std::span<const Keypoints> predictions, std::span<const Keypoints> ground_truths,
               std::span<const double> bbox_sides, double alpha) {
  if (predictions.size() != ground_truths.size() || predictions.size() != bbox_sides.size()) {
    throw InputError(fmt::format("pck needs equal lengths, got {} predictions, {} truths, {} box sides",
                                 predictions.size(), ground_truths.size(), bbox_sides.size()));
  }
  if (!(alpha > 0.0)) throw InputError(fmt::format("pck alpha must be positive, got {}", alpha));
  EvalReport report;
  report.alpha = alpha;
  report.n_samples = predictions.size();
  std::vector<std::size_t> correct;
  std::vector<std::size_t> counted;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& t = ground_truths[i];
    if (p.size() != t.size()) {
      throw InputError(fmt::format("sample {} has {} predicted and {} true keypoints", i, p.size(), t.size()));
    }
    if (t.size() > correct.size()) {
      correct.resize(t.size(), 0);
      counted.resize(t.size(), 0);
    }
    const double limit = alpha * bbox_sides[i];
    for (std::size_t k = 0; k < t.size(); ++k) {
      ++counted[k];
      if (std::hypot(p[k].x - t[k].x, p[k].y - t[k].y) <= limit) ++correct[k];
    }
  }
  std::size_t total_correct = 0;
  std::size_t total = 0;
  for (std::size_t k = 0; k < correct.size(); ++k) {
    report.per_keypoint_pck.push_back(static_cast<double>(correct[k]) / static_cast<double>(counted[k]));
    total_correct += correct[k];
    total += counted[k];
  }
  report.pck = total ? static_cast<double>(total_correct) / static_cast<double>(total) : 0.0;
  return report;
}

EvalReport evaluate(const learner::Learner& learner, std::span<const synth::KeypointSample> samples, double alpha) {
  std::vector<Keypoints> pred;
  std::vector<Keypoints> truth;
  std::vector<double> sides;
  pred.reserve(samples.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    std::vector<const Image*> images;
    for (std::size_t i = begin; i < end; ++i) images.push_back(&samples[i].image());
    for (const auto& maps : learner.forward_batch(images)) {
      pred.push_back(learner::decode(maps, learner.config().image_size).keypoints);
    }
  }
  for (const auto& s : samples) {
    truth.push_back(s.hidden_keypoints());
    sides.push_back(s.bbox_longest_side());
  }
  return pck(pred, truth, sides, alpha);
}

std::optional<double> pseudo_label_quality(const pseudo::PseudoLabeledSet& set, double alpha) {
  if (set.entries.empty()) return std::nullopt;
  std::vector<Keypoints> pred;
  std::vector<Keypoints> truth;
  std::vector<double> sides;
  for (const auto& e : set.entries) {
    if (e.sample == nullptr || e.sample->hidden_keypoints().empty()) {
      throw StateError("pseudo-label quality needs the hidden ground truth of every sample");
    }
    pred.push_back(e.label.keypoints);
    truth.push_back(e.sample->hidden_keypoints());
    sides.push_back(e.sample->bbox_longest_side());
  }
  return pck(pred, truth, sides, alpha).pck;
}

namespace {

std::string format_optional(const std::optional<double>& v) {
  return v ? fmt::format("{:.17g}", *v) : std::string();
}

std::optional<double> parse_optional(const std::string& field) {
  if (field.empty()) return std::nullopt;
  std::size_t used = 0;
  const double v = std::stod(field, &used);
  if (used != field.size()) throw InputError(fmt::format("trailing characters in number '{}'", field));
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string format_results_csv(std::span<const ResultRow> rows) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows) {
    if (r.variant.find_first_of(",\n") != std::string::npos) {
      throw InputError(fmt::format("variant name '{}' contains a separator", r.variant));
    }
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.variant, r.seed, r.round, r.step, format_optional(r.val_pck),
                       format_optional(r.test_pck), format_optional(r.pseudo_quality),
                       format_optional(r.mean_threshold));
  }
  return out;
}

std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw InputError(fmt::format("results table must start with '{}'", kResultsHeader));
  }
  std::vector<ResultRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw InputError(fmt::format("results line {} has {} fields, expected 8", line_no, f.size()));
    try {
      ResultRow r;
      r.variant = f[0];
      r.seed = std::stoull(f[1]);
      r.round = std::stoi(f[2]);
      r.step = std::stoi(f[3]);
      r.val_pck = parse_optional(f[4]);
      r.test_pck = parse_optional(f[5]);
      r.pseudo_quality = parse_optional(f[6]);
      r.mean_threshold = parse_optional(f[7]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw InputError(fmt::format("malformed results line {}: '{}'", line_no, line));
    }
  }
  return rows;
}

void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
  out << format_results_csv(rows);
  if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open results table {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_results_csv(buf.str());
}

namespace {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
  bool dashed = false;
  bool markers_only = false;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

// Minimal line chart. Every series is echoed in a comment block so the data
// can be scraped back without parsing the geometry.
std::string render_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                         const std::vector<Series>& series) {
  constexpr double W = 640, H = 420, L = 70, R = 160, T = 40, B = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.05, y1 += 0.05;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::string svg = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
      W, H, W, H);
  svg += "<!-- data\n";
  for (const auto& s : series) {
    svg += fmt::format("series {}\n", s.name);
    for (auto [x, y] : s.points) svg += fmt::format("  {:.6f} {:.6f}\n", x, y);
  }
  svg += "-->\n";
  svg += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n", W, H);
  svg += fmt::format("<text x=\"{}\" y=\"24\" font-size=\"15\" font-family=\"sans-serif\">{}</text>\n", L, title);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", L, H - B, W - R);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", L, T, H - B);
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" "
                       "font-family=\"sans-serif\">{:.3g}</text>\n",
                       sx(xv), H - B + 16, xv);
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" font-size=\"11\" text-anchor=\"end\" "
                       "font-family=\"sans-serif\">{:.3f}</text>\n",
                       L - 6, sy(yv) + 4, yv);
  }
  svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" "
                     "font-family=\"sans-serif\">{}</text>\n",
                     (L + W - R) / 2, H - 12, xlabel);
  svg += fmt::format("<text x=\"16\" y=\"{:.1f}\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                     "transform=\"rotate(-90 16 {:.1f})\">{}</text>\n",
                     (T + H - B) / 2, (T + H - B) / 2, ylabel);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    if (!s.markers_only && s.points.size() > 1) {
      std::string pts;
      for (auto [x, y] : s.points) pts += fmt::format("{:.1f},{:.1f} ", sx(x), sy(y));
      svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{} points=\"{}\"/>\n", color,
                         s.dashed ? " stroke-dasharray=\"6 4\"" : "", pts);
    }
    for (auto [x, y] : s.points) {
      svg += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"{}\"/>\n", sx(x), sy(y), color);
    }
    const double ly = T + 16.0 * static_cast<double>(i);
    svg += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                       W - R + 10, ly, W - R + 28, ly, color);
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
                       W - R + 32, ly + 4, s.name);
  }
  svg += "</svg>\n";
  return svg;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
  out << text;
}

bool is_static_variant(const std::string& v) { return v.rfind("static_", 0) == 0; }

// Mean over seeds of a field of the round-final rows, keyed by variant then
// round.
template <typename Field>
std::map<std::string, std::map<int, double>> per_round_means(const std::vector<ResultRow>& rows, Field field,
                                                             bool skip_round0) {
  std::map<std::string, std::map<int, std::pair<double, int>>> acc;
  for (const auto& r : rows) {
    if (r.step != -1 || (skip_round0 && r.round == 0)) continue;
    const auto v = field(r);
    if (!v) continue;
    auto& a = acc[r.variant][r.round];
    a.first += *v;
    ++a.second;
  }
  std::map<std::string, std::map<int, double>> out;
  for (const auto& [variant, rounds] : acc) {
    for (const auto& [round, a] : rounds) out[variant][round] = a.first / a.second;
  }
  return out;
}

}  // namespace

std::vector<std::filesystem::path> write_report(const std::filesystem::path& run_dir) {
  std::vector<std::string> missing;
  const auto results_path = run_dir / "results.csv";
  if (!std::filesystem::exists(results_path)) missing.push_back(results_path.string());
  std::vector<std::filesystem::path> curricula_files;
  if (std::filesystem::is_directory(run_dir)) {
    for (const auto& e : std::filesystem::directory_iterator(run_dir)) {
      const auto name = e.path().filename().string();
      if (name.rfind("curricula", 0) == 0 && e.path().extension() == ".txt") curricula_files.push_back(e.path());
    }
  }
  std::sort(curricula_files.begin(), curricula_files.end());
  if (curricula_files.empty()) missing.push_back((run_dir / "curricula.txt").string());
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw InputError(fmt::format("run directory {} is incomplete; missing:{}", run_dir.string(), list));
  }

  const auto rows = read_results_csv(results_path);
  std::vector<std::filesystem::path> written;

  {
    std::vector<Series> series;
    for (const auto& [variant, rounds] :
         per_round_means(rows, [](const ResultRow& r) { return r.val_pck; }, true)) {
      if (is_static_variant(variant)) continue;
      Series s{variant + " val", {}};
      for (auto [round, v] : rounds) s.points.emplace_back(round, v);
      series.push_back(std::move(s));
    }
    const auto path = run_dir / "score_curve.svg";
    write_text(path, render_chart("Validation PCK per round", "round", "val PCK", series));
    written.push_back(path);
  }

  {
    std::vector<Series> series;
    for (const auto& file : curricula_files) {
      for (const auto& c : curriculum::read_curricula(file)) {
        Series s{fmt::format("{} r{}", file.stem().string(), c.round), {}};
        for (std::size_t g = 0; g < c.thresholds.size(); ++g) s.points.emplace_back(g, c.thresholds[g]);
        series.push_back(std::move(s));
      }
    }
    const auto path = run_dir / "thresholds.svg";
    write_text(path, render_chart("Searched thresholds per epoch group", "epoch group", "threshold", series));
    written.push_back(path);
  }

  {
    std::vector<Series> series;
    for (const auto& [variant, rounds] :
         per_round_means(rows, [](const ResultRow& r) { return r.pseudo_quality; }, true)) {
      if (is_static_variant(variant)) continue;
      Series s{variant, {}};
      for (auto [round, v] : rounds) s.points.emplace_back(round, v);
      series.push_back(std::move(s));
    }
    const auto path = run_dir / "pseudo_quality.svg";
    write_text(path, render_chart("Pseudo-label quality per round", "round", "pseudo-label PCK", series));
    written.push_back(path);
  }

  const auto test_means = per_round_means(rows, [](const ResultRow& r) { return r.test_pck; }, false);
  Series sweep{"static threshold", {}, false, true};
  for (const auto& [variant, rounds] : test_means) {
    if (!is_static_variant(variant) || rounds.empty()) continue;
    sweep.points.emplace_back(std::stod(variant.substr(7)), rounds.rbegin()->second);
  }
  if (!sweep.points.empty()) {
    std::sort(sweep.points.begin(), sweep.points.end());
    std::vector<Series> series{sweep};
    const auto lo = sweep.points.front().first;
    const auto hi = sweep.points.back().first;
    for (const auto& [variant, rounds] : test_means) {
      if (is_static_variant(variant) || rounds.empty() || variant == "supervised") continue;
      const double v = rounds.rbegin()->second;
      series.push_back(Series{variant, {{lo, v}, {hi, v}}, true});
    }
    const auto path = run_dir / "static_sweep.svg";
    write_text(path, render_chart("Final test PCK: static thresholds vs searched", "static threshold", "test PCK",
                                  series));
    written.push_back(path);
  }
  return written;
}

}  // namespace placl::metrics
