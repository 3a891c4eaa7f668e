#include <fmt/format.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <optional>

#include "placl/errors.hpp"
#include "placl/metrics.hpp"
#include "placl/orchestrator.hpp"
#include "placl/synthgen.hpp"

namespace fs = std::filesystem;
using namespace placl;

namespace {

struct Common {
  std::string data_dir;
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, const char* out_help) {
  cmd->add_option("--data", c.data_dir, "Dataset directory written by `generate`")->required();
  cmd->add_option("--config", c.config_path, "JSON configuration (defaults when omitted)");
  cmd->add_option("--out", c.out, out_help)->required();
  cmd->add_option("--seed", c.seed, "Override the master seed");
}

orch::SearchConfig resolve_config(const Common& c) {
  orch::SearchConfig cfg = c.config_path.empty() ? orch::SearchConfig{} : orch::load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  orch::apply_environment(cfg);
  cfg.validate();
  return cfg;
}

void print_summary(const orch::SearchResult& r) {
  fmt::print("variant {}: pretrained val {:.4f} test {:.4f}\n", r.variant, r.pretrained_val, r.pretrained_test);
  for (const auto& p : r.rounds) {
    fmt::print("  round {} partition {} val {:.4f} test {:.4f} pseudo {} mean threshold {:.3f}\n", p.round,
               p.active_partition, p.val_score, p.test_score,
               p.pseudo_quality ? fmt::format("{:.4f}", *p.pseudo_quality) : std::string("-"),
               p.best_curriculum.mean());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-labeled auto-curriculum learning laboratory"};
  app.require_subcommand(1);

  synth::DatasetManifest gen;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Render a synthetic dataset and split it");
  generate->add_option("--out", gen_out, "Output directory")->required();
  generate->add_option("--samples", gen.config.num_samples, "Number of samples")->capture_default_str();
  generate->add_option("--image-size", gen.config.image_size, "Pixels per side")->capture_default_str();
  generate->add_option("--keypoints", gen.config.num_keypoints, "Keypoints per figure")->capture_default_str();
  generate->add_option("--pose-jitter", gen.config.pose_jitter)->capture_default_str();
  generate->add_option("--noise", gen.config.noise_level)->capture_default_str();
  generate->add_option("--occlusion", gen.config.occlusion_prob)->capture_default_str();
  generate->add_option("--seed", gen.seed, "Rendering seed")->capture_default_str();
  generate->add_option("--split-seed", gen.split_seed, "Split seed")->capture_default_str();
  gen.labeled_fraction = 0.05;
  gen.val_fraction = 0.10;
  gen.test_fraction = 0.15;
  generate->add_option("--labeled-fraction", gen.labeled_fraction)->capture_default_str();
  generate->add_option("--val-fraction", gen.val_fraction)->capture_default_str();
  generate->add_option("--test-fraction", gen.test_fraction)->capture_default_str();

  std::string init_out;
  auto* init = app.add_subcommand("init-config", "Write the default configuration as JSON");
  init->add_option("--out", init_out, "Output file; stdout when omitted");

  Common pre_opts;
  auto* pretrain = app.add_subcommand("pretrain", "Train on the labeled split only and save a checkpoint");
  add_common(pretrain, pre_opts, "Checkpoint path");

  Common search_opts;
  auto* search = app.add_subcommand("search", "Run the full curriculum search");
  add_common(search, search_opts, "Run directory");

  Common proxy_opts;
  double proxy_fraction = 0.25;
  auto* proxy = app.add_subcommand("proxy-search", "Search on a reduced training set, then replay on the full set");
  add_common(proxy, proxy_opts, "Run directory");
  proxy->add_option("--proxy-fraction", proxy_fraction, "Fraction of the training images kept for the search")
      ->capture_default_str();

  Common ablate_opts;
  std::string kind;
  double gamma = 0.0;
  auto* ablate = app.add_subcommand("ablate", "Run one ablation variant");
  add_common(ablate, ablate_opts, "Run directory");
  ablate
      ->add_option("--kind", kind,
                   "no_cross_training | fixed_threshold_search | random_search | manual_curriculum | "
                   "static_threshold | static_sweep")
      ->required();
  ablate->add_option("--gamma", gamma, "Threshold for static_threshold")->capture_default_str();

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Write plots for a finished run directory");
  report->add_option("--run", report_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      gen.config.validate();
      const auto samples = synth::generate_dataset(gen.config, gen.seed);
      const auto split = synth::split_dataset(samples, gen.labeled_fraction, gen.val_fraction, gen.test_fraction,
                                              gen.split_seed);
      synth::save_dataset(gen_out, gen, split);
      fmt::print("wrote {}: {} labeled, {} unlabeled, {} validation, {} test\n", gen_out, split.labeled.size(),
                 split.unlabeled.size(), split.validation.size(), split.test.size());
    } else if (*init) {
      const auto text = orch::config_to_json(orch::SearchConfig{});
      if (init_out.empty()) {
        fmt::print("{}", text);
      } else {
        std::FILE* f = std::fopen(init_out.c_str(), "w");
        if (!f) throw std::runtime_error("cannot open " + init_out);
        std::fputs(text.c_str(), f);
        std::fclose(f);
      }
    } else if (*pretrain) {
      const auto cfg = resolve_config(pre_opts);
      const auto data = synth::load_dataset(pre_opts.data_dir);
      const auto l = orch::pretrain(data.split, cfg);
      l.save(pre_opts.out);
      fmt::print("pretrained: val PCK {:.4f}, test PCK {:.4f}\n",
                 metrics::evaluate(l, data.split.validation, cfg.pck_alpha).pck,
                 metrics::evaluate(l, data.split.test, cfg.pck_alpha).pck);
    } else if (*search) {
      const auto cfg = resolve_config(search_opts);
      const auto data = synth::load_dataset(search_opts.data_dir);
      const auto r = orch::run_placl(data.split, cfg, {fs::path(search_opts.out), nullptr});
      print_summary(r);
    } else if (*proxy) {
      const auto cfg = resolve_config(proxy_opts);
      const auto data = synth::load_dataset(proxy_opts.data_dir);
      const std::size_t full = data.split.labeled.size() + data.split.unlabeled.size();
      const auto size = static_cast<std::size_t>(proxy_fraction * static_cast<double>(full));
      const auto r = orch::run_proxy_then_retrain(data.split, size, cfg, {fs::path(proxy_opts.out), nullptr});
      print_summary(r.proxy);
      print_summary(r.replay);
    } else if (*ablate) {
      const auto cfg = resolve_config(ablate_opts);
      const auto data = synth::load_dataset(ablate_opts.data_dir);
      const fs::path out(ablate_opts.out);
      if (kind == "static_sweep") {
        const auto pre = orch::pretrain(data.split, cfg);
        std::vector<metrics::ResultRow> rows;
        for (int i = 0; i <= 9; ++i) {
          const double g = i / 10.0;
          const auto r = orch::run_ablation("static_threshold", data.split, cfg,
                                            {out / orch::static_variant_name(g), &pre}, g);
          print_summary(r.result);
          rows.insert(rows.end(), r.result.rows.begin(), r.result.rows.end());
        }
        metrics::write_results_csv(out / "results.csv", rows);
      } else {
        const auto r = orch::run_ablation(kind, data.split, cfg, {out, nullptr}, gamma);
        print_summary(r.result);
      }
    } else if (*report) {
      for (const auto& p : metrics::write_report(report_dir)) fmt::print("wrote {}\n", p.string());
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
