#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "placl/curriculum.hpp"
#include "placl/errors.hpp"
#include "placl/learner.hpp"
#include "placl/metrics.hpp"
#include "placl/orchestrator.hpp"
#include "placl/policy.hpp"
#include "placl/pseudolabel.hpp"
#include "placl/synthgen.hpp"

namespace py = pybind11;
using namespace placl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array image_array(const Image& img) {
  Array out({img.size, img.size});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

Image to_image(const Array& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw InputError("image must be a square 2-D array");
  Image img(static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

Array keypoint_array(const Keypoints& k) {
  Array out({static_cast<py::ssize_t>(k.size()), py::ssize_t{2}});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < k.size(); ++i) {
    m(i, 0) = k[i].x;
    m(i, 1) = k[i].y;
  }
  return out;
}

Keypoints to_keypoints(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw InputError("keypoints must have shape (K, 2)");
  Keypoints k;
  auto m = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) k.push_back({m(i, 0), m(i, 1)});
  return k;
}

Array heatmap_array(const HeatmapStack& h) {
  Array out({h.num_maps, h.size, h.size});
  std::copy(h.values.begin(), h.values.end(), out.mutable_data());
  return out;
}

HeatmapStack to_heatmaps(const Array& a) {
  if (a.ndim() != 3 || a.shape(1) != a.shape(2)) throw InputError("heatmaps must have shape (K, S, S)");
  HeatmapStack h(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), h.values.begin());
  return h;
}

py::dict summarize(const orch::SearchResult& r) {
  py::dict d;
  d["variant"] = r.variant;
  d["pretrained_val"] = r.pretrained_val;
  d["pretrained_test"] = r.pretrained_test;
  d["final_val"] = r.final_val();
  d["final_test"] = r.final_test();
  std::vector<std::vector<double>> curricula;
  for (const auto& c : r.curricula) curricula.push_back(c.thresholds);
  d["curricula"] = curricula;
  py::list rounds;
  for (const auto& p : r.rounds) {
    py::dict row;
    row["round"] = p.round;
    row["partition"] = p.active_partition;
    row["val_pck"] = p.val_score;
    row["test_pck"] = p.test_score;
    row["pseudo_quality"] = p.pseudo_quality;
    row["policy_updates"] = p.policy_updates;
    row["inner_trainings"] = p.inner_trainings;
    rounds.append(row);
  }
  d["rounds"] = rounds;
  d["rows"] = r.rows;
  d["run_dir"] = r.run_dir;
  return d;
}

orch::RunOptions options(const std::optional<std::filesystem::path>& run_dir) { return {run_dir, nullptr}; }

}  // namespace

PYBIND11_MODULE(_placl, m) {
  m.doc() = "Pseudo-labeled auto-curriculum learning";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  // synthetic data
  py::class_<synth::SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("image_size", &synth::SynthConfig::image_size)
      .def_readwrite("num_keypoints", &synth::SynthConfig::num_keypoints)
      .def_readwrite("num_samples", &synth::SynthConfig::num_samples)
      .def_readwrite("pose_jitter", &synth::SynthConfig::pose_jitter)
      .def_readwrite("noise_level", &synth::SynthConfig::noise_level)
      .def_readwrite("occlusion_prob", &synth::SynthConfig::occlusion_prob)
      .def("validate", &synth::SynthConfig::validate);

  py::class_<synth::KeypointSample>(m, "KeypointSample")
      .def_property_readonly("id", &synth::KeypointSample::id)
      .def_property_readonly("image", [](const synth::KeypointSample& s) { return image_array(s.image()); })
      .def_property_readonly("keypoints", [](const synth::KeypointSample& s) { return keypoint_array(s.keypoints()); })
      .def_property_readonly("hidden_keypoints",
                             [](const synth::KeypointSample& s) { return keypoint_array(s.hidden_keypoints()); })
      .def_property_readonly("bbox_longest_side", &synth::KeypointSample::bbox_longest_side)
      .def_property_readonly("is_labeled", &synth::KeypointSample::is_labeled);

  py::class_<synth::DatasetSplit>(m, "DatasetSplit")
      .def_readonly("labeled", &synth::DatasetSplit::labeled)
      .def_readonly("unlabeled", &synth::DatasetSplit::unlabeled)
      .def_readonly("validation", &synth::DatasetSplit::validation)
      .def_readonly("test", &synth::DatasetSplit::test);

  m.def("generate_dataset", &synth::generate_dataset, py::arg("config"), py::arg("seed"));
  m.def("split_dataset", &synth::split_dataset, py::arg("samples"), py::arg("labeled_fraction") = 0.05,
        py::arg("val_fraction") = 0.10, py::arg("test_fraction") = 0.15, py::arg("seed") = 0);
  m.def(
      "load_split", [](const std::filesystem::path& dir) { return synth::load_dataset(dir).split; }, py::arg("path"));

  // learner
  py::class_<learner::LearnerConfig>(m, "LearnerConfig")
      .def(py::init<>())
      .def_readwrite("image_size", &learner::LearnerConfig::image_size)
      .def_readwrite("num_keypoints", &learner::LearnerConfig::num_keypoints)
      .def_readwrite("conv_channels", &learner::LearnerConfig::conv_channels)
      .def_readwrite("kernel_size", &learner::LearnerConfig::kernel_size)
      .def_readwrite("heatmap_size", &learner::LearnerConfig::heatmap_size)
      .def_readwrite("target_sigma", &learner::LearnerConfig::target_sigma)
      .def_readwrite("learning_rate", &learner::LearnerConfig::learning_rate)
      .def_readwrite("decay_epochs", &learner::LearnerConfig::decay_epochs)
      .def_readwrite("decay_factor", &learner::LearnerConfig::decay_factor)
      .def("validate", &learner::LearnerConfig::validate);

  py::class_<learner::Learner>(m, "Learner")
      .def(py::init<learner::LearnerConfig, std::uint64_t>(), py::arg("config"), py::arg("seed"))
      .def_property_readonly("step", &learner::Learner::step)
      .def_property_readonly("epoch", &learner::Learner::epoch)
      .def_property_readonly("parameters",
                             [](const learner::Learner& l) {
                               const auto p = l.parameters();
                               Array out(static_cast<py::ssize_t>(p.size()));
                               std::copy(p.begin(), p.end(), out.mutable_data());
                               return out;
                             })
      .def("forward", [](const learner::Learner& l, const Array& img) { return heatmap_array(l.forward(to_image(img))); })
      .def(
          "train",
          [](learner::Learner& l, const synth::SampleList& samples, int epochs, int batch_size) {
            std::vector<learner::TrainExample> ex;
            for (const auto& s : samples) ex.push_back({&s.image(), s.keypoints()});
            py::gil_scoped_release release;
            return l.train_epochs(ex, epochs, batch_size);
          },
          py::arg("samples"), py::arg("epochs"), py::arg("batch_size") = 8)
      .def("evaluate",
           [](const learner::Learner& l, const synth::SampleList& samples, double alpha) {
             return metrics::evaluate(l, samples, alpha).pck;
           },
           py::arg("samples"), py::arg("alpha") = 0.1)
      .def("save", &learner::Learner::save)
      .def_static("load", &learner::Learner::load)
      .def("__eq__", [](const learner::Learner& a, const learner::Learner& b) { return a == b; });

  m.def(
      "target_heatmaps",
      [](const Array& kps, int image_size, int heatmap_size, double sigma) {
        return heatmap_array(learner::target_heatmaps(to_keypoints(kps), image_size, heatmap_size, sigma));
      },
      py::arg("keypoints"), py::arg("image_size") = 32, py::arg("heatmap_size") = 16, py::arg("sigma") = 1.5);
  m.def(
      "decode",
      [](const Array& heatmaps, int image_size) {
        const auto label = learner::decode(to_heatmaps(heatmaps), image_size);
        return py::make_tuple(keypoint_array(label.keypoints), label.confidences);
      },
      py::arg("heatmaps"), py::arg("image_size") = 32);

  // curricula
  py::class_<curriculum::Curriculum>(m, "Curriculum")
      .def(py::init([](std::vector<double> t, int round) { return curriculum::Curriculum{std::move(t), round}; }),
           py::arg("thresholds"), py::arg("round") = 0)
      .def_readwrite("thresholds", &curriculum::Curriculum::thresholds)
      .def_readwrite("round", &curriculum::Curriculum::round)
      .def("mean", &curriculum::Curriculum::mean)
      .def("__repr__", &curriculum::format_line);
  m.def(
      "compose",
      [](const curriculum::Curriculum& base, std::vector<double> delta) {
        return curriculum::compose(base, {std::move(delta)});
      },
      py::arg("base"), py::arg("delta"));

  // policy
  m.def("normal_cdf", &policy::normal_cdf);
  m.def("truncated_pdf", py::overload_cast<double, double, double>(&policy::pdf), py::arg("mu"), py::arg("sigma"),
        py::arg("x"));
  m.def("normalize_rewards", [](std::vector<double> s) { return policy::normalize_rewards(s); });
  m.def(
      "sample_deltas",
      [](std::vector<double> mu, double sigma, int count, std::uint64_t seed) {
        const auto draws = policy::sample_deltas(policy::PolicyState{std::move(mu), sigma, 0}, count, seed);
        const auto dim = static_cast<py::ssize_t>(draws.empty() ? 0 : draws[0].deltas.size());
        Array out({static_cast<py::ssize_t>(draws.size()), dim});
        auto v = out.mutable_unchecked<2>();
        for (std::size_t j = 0; j < draws.size(); ++j) {
          for (py::ssize_t i = 0; i < dim; ++i) v(j, i) = draws[j].deltas[i];
        }
        return out;
      },
      py::arg("mu"), py::arg("sigma"), py::arg("count"), py::arg("seed"));
  m.def(
      "policy_step",
      [](std::vector<double> mu, const Array& deltas, std::vector<double> scores, double sigma, double alpha,
         double epsilon) {
        if (deltas.ndim() != 2) throw InputError("deltas must have shape (M, D)");
        const policy::PolicyState p{std::move(mu), sigma, 0};
        std::vector<curriculum::CurriculumDelta> d(deltas.shape(0));
        auto v = deltas.unchecked<2>();
        for (py::ssize_t j = 0; j < deltas.shape(0); ++j) {
          for (py::ssize_t i = 0; i < deltas.shape(1); ++i) d[j].deltas.push_back(v(j, i));
        }
        return policy::update_mean(p, policy::make_record(p, std::move(d), std::move(scores)), alpha, epsilon).mu;
      },
      py::arg("mu"), py::arg("deltas"), py::arg("scores"), py::arg("sigma") = 0.2, py::arg("alpha") = 0.2,
      py::arg("epsilon") = 0.2,
      "One sample-normalize-update step: returns the new policy mean.");

  // metrics
  m.def(
      "pck",
      [](const std::vector<Array>& pred, const std::vector<Array>& truth, std::vector<double> sides, double alpha) {
        std::vector<Keypoints> p, t;
        for (const auto& a : pred) p.push_back(to_keypoints(a));
        for (const auto& a : truth) t.push_back(to_keypoints(a));
        return metrics::pck(p, t, sides, alpha).pck;
      },
      py::arg("predictions"), py::arg("ground_truths"), py::arg("bbox_sides"), py::arg("alpha") = 0.1);

  py::class_<metrics::ResultRow>(m, "ResultRow")
      .def_readonly("variant", &metrics::ResultRow::variant)
      .def_readonly("seed", &metrics::ResultRow::seed)
      .def_readonly("round", &metrics::ResultRow::round)
      .def_readonly("step", &metrics::ResultRow::step)
      .def_readonly("val_pck", &metrics::ResultRow::val_pck)
      .def_readonly("test_pck", &metrics::ResultRow::test_pck)
      .def_readonly("pseudo_quality", &metrics::ResultRow::pseudo_quality)
      .def_readonly("mean_threshold", &metrics::ResultRow::mean_threshold);
  m.def("read_results", &metrics::read_results_csv, py::arg("path"));
  m.def("write_report", &metrics::write_report, py::arg("run_dir"));

  // orchestration
  py::class_<orch::SearchConfig>(m, "SearchConfig")
      .def(py::init<>())
      .def_static("from_json", &orch::config_from_json)
      .def("to_json", [](const orch::SearchConfig& c) { return orch::config_to_json(c); })
      .def_readwrite("rounds", &orch::SearchConfig::rounds)
      .def_readwrite("steps", &orch::SearchConfig::steps)
      .def_readwrite("samples", &orch::SearchConfig::samples)
      .def_readwrite("group_size", &orch::SearchConfig::group_size)
      .def_readwrite("epochs", &orch::SearchConfig::epochs)
      .def_readwrite("epsilon", &orch::SearchConfig::epsilon)
      .def_readwrite("alpha", &orch::SearchConfig::alpha)
      .def_readwrite("sigma", &orch::SearchConfig::sigma)
      .def_readwrite("mu_init", &orch::SearchConfig::mu_init)
      .def_readwrite("seed", &orch::SearchConfig::seed)
      .def_readwrite("parallelism", &orch::SearchConfig::parallelism)
      .def_readwrite("batch_size", &orch::SearchConfig::batch_size)
      .def_readwrite("learner", &orch::SearchConfig::learner)
      .def("validate", &orch::SearchConfig::validate);

  m.def(
      "pretrain",
      [](const synth::DatasetSplit& split, const orch::SearchConfig& c) {
        py::gil_scoped_release release;
        return orch::pretrain(split, c);
      },
      py::arg("split"), py::arg("config"));
  m.def(
      "run_placl",
      [](const synth::DatasetSplit& split, const orch::SearchConfig& c, std::optional<std::filesystem::path> dir) {
        auto r = [&] {
          py::gil_scoped_release release;
          return orch::run_placl(split, c, options(dir));
        }();
        return summarize(r);
      },
      py::arg("split"), py::arg("config"), py::arg("run_dir") = std::nullopt);
  m.def(
      "run_ablation",
      [](const std::string& kind, const synth::DatasetSplit& split, const orch::SearchConfig& c, double gamma,
         std::optional<std::filesystem::path> dir) {
        auto r = [&] {
          py::gil_scoped_release release;
          return orch::run_ablation(kind, split, c, options(dir), gamma);
        }();
        return summarize(r.result);
      },
      py::arg("kind"), py::arg("split"), py::arg("config"), py::arg("gamma") = 0.0, py::arg("run_dir") = std::nullopt);
  m.def(
      "run_proxy_then_retrain",
      [](const synth::DatasetSplit& split, std::size_t proxy_size, const orch::SearchConfig& c,
         std::optional<std::filesystem::path> dir) {
        auto r = [&] {
          py::gil_scoped_release release;
          return orch::run_proxy_then_retrain(split, proxy_size, c, options(dir));
        }();
        return py::make_tuple(summarize(r.proxy), summarize(r.replay));
      },
      py::arg("split"), py::arg("proxy_size"), py::arg("config"), py::arg("run_dir") = std::nullopt);
}
