#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "driftgale/conformal.hpp"
#include "driftgale/datagen.hpp"
#include "driftgale/detector.hpp"
#include "driftgale/episode.hpp"
#include "driftgale/harness.hpp"
#include "driftgale/martingale.hpp"
#include "driftgale/recency.hpp"
#include "driftgale/rng.hpp"

namespace py = pybind11;
using namespace driftgale;

PYBIND11_MODULE(_driftgale, m) {
  m.doc() = "Streaming distribution-shift detection: learned-classifier "
            "exponential martingale plus conformal-martingale baselines.";

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed") = 0)
      .def("split", &Rng::split, py::arg("tag"))
      .def("next_u64", &Rng::next_u64)
      .def("uniform", py::overload_cast<>(&Rng::uniform))
      .def("normal", &Rng::normal)
      .def_property_readonly("key", &Rng::key);

  py::class_<Episode>(m, "Episode")
      .def(py::init<>())
      .def_readwrite("id", &Episode::id)
      .def_readwrite("features", &Episode::features)
      .def_readwrite("shape", &Episode::shape);

  py::enum_<StreamLabel>(m, "StreamLabel")
      .value("train", StreamLabel::train)
      .value("test", StreamLabel::test);

  py::class_<EpisodeStream>(m, "EpisodeStream")
      .def(py::init<std::vector<Episode>, StreamLabel>(), py::arg("episodes"),
           py::arg("label") = StreamLabel::test)
      .def("__len__", &EpisodeStream::size)
      .def_property_readonly("dim", &EpisodeStream::dim)
      .def_property_readonly("episodes", &EpisodeStream::episodes);

  py::enum_<StreamFormat>(m, "StreamFormat")
      .value("jsonl", StreamFormat::jsonl)
      .value("csv", StreamFormat::csv);

  m.def("load_stream", &load_stream, py::arg("path"), py::arg("format"),
        py::arg("label") = StreamLabel::test);
  m.def("save_stream", &save_stream, py::arg("path"), py::arg("episodes"), py::arg("format"));

  py::class_<MartingaleParams>(m, "MartingaleParams")
      .def(py::init<>())
      .def_readwrite("t", &MartingaleParams::t)
      .def_readwrite("p", &MartingaleParams::p)
      .def_property_readonly("q", &MartingaleParams::q);

  py::class_<ExponentialMartingale>(m, "ExponentialMartingale")
      .def(py::init<>())
      .def(py::init<MartingaleParams>())
      .def("update", &ExponentialMartingale::update, py::arg("y"))
      .def_property_readonly("steps", &ExponentialMartingale::steps)
      .def_property_readonly("correct_count", &ExponentialMartingale::correct_count)
      .def_property_readonly("log_value", &ExponentialMartingale::log_value)
      .def_property_readonly("value", &ExponentialMartingale::value);

  py::class_<AlertState>(m, "AlertState")
      .def(py::init<>())
      .def_readwrite("threshold_c", &AlertState::threshold_c)
      .def_readwrite("alerted", &AlertState::alerted)
      .def_readwrite("discovery_step", &AlertState::discovery_step);

  m.def("check_alert", &check_alert, py::arg("martingale"), py::arg("state"));

  py::class_<NullSimResult>(m, "NullSimResult")
      .def_readonly("crossing_fraction", &NullSimResult::crossing_fraction)
      .def_readonly("mean_final_value", &NullSimResult::mean_final_value);

  m.def("simulate_null", &simulate_null, py::arg("params"), py::arg("horizon"), py::arg("trials"),
        py::arg("threshold_c"), py::arg("rng"), py::arg("stream_p") = std::nullopt,
        py::arg("jobs") = 1);

  m.def(
      "conformal_p",
      [](const std::vector<double>& scores, double theta) {
        return conformal_p(std::span<const double>(scores.data(), scores.size()), theta);
      },
      py::arg("scores_including_new"), py::arg("theta"));

  py::class_<NonconformityBag>(m, "NonconformityBag")
      .def(py::init<int>(), py::arg("dim"))
      .def("insert", &NonconformityBag::insert, py::arg("point"))
      .def("nonconformity",
           [](const NonconformityBag& bag, const std::vector<double>& x) {
             return bag.nonconformity(std::span<const double>(x.data(), x.size()));
           })
      .def_property_readonly("scores", &NonconformityBag::scores)
      .def("__len__", &NonconformityBag::size);

  py::class_<BettingMartingale>(m, "BettingMartingale")
      .def(py::init<int>(), py::arg("grid_size") = 100)
      .def("update", &BettingMartingale::update, py::arg("p"))
      .def_property_readonly("log_value", &BettingMartingale::log_value)
      .def_property_readonly("value", &BettingMartingale::value);

  py::enum_<ShiftKind>(m, "ShiftKind")
      .value("none", ShiftKind::none)
      .value("gradual_linear", ShiftKind::gradual_linear)
      .value("abrupt", ShiftKind::abrupt);

  py::class_<ShiftSchedule>(m, "ShiftSchedule")
      .def(py::init<>())
      .def_readwrite("kind", &ShiftSchedule::kind)
      .def_readwrite("change_point", &ShiftSchedule::change_point)
      .def_readwrite("rate", &ShiftSchedule::rate)
      .def("magnitude_at", &ShiftSchedule::magnitude_at, py::arg("j"));

  py::enum_<Family>(m, "Family")
      .value("gaussian_mean_drift", Family::gaussian_mean_drift)
      .value("synthetic_image_brightness", Family::synthetic_image_brightness)
      .value("synthetic_image_warp", Family::synthetic_image_warp);

  py::class_<GeneratorSpec>(m, "GeneratorSpec")
      .def(py::init<>())
      .def_readwrite("family", &GeneratorSpec::family)
      .def_readwrite("dim", &GeneratorSpec::dim)
      .def_readwrite("image_shape", &GeneratorSpec::image_shape)
      .def_readwrite("noise_scale", &GeneratorSpec::noise_scale)
      .def_readwrite("schedule", &GeneratorSpec::schedule)
      .def_readwrite("seed", &GeneratorSpec::seed)
      .def_readwrite("id_offset", &GeneratorSpec::id_offset);

  m.def("generate", &generate, py::arg("spec"), py::arg("count"));
  m.def("failure_proxy", &failure_proxy, py::arg("episode"), py::arg("family"));

  py::enum_<Variant>(m, "Variant")
      .value("ours", Variant::ours)
      .value("cm", Variant::cm)
      .value("cm_fv", Variant::cm_fv);

  py::class_<ClassifierConfig>(m, "ClassifierConfig")
      .def(py::init<>())
      .def_readwrite("hidden_dims", &ClassifierConfig::hidden_dims)
      .def_readwrite("batch_size", &ClassifierConfig::batch_size)
      .def_readwrite("initial_epochs", &ClassifierConfig::initial_epochs)
      .def_readwrite("finetune_steps_per_episode", &ClassifierConfig::finetune_steps_per_episode)
      .def_readwrite("learning_rate", &ClassifierConfig::learning_rate)
      .def_readwrite("symmetrized_scoring", &ClassifierConfig::symmetrized_scoring);

  py::class_<DetectorConfig>(m, "DetectorConfig")
      .def(py::init<>())
      .def_readwrite("threshold_c", &DetectorConfig::threshold_c)
      .def_readwrite("seed", &DetectorConfig::seed)
      .def_readwrite("classifier", &DetectorConfig::classifier)
      .def_readwrite("martingale", &DetectorConfig::martingale)
      .def_readwrite("pca_dim", &DetectorConfig::pca_dim)
      .def_property_readonly("epsilon", &DetectorConfig::epsilon);

  py::class_<StepRecord>(m, "StepRecord")
      .def_readonly("step", &StepRecord::step)
      .def_readonly("episode_id", &StepRecord::episode_id)
      .def_readonly("stat", &StepRecord::stat)
      .def_readonly("log_m", &StepRecord::log_m)
      .def_readonly("alerted", &StepRecord::alerted);

  py::class_<DetectionReport>(m, "DetectionReport")
      .def_readonly("variant", &DetectionReport::variant)
      .def_readonly("steps", &DetectionReport::steps)
      .def_readonly("discovery_step", &DetectionReport::discovery_step)
      .def_readonly("false_negative", &DetectionReport::false_negative)
      .def_readonly("warnings", &DetectionReport::warnings)
      .def("to_json", &DetectionReport::to_json)
      .def("trace_csv", &DetectionReport::trace_csv);

  py::class_<ShiftDetector>(m, "ShiftDetector")
      .def_static("fit", &ShiftDetector::fit, py::arg("variant"), py::arg("d_orig"),
                  py::arg("config"))
      .def(
          "observe",
          [](ShiftDetector& det, const Episode& ep) {
            const auto obs = det.observe(ep);
            return py::make_tuple(obs.log_m, obs.stat, obs.alerted_now);
          },
          py::arg("episode"), "Returns (log_m, stat, alerted_now).")
      .def(
          "run_deployment",
          [](ShiftDetector& det, EpisodeStream& stream, std::int64_t horizon, bool shifted,
             bool stop_after_alert) {
            return det.run_deployment(stream, horizon, shifted, stop_after_alert);
          },
          py::arg("test_stream"), py::arg("horizon"), py::arg("stream_shifted") = false,
          py::arg("stop_after_alert") = false)
      .def_property_readonly("variant", &ShiftDetector::variant)
      .def_property_readonly("steps_observed", &ShiftDetector::steps_observed);

  m.def("version", &version_string);
}
