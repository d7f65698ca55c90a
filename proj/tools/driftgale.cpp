#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "driftgale/datagen.hpp"
#include "driftgale/detector.hpp"
#include "driftgale/harness.hpp"
#include "json.hpp"

namespace {

using namespace driftgale;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("DRIFTGALE_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 0;
}

GeneratorSpec generator_spec_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  GeneratorSpec spec;
  if (j.contains("family")) {
    const std::string fam = j.at("family").get<std::string>();
    if (fam == "gaussian_mean_drift") spec.family = Family::gaussian_mean_drift;
    else if (fam == "synthetic_image_brightness") spec.family = Family::synthetic_image_brightness;
    else if (fam == "synthetic_image_warp") spec.family = Family::synthetic_image_warp;
    else throw std::invalid_argument("unknown generator family: " + fam);
  }
  if (j.contains("dim")) spec.dim = j.at("dim").get<int>();
  if (j.contains("image_shape")) {
    const auto shape = j.at("image_shape").get<std::vector<int>>();
    if (shape.size() != 2) throw std::invalid_argument("image_shape must have 2 entries");
    spec.image_shape = {shape[0], shape[1]};
  }
  if (j.contains("noise_scale")) spec.noise_scale = j.at("noise_scale").get<double>();
  if (j.contains("schedule")) {
    const auto& js = j.at("schedule");
    if (js.contains("kind")) {
      const std::string kind = js.at("kind").get<std::string>();
      if (kind == "none") spec.schedule.kind = ShiftKind::none;
      else if (kind == "gradual_linear") spec.schedule.kind = ShiftKind::gradual_linear;
      else if (kind == "abrupt") spec.schedule.kind = ShiftKind::abrupt;
      else throw std::invalid_argument("unknown shift kind: " + kind);
    }
    if (js.contains("change_point")) spec.schedule.change_point = js.at("change_point").get<std::int64_t>();
    if (js.contains("rate")) spec.schedule.rate = js.at("rate").get<double>();
  }
  if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("id_offset")) spec.id_offset = j.at("id_offset").get<std::int64_t>();
  return spec;
}

int cmd_simulate(const std::string& spec_path, const std::string& out_path, std::int64_t count,
                 std::uint64_t seed, bool seed_set) {
  GeneratorSpec spec = generator_spec_from_file(spec_path);
  if (seed_set) spec.seed = seed;
  const std::vector<Episode> episodes = generate(spec, count);
  save_stream(out_path, episodes, stream_format_from_name(out_path));
  std::cout << "wrote " << episodes.size() << " episodes to " << out_path << "\n";
  return 0;
}

int cmd_detect(const std::string& variant_str, const std::string& train_path,
               const std::string& test_path, double threshold, std::uint64_t seed,
               std::int64_t horizon, bool shifted, const std::string& out_prefix,
               const std::string& config_path, bool audit) {
  DetectorConfig config;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open " + config_path);
    const nlohmann::json j = nlohmann::json::parse(in);
    ExperimentSpec tmp = ExperimentSpec::from_json_text(
        nlohmann::json{{"kind", "fpr_null"}, {"detector", j}}.dump());
    config = tmp.detector;
  }
  config.threshold_c = threshold;
  config.seed = seed;
  config.record_pair_audit = audit && !out_prefix.empty();

  const Variant variant = variant_from_name(variant_str);
  EpisodeStream train =
      load_stream(train_path, stream_format_from_name(train_path), StreamLabel::train);
  EpisodeStream test =
      load_stream(test_path, stream_format_from_name(test_path), StreamLabel::test);

  ShiftDetector detector = ShiftDetector::fit(variant, train.episodes(), config);
  const std::int64_t effective_horizon = horizon > 0 ? horizon : std::int64_t(test.size());
  DetectionReport report = detector.run_deployment(test, effective_horizon, shifted);

  std::cout << report.to_json() << "\n";
  if (!out_prefix.empty()) {
    {
      std::ofstream out(out_prefix + ".json");
      out << report.to_json() << "\n";
    }
    {
      std::ofstream out(out_prefix + ".csv");
      out << report.trace_csv();
    }
    std::cout << "wrote " << out_prefix << ".json and " << out_prefix << ".csv\n";
    if (config.record_pair_audit) {
      std::ofstream out(out_prefix + ".audit.jsonl");
      out << detector.pair_audit_jsonl();
      std::cout << "wrote " << out_prefix << ".audit.jsonl\n";
    }
  }
  return 0;
}

int cmd_experiment(const std::string& spec_path, const std::string& out_dir, int jobs,
                   bool check, std::optional<int> trials, std::optional<std::int64_t> horizon,
                   std::optional<std::uint64_t> seed, bool traces) {
  ExperimentSpec spec = ExperimentSpec::from_json_file(spec_path);
  if (trials) spec.trials = *trials;
  if (horizon) spec.horizon = *horizon;
  if (seed) spec.seed = *seed;
  if (traces) spec.write_traces = true;

  const ExperimentResult result = run_experiment(spec, out_dir, jobs);
  if (!result.table.rows.empty()) std::cout << result.table.to_csv();
  std::cout << (result.checks_passed ? "checks: passed" : "checks: FAILED") << "\n";
  for (const std::string& f : result.check_failures) std::cout << "  " << f << "\n";
  std::cout << "artifacts in " << out_dir << "\n";
  if (check && !result.checks_passed) return 2;
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int seeds) {
  ExperimentSpec spec;
  spec.name = "gradcheck";
  spec.kind = ExperimentKind::gradcheck;
  spec.trials = seeds;
  spec.seed = seed;
  const ExperimentResult result = run_experiment(spec, "", 1);
  const auto j = nlohmann::json::parse(result.artifact_json);
  std::cout << "max relative error: " << j["results"]["max_relative_error"] << " over " << seeds
            << " seeds\n";
  if (!result.checks_passed) {
    for (const std::string& f : result.check_failures) std::cout << "  " << f << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftgale: streaming distribution-shift detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", driftgale::version_string());

  std::uint64_t seed = default_seed();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic episode stream");
  std::string sim_spec, sim_out;
  std::int64_t sim_count = 500;
  bool sim_seed_set = false;
  sim->add_option("--spec", sim_spec, "Generator spec JSON file")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", sim_out, "Output stream path (.jsonl or .csv)")->required();
  sim->add_option("--count", sim_count, "Number of episodes");
  sim->add_option("--seed", seed, "Seed override")->each([&](const std::string&) { sim_seed_set = true; });

  // detect
  auto* det = app.add_subcommand("detect", "Run one detector over a train/test stream pair");
  std::string det_variant = "ours", det_train, det_test, det_out, det_config;
  double det_threshold = 100.0;
  std::int64_t det_horizon = 0;
  bool det_shifted = false, det_audit = false;
  det->add_option("--variant", det_variant, "ours|cm|cm-fv")->required();
  det->add_option("--train", det_train, "Training stream file")->required()->check(CLI::ExistingFile);
  det->add_option("--test", det_test, "Test stream file")->required()->check(CLI::ExistingFile);
  det->add_option("--threshold", det_threshold, "Alert threshold C");
  det->add_option("--seed", seed, "Detector seed");
  det->add_option("--horizon", det_horizon, "Max episodes to observe (0 = whole stream)");
  det->add_flag("--shifted", det_shifted, "Mark the test stream as shifted for FNR bookkeeping");
  det->add_option("--out", det_out, "Output prefix for report JSON and trace CSV");
  det->add_option("--config", det_config, "Detector config JSON file")->check(CLI::ExistingFile);
  det->add_flag("--audit", det_audit, "Also write a per-pair audit log (ours variant)");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run a declarative experiment spec");
  std::string exp_spec, exp_out = "out";
  int exp_jobs = 1;
  bool exp_check = false, exp_traces = false;
  std::optional<int> exp_trials;
  std::optional<std::int64_t> exp_horizon;
  std::optional<std::uint64_t> exp_seed;
  exp->add_option("--spec", exp_spec, "Experiment spec JSON file")->required()->check(CLI::ExistingFile);
  exp->add_option("--out-dir", exp_out, "Artifact output directory");
  exp->add_option("--jobs", exp_jobs, "Worker threads for trial-level parallelism");
  exp->add_flag("--check", exp_check, "Exit 2 when the experiment's assertions fail");
  exp->add_flag("--traces", exp_traces, "Write per-trial trace CSVs");
  exp->add_option("--trials", exp_trials, "Override trial count");
  exp->add_option("--horizon", exp_horizon, "Override horizon");
  exp->add_option("--seed", exp_seed, "Override master seed");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  int grad_seeds = 20;
  grad->add_option("--seed", seed, "Master seed");
  grad->add_option("--seeds", grad_seeds, "Number of model seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors exit 1, --help/--version exit 0
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_spec, sim_out, sim_count, seed, sim_seed_set);
    if (det->parsed()) {
      return cmd_detect(det_variant, det_train, det_test, det_threshold, seed, det_horizon,
                        det_shifted, det_out, det_config, det_audit);
    }
    if (exp->parsed()) {
      return cmd_experiment(exp_spec, exp_out, exp_jobs, exp_check, exp_trials, exp_horizon,
                            exp_seed, exp_traces);
    }
    if (grad->parsed()) return cmd_gradcheck(seed, grad_seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
