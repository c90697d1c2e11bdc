#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mixpo/checkpoint.hpp"
#include "mixpo/config.hpp"
#include "mixpo/environment.hpp"
#include "mixpo/errors.hpp"
#include "mixpo/trainer.hpp"
#include "mixpo/verification.hpp"

#ifndef MIXPO_VERSION
#define MIXPO_VERSION "unknown"
#endif

namespace mixpo::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string fnv1a_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::string g17(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> iterations;
};

TrainConfig load_with_overrides(const std::string& path, const Overrides& o, bool& off_group_size_set) {
  LoadedConfig loaded = load_config(path);
  off_group_size_set = loaded.off_group_size_set;
  TrainConfig& c = loaded.config;
  if (o.seed) c.seed = *o.seed;
  if (o.mode) c.mode = parse_mode(*o.mode);
  if (o.iterations) c.iterations = *o.iterations;
  c.validate();
  return c;
}

PolicyParams load_guide_for(const std::string& path, const TaskSpec& spec, const TrainConfig& config) {
  PolicyParams guide = load_checkpoint(path);
  if (!guide.same_shape(uniform_policy(spec, config.context_window)))
    throw std::invalid_argument("guide checkpoint shape (vocab " + std::to_string(guide.vocab().size()) +
                                ", window " + std::to_string(guide.context_window()) +
                                ") does not match the task and config");
  return guide;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
}

int cmd_pretrain_guide(const std::string& task_path, const std::string& out_path, double target, std::uint64_t seed,
                       std::size_t budget, std::uint32_t window, std::ostream& out) {
  const TaskSpec spec = load_task(task_path);
  const PolicyParams guide = pretrain_guide(spec, target, budget, seed, window);
  save_checkpoint(guide, out_path);
  out << "guide checkpoint: " << out_path << '\n';
  out << "exact success rate: " << g17(expected_reward(spec, guide)) << '\n';
  return kSuccess;
}

int cmd_train(const std::string& config_path, const std::string& task_path, const std::string& guide_path,
              const std::string& out_dir, const Overrides& overrides, std::ostream& out, std::ostream& err) {
  bool off_set = false;
  const TrainConfig config = load_with_overrides(config_path, overrides, off_set);
  const TaskSpec spec = load_task(task_path);
  std::optional<PolicyParams> guide;
  if (config.mode == Mode::DapoBaseline) {
    if (off_set) err << "warning: off_group_size is set but DapoBaseline ignores off-policy samples\n";
    if (!guide_path.empty()) guide = load_guide_for(guide_path, spec, config);
  } else {
    if (guide_path.empty()) throw std::invalid_argument("--guide is required for " + std::string(mode_name(config.mode)));
    guide = load_guide_for(guide_path, spec, config);
  }

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const fs::path metrics_path = dir / "metrics.csv";
  const fs::path final_path = dir / "final.ckpt";
  const fs::path manifest_path = dir / "manifest.json";

  json manifest;
  manifest["command"] = "train";
  manifest["code_version"] = MIXPO_VERSION;
  manifest["seed"] = config.seed;
  manifest["config"] = format_config(config);
  manifest["config_path"] = config_path;
  manifest["task_path"] = task_path;
  manifest["task_hash"] = fnv1a_file(task_path);
  if (!guide_path.empty()) {
    manifest["guide_path"] = guide_path;
    manifest["guide_hash"] = fnv1a_file(guide_path);
  }
  manifest["outputs"] = {{"metrics", metrics_path.string()}, {"final_checkpoint", final_path.string()}};
  manifest["timings"] = {{"started_utc", utc_now()}};
  write_json(manifest_path, manifest);

  const auto t0 = std::chrono::steady_clock::now();
  std::ofstream csv(metrics_path, std::ios::trunc);
  write_metrics_header(csv);
  TrainResult result = [&] {
    try {
      return train(config, spec, guide ? &*guide : nullptr,
                   [&](const IterationRecord& rec) { write_metrics_row(csv, rec); });
    } catch (...) {
      csv.flush();
      throw;
    }
  }();
  csv.close();
  save_checkpoint(result.params, final_path);

  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest["schedule"] = {{"alpha", result.metrics.schedule.alpha},
                          {"c", result.metrics.schedule.c},
                          {"lipschitz_estimate", result.metrics.schedule.lipschitz},
                          {"sigma_estimate", result.metrics.schedule.sigma},
                          {"theorem1_bound", result.metrics.schedule.bound}};
  manifest["timings"]["elapsed_seconds"] = elapsed;
  write_json(manifest_path, manifest);

  out << "final mean reward: " << g17(result.metrics.final_reward) << '\n';
  out << "min grad norm^2: " << g17(result.metrics.min_grad_norm_sq()) << '\n';
  return kSuccess;
}

std::vector<ObjectiveKind> objectives_for(Mode mode) {
  switch (mode) {
    case Mode::DapoBaseline:
      return {ObjectiveKind::On};
    case Mode::Method1:
      return {ObjectiveKind::On, ObjectiveKind::Off, ObjectiveKind::Mix1};
    case Mode::Method2:
      return {ObjectiveKind::On, ObjectiveKind::Off, ObjectiveKind::MixMethod2, ObjectiveKind::Mix2};
  }
  return {};
}

int cmd_gradcheck(const std::string& config_path, const std::string& task_path, std::uint64_t seed,
                  const std::string& fault, const Overrides& overrides, std::ostream& out, std::ostream& err) {
  bool off_set = false;
  const TrainConfig config = load_with_overrides(config_path, overrides, off_set);
  const TaskSpec spec = load_task(task_path);
  const GradCheckInstance inst =
      make_task_instance(spec, config.context_window, config.sampling.group_size, config.mix, seed);

  std::optional<std::pair<std::size_t, std::size_t>> fault_entry;
  if (!fault.empty()) {
    const auto colon = fault.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("--inject-fault expects CONTEXT:TOKEN");
    fault_entry = {std::stoul(fault.substr(0, colon)), std::stoul(fault.substr(colon + 1))};
    if (fault_entry->first >= inst.params.num_contexts() || fault_entry->second >= inst.params.vocab().size())
      throw std::invalid_argument("--inject-fault entry out of range");
  }

  constexpr double kTolerance = 1e-4;
  int status = kSuccess;
  out << "objective,max_rel_error,max_abs_error,worst_context,worst_token,num_entries_checked,boundary_exclusions\n";
  for (ObjectiveKind kind : objectives_for(config.mode)) {
    const auto corrupt = [&](Table& g) {
      if (fault_entry) g(fault_entry->first, fault_entry->second) += 1e-3;
    };
    const GradCheckReport r = check_objective_gradient(kind, inst, kObjectiveStep, 1e-6, corrupt);
    out << objective_kind_name(kind) << ',' << g17(r.max_rel_error) << ',' << g17(r.max_abs_error) << ','
        << r.worst_context << ',' << r.worst_token << ',' << r.num_entries_checked << ',' << r.boundary_exclusions
        << '\n';
    if (!(r.max_rel_error < kTolerance)) {
      err << "gradient check failed for " << objective_kind_name(kind) << " at entry (context " << r.worst_context
          << ", token " << r.worst_token << "): relative error " << g17(r.max_rel_error) << '\n';
      status = kCheckFailure;
    }
  }
  return status;
}

int cmd_compare(const std::string& config_path, const std::string& task_path, const std::string& guide_path,
                std::size_t seeds, const std::string& out_dir, const Overrides& overrides, std::ostream& out,
                std::ostream& err) {
  bool off_set = false;
  const TrainConfig config = load_with_overrides(config_path, overrides, off_set);
  const TaskSpec spec = load_task(task_path);
  const PolicyParams guide = load_guide_for(guide_path, spec, config);
  if (config.schedule.kind == ScheduleKind::Theorem1)
    err << "note: the Theorem1 schedule needs non-zero gradients at initialization; DapoBaseline may reject it\n";
  if (seeds < 1) throw std::invalid_argument("--seeds must be at least 1");

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const CompareResult result = compare_modes(config, spec, guide, seeds);

  std::ofstream summary(dir / "summary.csv", std::ios::trunc);
  summary << "# iterations_to_threshold = first k with mean_reward >= " << g17(config.reward_threshold)
          << "; runs that never reach it report K+1 = " << config.iterations + 1 << '\n';
  summary << "mode,runs,median_iterations_to_threshold,final_reward_q1,final_reward_median,final_reward_q3,"
             "min_grad_norm_sq_q1,min_grad_norm_sq_median,min_grad_norm_sq_q3\n";
  for (const auto& s : result.summaries) {
    summary << mode_name(s.mode) << ',' << s.runs << ',' << g17(s.median_iterations_to_threshold) << ','
            << g17(s.final_reward_q1) << ',' << g17(s.final_reward_median) << ',' << g17(s.final_reward_q3) << ','
            << g17(s.min_grad_norm_sq_q1) << ',' << g17(s.min_grad_norm_sq_median) << ','
            << g17(s.min_grad_norm_sq_q3) << '\n';
    out << mode_name(s.mode) << ": median iterations to threshold " << g17(s.median_iterations_to_threshold)
        << ", median final reward " << g17(s.final_reward_median) << '\n';
  }
  std::ofstream runs(dir / "runs.csv", std::ios::trunc);
  runs << "mode,seed_index,seed,iterations_to_threshold,final_reward,min_grad_norm_sq\n";
  for (const auto& r : result.runs)
    runs << mode_name(r.mode) << ',' << r.seed_index << ',' << r.seed << ',' << r.iterations_to_threshold << ','
         << g17(r.final_reward) << ',' << g17(r.min_grad_norm_sq) << '\n';
  return kSuccess;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixed-policy DAPO trainer and verification harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MIXPO_VERSION);

  std::string task, config, guide, out_path;
  std::uint64_t seed = 0;
  double target = 0.9;
  std::size_t budget = 10000;
  std::uint32_t window = 2;
  std::size_t seeds = 20;
  std::string fault;
  Overrides overrides;
  std::uint64_t seed_override = 0;
  std::string mode_override;
  std::size_t iterations_override = 0;

  auto* pre = app.add_subcommand("pretrain-guide", "Fit and save the frozen guide policy");
  pre->add_option("--task", task, "Task file")->required();
  pre->add_option("--out", out_path, "Output checkpoint path")->required();
  pre->add_option("--target", target, "Exact success rate to reach")->capture_default_str();
  pre->add_option("--seed", seed, "Seed")->capture_default_str();
  pre->add_option("--budget", budget, "Maximum fitting iterations")->capture_default_str();
  pre->add_option("--context-window", window, "Context window of the policy table")->capture_default_str();

  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed_override, "Override the config seed");
    cmd->add_option("--mode", mode_override, "Override the config mode");
    cmd->add_option("--iterations", iterations_override, "Override the config iteration count");
  };

  auto* tr = app.add_subcommand("train", "Train the target policy");
  tr->add_option("--config", config, "Run config file")->required();
  tr->add_option("--task", task, "Task file")->required();
  tr->add_option("--guide", guide, "Guide checkpoint (not needed for DapoBaseline)");
  tr->add_option("--out", out_path, "Output directory")->required();
  add_overrides(tr);

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--config", config, "Run config file")->required();
  gc->add_option("--task", task, "Task file")->required();
  gc->add_option("--seed", seed, "Instance seed")->capture_default_str();
  gc->add_option("--mode", mode_override, "Override the config mode");
  gc->add_option("--inject-fault", fault, "Test hook: add 1e-3 to analytic entry CONTEXT:TOKEN")
      ->group("");

  auto* cmp = app.add_subcommand("compare", "Run DapoBaseline, Method1 and Method2 over paired seeds");
  cmp->add_option("--config", config, "Run config file")->required();
  cmp->add_option("--task", task, "Task file")->required();
  cmp->add_option("--guide", guide, "Guide checkpoint")->required();
  cmp->add_option("--seeds", seeds, "Number of paired seeds")->capture_default_str();
  cmp->add_option("--out", out_path, "Output directory")->required();
  add_overrides(cmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForVersion&) {
    out << MIXPO_VERSION << '\n';
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kValidationError;
  }

  auto collect_overrides = [&](CLI::App* cmd) {
    if (cmd->count("--seed")) overrides.seed = seed_override;
    if (cmd->count("--mode")) overrides.mode = mode_override;
    if (cmd->count("--iterations")) overrides.iterations = iterations_override;
  };

  try {
    if (*pre) return cmd_pretrain_guide(task, out_path, target, seed, budget, window, out);
    if (*tr) {
      collect_overrides(tr);
      return cmd_train(config, task, guide, out_path, overrides, out, err);
    }
    if (*gc) {
      if (gc->count("--mode")) overrides.mode = mode_override;
      return cmd_gradcheck(config, task, seed, fault, overrides, out, err);
    }
    if (*cmp) {
      collect_overrides(cmp);
      return cmd_compare(config, task, guide, seeds, out_path, overrides, out, err);
    }
  } catch (const NumericalError& e) {
    err << "numerical failure at iteration " << e.iteration() << ": " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kValidationError;
  } catch (const GuideTrainingError& e) {
    err << "guide pretraining failed: " << e.what() << " (best " << g17(e.best_success()) << ")\n";
    return kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }
  return kValidationError;
}

}  // namespace mixpo::cli
