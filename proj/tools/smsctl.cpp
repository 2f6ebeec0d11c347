#include "sms/scenario.hpp"

#include <CLI11.hpp>

#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct Overrides {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt_plan;
  std::optional<double> dt_ctrl;
};

sms::ScenarioConfig apply(sms::ScenarioConfig cfg, const Overrides &o) {
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.planner.seed = *o.seed;
  }
  if (o.dt_plan) {
    cfg.planner.dt = *o.dt_plan;
    cfg.planner.validate(cfg.model.dof());
  }
  if (o.dt_ctrl) {
    cfg.gains.dt_ctrl = *o.dt_ctrl;
    cfg.gains.validate(cfg.model.dof());
  }
  if (cfg.gains.dt_ctrl > cfg.planner.dt)
    throw sms::ValidationError("controller.dt", "must not exceed planner.dt");
  return cfg;
}

int run_one(const std::string &path, sms::Stage stage, const Overrides &o, bool sweep,
            std::ostream &out) {
  try {
    sms::ScenarioConfig cfg = apply(sms::load_config(path), o);
    std::filesystem::path dir = cfg.output_dir;
    if (!o.out.empty())
      dir = sweep ? std::filesystem::path(o.out) / cfg.case_label : std::filesystem::path(o.out);
    cfg.output_dir = dir;
    const int code = sms::run_scenario(cfg, stage, dir, out);
    out << "[" << cfg.case_label << "] exit " << code << " -> " << dir.string() << "\n";
    return code;
  } catch (const sms::ConfigParseError &e) {
    out << "config parse error: " << e.what() << "\n";
    return sms::kExitConfig;
  } catch (const sms::ValidationError &e) {
    out << "config validation error: " << e.what() << "\n";
    return sms::kExitConfig;
  } catch (const std::exception &e) {
    out << "error: " << e.what() << "\n";
    return sms::kExitError;
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Free-floating space manipulator planning and tracking"};
  app.require_subcommand(1);

  Overrides o;
  std::vector<std::string> configs;
  bool sweep = false;
  auto add_common = [&](CLI::App *sub) {
    sub->add_option("config", configs, "Scenario TOML file(s)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", o.seed, "Planner seed");
    sub->add_option("--dt-plan", o.dt_plan, "Planning step, s");
    sub->add_option("--dt-ctrl", o.dt_ctrl, "Control step, s");
    sub->add_flag("--sweep", sweep, "Run several configs concurrently, one subdirectory each");
  };
  CLI::App *plan = app.add_subcommand("plan", "Generate the coupling-aware trajectory");
  CLI::App *track = app.add_subcommand("track", "Plan, then track with the sliding-mode controller");
  CLI::App *run = app.add_subcommand("run", "Plan, track and verify");
  add_common(plan);
  add_common(track);
  add_common(run);
  CLI::App *verify = app.add_subcommand("verify", "Recompute a run's summary from its CSVs");
  std::string run_dir;
  verify->add_option("run-dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  if (verify->parsed()) {
    try {
      return sms::verify_run(run_dir, std::cout);
    } catch (const std::exception &e) {
      std::cerr << "error: " << e.what() << "\n";
      return sms::kExitError;
    }
  }

  const sms::Stage stage =
      plan->parsed() ? sms::Stage::plan : track->parsed() ? sms::Stage::track : sms::Stage::run;
  if (configs.size() > 1 && !sweep) {
    std::cerr << "several configs given: pass --sweep\n";
    return sms::kExitConfig;
  }
  if (!sweep)
    return run_one(configs.front(), stage, o, false, std::cout);

  std::vector<std::future<std::pair<int, std::string>>> jobs;
  for (const auto &c : configs)
    jobs.push_back(std::async(std::launch::async, [&, c] {
      std::ostringstream log;
      const int code = run_one(c, stage, o, true, log);
      return std::make_pair(code, log.str());
    }));
  int worst = 0;
  for (auto &j : jobs) {
    auto [code, log] = j.get();
    std::cout << log;
    worst = std::max(worst, code);
  }
  return worst;
}
