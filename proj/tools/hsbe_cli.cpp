#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hsbe/config.hpp"
#include "hsbe/errors.hpp"
#include "hsbe/pipeline.hpp"

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  std::string scenario;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--override", o.overrides, "section.key=value, repeatable")
      ->allow_extra_args(false);
}

// Presets of the chosen scenario, then the config file, then --override, then flags.
hsbe::ScenarioConfig resolve(const Options& o) {
  hsbe::Config file;
  if (!o.config_path.empty()) file = hsbe::Config::load(o.config_path);
  for (const auto& ov : o.overrides) file.apply_override(ov);
  if (o.seed) file.set("seed", std::to_string(*o.seed));
  if (!o.out.empty()) file.set("output.dir", o.out);

  std::string name = o.scenario;
  if (name.empty()) name = file.get_string("scenario", hsbe::ScenarioConfig{}.scenario);
  hsbe::Config merged = hsbe::scenario_defaults(name);
  for (const auto& [key, value] : file.values()) merged.set(key, value);
  merged.set("scenario", name);
  return hsbe::ScenarioConfig::from_config(merged);
}

void print_report(const hsbe::ScenarioReport& r) {
  for (const auto& c : r.checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << '[' << c.stage << "] " << c.name << ": "
              << c.measured << ' ' << c.relation << ' ' << c.required << '\n';
  }
  if (!r.error.empty()) std::cout << "ERROR " << r.error << '\n';
  std::cout << (r.passed() ? "scenario passed" : "scenario failed") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hsbe: hard-sphere Boltzmann solver in convex domains"};
  app.require_subcommand(1);

  Options run_opts;
  auto* run = app.add_subcommand("run", "run a scenario and write run.json, CSVs and snapshots");
  run->add_option("scenario", run_opts.scenario, "scenario name (default: config 'scenario')");
  add_common(run, run_opts);

  Options check_opts;
  auto* validate = app.add_subcommand("validate-config", "parse and validate a configuration");
  validate->add_option("scenario", check_opts.scenario, "scenario whose presets apply");
  add_common(validate, check_opts);

  auto* list = app.add_subcommand("list-scenarios", "print the named scenarios");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto config = resolve(run_opts);
      const auto report = hsbe::run_scenario(config);
      print_report(report);
      std::cout << "wrote " << (config.out / "run.json").string() << '\n';
      return report.passed() ? 0 : 1;
    }
    if (validate->parsed()) {
      const auto config = resolve(check_opts);
      std::cout << config.to_config().to_string();
      return 0;
    }
    if (list->parsed()) {
      for (const auto& s : hsbe::scenario_list()) {
        std::cout << s.name << "\n  " << s.description << '\n';
      }
      return 0;
    }
  } catch (const hsbe::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
