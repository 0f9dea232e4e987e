// Command-line front end: one subcommand per experiment.
//
//   vinn_cli <experiment> [--config FILE] [--output PATH] [--jobs N]
//                         [--dry-run] [--force] [--section.key=value ...]
//   vinn_cli list
//
// Exit codes: 0 all rows ok, 1 some rows failed, 2 configuration or
// run-conflict error, 3 any other error.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vinn/experiments.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string output;
  std::size_t jobs = 1;
  bool dry_run = false;
  bool force = false;
};

/// Turns leftover "--key=value" tokens into config assignments.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string tok = extras[i];
    if (tok.rfind("--", 0) != 0) {
      errors.push_back("unexpected argument '" + tok + "'");
      continue;
    }
    tok = tok.substr(2);
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      kv.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
    } else if (i + 1 < extras.size() && extras[i + 1].rfind("--", 0) != 0) {
      kv.emplace_back(tok, extras[++i]);
    } else {
      errors.push_back("override '--" + tok + "' has no value");
    }
  }
  if (!errors.empty()) throw vinn::ConfigError(vinn::detail::join_errors(errors));
  return kv;
}

int run_experiment(const vinn::ExperimentDef& def, const CommonArgs& args, const std::vector<std::string>& extras) {
  auto overrides = parse_overrides(extras);
  if (!args.output.empty()) overrides.emplace_back("experiment.output", args.output);
  const std::string text = args.config_path.empty() ? "" : vinn::read_text_file(args.config_path);
  const vinn::ExperimentConfig cfg =
      vinn::resolve_config(def.defaults(), text, overrides, args.config_path.empty() ? "config" : args.config_path);
  const vinn::Plan plan = def.plan(cfg);
  vinn::RunOptions opt;
  opt.dry_run = args.dry_run;
  opt.force = args.force;
  opt.jobs = args.jobs;
  const vinn::RunSummary sum = vinn::run_plan(plan, opt, args.dry_run ? std::cout : std::cerr);
  if (args.dry_run) return 0;
  std::cerr << sum.rows << " row(s) from " << sum.cells << " cell(s) written to " << sum.output;
  if (!sum.ok()) std::cerr << "; " << sum.failed_rows << " row(s) failed";
  std::cerr << "\n";
  return sum.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational invertible networks: experiment runner"};
  app.require_subcommand(1);
  CommonArgs args;
  app.add_subcommand("list", "list experiments")->callback([] {
    for (const auto& d : vinn::experiments()) std::cout << d.name << "\t" << d.summary << "\n";
  });
  for (const auto& def : vinn::experiments()) {
    CLI::App* sub = app.add_subcommand(def.name, def.summary);
    sub->allow_extras();
    sub->add_option("-c,--config", args.config_path, "config file ([experiment], [arch], [train], [sweep])");
    sub->add_option("-o,--output", args.output, "CSV output path (relative paths go under $VINN_OUTPUT_ROOT)");
    sub->add_option("-j,--jobs", args.jobs, "parallel cells")->check(CLI::PositiveNumber);
    sub->add_flag("--dry-run", args.dry_run, "validate the config and print the run matrix");
    sub->add_flag("--force", args.force, "rerun run_ids already present in the output");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (const auto& def : vinn::experiments()) {
    const CLI::App* sub = app.get_subcommand(def.name);
    if (!sub->parsed()) continue;
    try {
      return run_experiment(def, args, sub->remaining());
    } catch (const vinn::ConfigError& e) {
      std::cerr << e.what() << "\n";
      return 2;
    } catch (const vinn::RunConflictError& e) {
      std::cerr << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
  }
  return 0;
}
