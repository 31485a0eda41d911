#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpecm/gpecm.h"

namespace {

int exit_code(gpecm_status s) {
  switch (s) {
    case GPECM_OK: return 0;
    case GPECM_ERR_INVALID_ARGUMENT:
    case GPECM_ERR_CONFIG: return 2;
    case GPECM_ERR_DATA: return 3;
    case GPECM_ERR_NUMERICAL: return 4;
    default: return 1;
  }
}

int report(gpecm_status s, const char* what) {
  if (s != GPECM_OK) std::fprintf(stderr, "gpecm %s: %s: %s\n", what, gpecm_status_name(s), gpecm_last_error());
  return exit_code(s);
}

void print_and_free(char* text) {
  if (!text) return;
  std::printf("%s\n", text);
  gpecm_string_free(text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery circuit-model parameter estimation with recursive Gaussian processes"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_path, "JSON config file (a manifest also works)");
  app.add_option("--set", sets, "override key=value with a dotted key path")->take_all();
  app.set_version_flag("--version", gpecm_version());

  auto* sim = app.add_subcommand("simulate", "write a synthetic aging dataset");
  int duration = 0;
  std::string out_dir;
  sim->add_option("--duration", duration, "cycle length in seconds");
  sim->add_option("-o,--out", out_dir, "output directory");

  auto* fit = app.add_subcommand("fit", "fit hyperparameters");
  int stage = 1;
  fit->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));

  app.add_subcommand("estimate", "filter and smooth, write posterior and report files");
  auto* fc = app.add_subcommand("forecast", "extrapolate the posterior");
  std::vector<double> zeta_star;
  fc->add_option("--zeta", zeta_star, "lifetime coordinates in Ah");
  app.add_subcommand("validate", "compare with checkup records");
  app.add_subcommand("config", "print the resolved config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (duration > 0) sets.push_back("simulate.duration_s=" + std::to_string(duration));
  if (!out_dir.empty()) sets.push_back("simulate.out_dir=\"" + out_dir + "\"");
  if (!zeta_star.empty()) {
    std::string list = "estimate.zeta_star=[";
    for (size_t k = 0; k < zeta_star.size(); ++k) list += (k ? "," : "") + std::to_string(zeta_star[k]);
    sets.push_back(list + "]");
  }
  std::vector<const char*> ov;
  for (const auto& s : sets) ov.push_back(s.c_str());

  gpecm_config* cfg = nullptr;
  gpecm_status st = gpecm_config_load(config_path.empty() ? nullptr : config_path.c_str(), ov.data(), ov.size(), &cfg);
  if (st != GPECM_OK) return report(st, "config");

  char* text = nullptr;
  const std::string cmd = app.get_subcommands().front()->get_name();
  if (cmd == "simulate") st = gpecm_simulate(cfg, &text);
  else if (cmd == "fit") st = gpecm_fit(cfg, stage, &text);
  else if (cmd == "estimate") st = gpecm_estimate(cfg, &text);
  else if (cmd == "forecast") st = gpecm_forecast(cfg, &text);
  else if (cmd == "validate") st = gpecm_validate(cfg, &text);
  else st = gpecm_config_dump(cfg, &text);
  gpecm_config_free(cfg);
  if (st != GPECM_OK) return report(st, cmd.c_str());
  print_and_free(text);
  return 0;
}
