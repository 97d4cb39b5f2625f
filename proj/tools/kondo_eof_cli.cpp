// kondo-eof: run, fit and check entanglement-of-formation bounds for Kondo clouds.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <kondo_eof/binary_io.hpp>
#include <kondo_eof/experiment.hpp>
#include <kondo_eof/verification.hpp>
#include <map>

using namespace kondo_eof;

namespace {

enum Exit { ok = 0, config_error = 1, numerical_failure = 2, verification_failure = 3 };

struct ConfigFlags {
  std::string preset = "paper";
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "starting point: paper, fig2a or fig2c")->capture_default_str();
    app->add_option("-c,--config", file, "flat key = value file applied on top of the preset");
    app->add_option("--set", sets, "key=value override, repeatable");
    for (const auto& k : config_keys()) {
      std::string names = "--" + k;
      if (k.find('_') != std::string::npos) {
        std::string dashed = k;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        if (dashed != k) names += ",--" + dashed;
      }
      app->add_option(names, values[k], "config key " + k);
    }
  }

  RunConfig resolve(CLI::App* app) const {
    RunConfig cfg = preset_of(preset);
    if (!file.empty()) apply_config_file(cfg, file);
    for (const auto& k : config_keys())
      if (app->count("--" + k) > 0) cfg.set(k, values.at(k));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }

  static RunConfig preset_of(const std::string& name) { return kondo_eof::preset(name); }
};

int workers_from_env() {
  const char* v = std::getenv("KONDO_EOF_WORKERS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("KONDO_EOF_WORKERS must be a positive integer");
  return static_cast<int>(n);
}

void print_config(const RunConfig& cfg) {
  for (const auto& [k, v] : cfg.entries()) std::cout << k << " = " << v << "\n";
  std::cout << "# config hash " << cfg.hash() << "\n";
}

void print_fits(const nlohmann::json& fits) {
  for (const auto& f : fits)
    std::cout << f["axis"].get<std::string>() << " " << f["bound"].get<std::string>() << ": exponent "
              << f["exponent"].get<double>() << " over " << f["points"].get<int>() << " points (stability "
              << f["stability"].get<double>() << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bounds on the entanglement of formation between a Kondo impurity and its electron cloud"};
  app.require_subcommand(1);

  ConfigFlags run_flags, show_flags, fit_flags;
  auto* run = app.add_subcommand("run", "compute bounds over the (z, T, L) grid and fit power laws");
  run_flags.attach(run);
  auto* show = app.add_subcommand("show-config", "print the resolved configuration");
  show_flags.attach(show);
  auto* fit = app.add_subcommand("fit", "refit a result table");
  fit_flags.attach(fit);
  std::string table, fit_out;
  fit->add_option("-i,--input", table, "CSV written by run")->required();
  fit->add_option("-o,--fit-output", fit_out, "write the fit JSON here instead of stdout");
  auto* verify = app.add_subcommand("verify", "cross-check the pipeline against exact references");
  VerifyOptions vopt;
  verify->add_option("--states", vopt.two_qubit_states, "random two-qubit densities")->capture_default_str();
  verify->add_option("--seed", vopt.seed, "seed of every random draw")->capture_default_str();
  verify->add_option("--roof-samples", vopt.roof_samples, "random decompositions per roof estimate")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*show) {
      print_config(show_flags.resolve(show));
      return ok;
    }
    if (*run) {
      const RunConfig cfg = run_flags.resolve(run);
      const int workers = workers_from_env();
      auto res = run_experiment(cfg, workers, [](const std::string& m) { std::cerr << m << std::endl; });
      std::cout << "wrote " << cfg.output << ".csv and " << cfg.output << ".json (config hash " << cfg.hash()
                << ")\n";
      print_fits(res.analysis.fits);
      for (const auto& n : res.analysis.notes) std::cout << "note: " << n << "\n";
      return ok;
    }
    if (*fit) {
      const RunConfig cfg = fit_flags.resolve(fit);
      std::string model;
      const auto rows = read_csv(table, &model);
      const Analysis a = analyze(rows, cfg);
      nlohmann::json out = {{"input", table},  {"model", model},        {"fits", a.fits},
                            {"cloud_size", a.cloud}, {"additivity", a.additivity}, {"notes", a.notes}};
      if (fit_out.empty()) {
        std::cout << out.dump(2) << "\n";
      } else {
        write_atomically(fit_out, out.dump(2) + "\n");
        print_fits(a.fits);
      }
      return ok;
    }
    if (*verify) {
      bool all = true;
      for (const Check& c : verification_suite(vopt)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": worst " << c.value << " (tolerance "
                  << c.tolerance << ")" << (c.detail.empty() ? "" : "; " + c.detail) << "\n";
        all = all && c.passed;
      }
      return all ? ok : verification_failure;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const io::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return config_error;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical_failure;
  }
  return ok;
}
