#include "qex/config.hpp"
#include "qex/reporting.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

qex::KeyValues load(const std::string& path, const std::vector<std::string>& overrides) {
  qex::KeyValues values = qex::read_key_values(path);
  qex::apply_overrides(values, overrides);
  return values;
}

int report(const std::vector<qex::CheckRow>& rows) {
  qex::print_check_table(std::cout, rows);
  int failed = 0;
  for (const auto& r : rows) failed += r.passed ? 0 : 1;
  std::cout << rows.size() - static_cast<std::size_t>(failed) << "/" << rows.size() << " passed\n";
  return failed == 0 ? kExitOk : kExitRuntime;
}

std::vector<qex::AblationCell> parse_cells(const std::vector<std::string>& names) {
  if (names.empty()) return {std::begin(qex::kAllAblationCells), std::end(qex::kAllAblationCells)};
  std::vector<qex::AblationCell> cells;
  for (const std::string& name : names) {
    bool found = false;
    for (qex::AblationCell c : qex::kAllAblationCells) {
      if (name == qex::to_string(c)) {
        cells.push_back(c);
        found = true;
      }
    }
    if (!found) throw qex::ConfigError("--cells", "unknown ablation cell '" + name + "'");
  }
  return cells;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quality-aware exploration budget allocation: training, sweeps, ablations and checks"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "configuration file")->required();
    sub->add_option("--set", overrides, "override, key=value (repeatable)");
  };

  CLI::App* run = app.add_subcommand("run", "train every seed of a configuration");
  add_config(run);
  CLI::App* sweep = app.add_subcommand("sweep", "one run per value of sweep.parameter");
  add_config(sweep);
  CLI::App* ablate = app.add_subcommand("ablate", "fixed component-ablation matrix");
  add_config(ablate);
  std::vector<std::string> cell_names;
  ablate->add_option("--cells", cell_names, "subset of cells (default: all)");

  CLI::App* verify = app.add_subcommand("verify", "schedule convergence and noise-floor suite");
  std::string verify_dir = "verify";
  bool quick = false;
  verify->add_option("--out", verify_dir, "directory for verify.csv and trajectories");
  verify->add_flag("--quick", quick, "fewer seeds and iterations for the noise grid");

  CLI::App* check = app.add_subcommand("check", "fast property checks");
  std::uint64_t check_seed = 7;
  check->add_option("--seed", check_seed, "seed for random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      const qex::RunConfig config = qex::resolve_run_config(load(config_path, overrides));
      const auto dir = qex::run_directory(config);
      const qex::CellResult cell = qex::execute_runs(config, dir, &std::cerr);
      std::cout << dir.string() << ": mean " << cell.stats.mean << " std " << cell.stats.std << " over " << cell.stats.n
                << " seeds\n";
      return cell.failed() == 0 ? kExitOk : kExitRuntime;
    }
    if (*sweep) {
      const qex::SweepSpec spec = qex::parse_sweep_spec(load(config_path, overrides));
      const qex::SweepResult result = qex::cmd_sweep(spec, &std::cerr);
      bool all_ok = true;
      for (std::size_t i = 0; i < result.cells.size(); ++i) {
        const auto& c = result.cells[i];
        all_ok = all_ok && result.cell_errors[i].empty() && c.failed() == 0;
        std::cout << c.name << ": mean " << c.stats.mean << " std " << c.stats.std << " n " << c.stats.n << '\n';
      }
      return all_ok ? kExitOk : kExitRuntime;
    }
    if (*ablate) {
      const std::vector<qex::AblationCell> cells = parse_cells(cell_names);
      const qex::RunConfig base = qex::resolve_run_config(load(config_path, overrides));
      const qex::AblationResult result = qex::cmd_ablate(base, cells, &std::cerr);
      bool all_ok = true;
      for (const auto& c : result.cells) {
        all_ok = all_ok && c.failed() == 0;
        std::cout << c.name << ": mean " << c.stats.mean << " std " << c.stats.std << " n " << c.stats.n << '\n';
      }
      return all_ok ? kExitOk : kExitRuntime;
    }
    if (*verify) return report(qex::cmd_verify(verify_dir, quick));
    if (*check) return report(qex::cmd_check(check_seed));
  } catch (const qex::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
