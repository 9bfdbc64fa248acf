#include "qex/reporting.hpp"

#include "qex/convergence_lab.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace qex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string csv_number(double value) {
  return std::isfinite(value) ? format_double(value) : std::string(std::isnan(value) ? "nan" : "inf");
}

void write_summary(const fs::path& path, const CellResult& cell) {
  std::ofstream out = open_out(path);
  out << "seed,final_return,status\n";
  for (const SeedResult& s : cell.seeds) {
    out << s.seed << ',' << (s.final_return ? csv_number(*s.final_return) : "") << ','
        << (s.ok() ? "ok" : "failed") << '\n';
  }
  out << "mean," << csv_number(cell.stats.mean) << ",n=" << cell.stats.n << '\n';
  out << "std," << csv_number(cell.stats.std) << ",n=" << cell.stats.n << '\n';
}

void finish_cell(CellResult& cell) {
  std::vector<double> finals;
  for (const SeedResult& s : cell.seeds) {
    if (s.ok()) finals.push_back(*s.final_return);
  }
  cell.stats = mean_std(finals);
}

}  // namespace

std::string record_to_line(const IterationRecord& record) {
  json j;
  j["schema"] = kRecordSchema;
  j["iteration"] = record.iteration;
  j["mean_team_return"] = record.mean_team_return ? json(*record.mean_team_return) : json(nullptr);
  j["episodes_completed"] = record.episodes_completed;
  j["r_ema"] = record.r_ema;
  j["beta"] = record.beta;
  j["quality_gap"] = record.quality_gap;
  json agents = json::array();
  for (const AgentRecord& a : record.agents) {
    agents.push_back({{"mu", a.mu}, {"sigma_sq", a.sigma_sq}, {"rsq", a.rsq}, {"h", a.h}, {"mean_intrinsic", a.mean_intrinsic}});
  }
  j["agents"] = std::move(agents);
  return j.dump();
}

IterationRecord record_from_line(const std::string& line) {
  const json j = json::parse(line);
  if (j.value("schema", "") != kRecordSchema) throw std::runtime_error("record has unexpected schema");
  IterationRecord record;
  record.iteration = j.at("iteration").get<std::int64_t>();
  if (!j.at("mean_team_return").is_null()) record.mean_team_return = j.at("mean_team_return").get<double>();
  record.episodes_completed = j.at("episodes_completed").get<int>();
  record.r_ema = j.at("r_ema").get<double>();
  record.beta = j.at("beta").get<double>();
  record.quality_gap = j.at("quality_gap").get<double>();
  for (const json& a : j.at("agents")) {
    record.agents.push_back({a.at("mu").get<double>(), a.at("sigma_sq").get<double>(), a.at("rsq").get<double>(),
                             a.at("h").get<double>(), a.at("mean_intrinsic").get<double>()});
  }
  return record;
}

std::vector<IterationRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<IterationRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(record_from_line(line));
  }
  return records;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  out.n = static_cast<int>(values.size());
  if (values.empty()) {
    out.mean = out.std = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const Eigen::Map<const Eigen::ArrayXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
  out.mean = v.mean();
  out.std = std::sqrt((v - out.mean).square().mean());
  return out;
}

int CellResult::failed() const {
  int n = 0;
  for (const SeedResult& s : seeds) n += s.ok() ? 0 : 1;
  return n;
}

fs::path run_directory(const RunConfig& config) { return fs::path(output_root(config)) / config.label; }

CellResult execute_runs(const RunConfig& config, const fs::path& dir, std::ostream* log) {
  fs::create_directories(dir);
  {
    std::ofstream cfg = open_out(dir / "config.cfg");
    write_key_values(cfg, to_key_values(config));
  }
  CellResult cell;
  cell.name = config.label;
  for (std::uint64_t seed : config.seeds) {
    SeedResult result;
    result.seed = seed;
    const fs::path seed_dir = dir / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);
    std::ofstream records = open_out(seed_dir / "records.jsonl");
    std::ofstream timing = open_out(seed_dir / "timing.csv");
    timing << "iteration,wall_clock_seconds\n";
    std::ofstream trajectories;
    if (config.dump_trajectories) trajectories = open_out(seed_dir / "trajectories.jsonl");

    TrainerConfig trainer_config = config.trainer;
    trainer_config.seed = seed;
    std::vector<IterationRecord> kept;
    try {
      const auto sink = [&](const IterationRecord& r) {
        records << record_to_line(r) << '\n' << std::flush;
        timing << r.iteration << ',' << csv_number(r.wall_clock_seconds) << '\n';
        kept.push_back(r);
      };
      run_training(trainer_config, sink, config.dump_trajectories ? &trajectories : nullptr);
      result.final_return = final_return(kept, trainer_config.final_window);
      if (!result.final_return) result.error = "no episode completed";
    } catch (const std::exception& e) {
      result.error = e.what();
    }
    if (log) {
      *log << config.label << " seed " << seed << ": "
           << (result.ok() ? "final_return " + csv_number(*result.final_return) : "failed: " + result.error) << '\n';
    }
    cell.seeds.push_back(std::move(result));
  }
  finish_cell(cell);
  write_summary(dir / "summary.csv", cell);
  return cell;
}

CellResult summarize_directory(const fs::path& dir, int final_window) {
  CellResult cell;
  cell.name = dir.filename().string();
  std::vector<fs::path> seed_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("seed_", 0) == 0) seed_dirs.push_back(entry.path());
  }
  std::sort(seed_dirs.begin(), seed_dirs.end());
  for (const fs::path& sd : seed_dirs) {
    SeedResult result;
    result.seed = std::stoull(sd.filename().string().substr(5));
    result.final_return = final_return(read_records(sd / "records.jsonl"), final_window);
    if (!result.final_return) result.error = "no episode completed";
    cell.seeds.push_back(std::move(result));
  }
  finish_cell(cell);
  return cell;
}

SweepResult cmd_sweep(const SweepSpec& spec, std::ostream* log) {
  const RunConfig base = resolve_run_config(spec.base);
  SweepResult result;
  result.dir = run_directory(base);
  result.values = spec.values;
  fs::create_directories(result.dir);
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    KeyValues values = spec.base;
    values[spec.parameter] = spec.values[i];
    CellResult cell;
    cell.name = spec.parameter + "=" + spec.values[i];
    std::string error;
    try {
      RunConfig config = resolve_run_config(values);
      config.label = base.label + "/value_" + std::to_string(i);
      cell = execute_runs(config, result.dir / ("value_" + std::to_string(i)), log);
      cell.name = spec.parameter + "=" + spec.values[i];
    } catch (const std::exception& e) {
      error = e.what();
      finish_cell(cell);
      if (log) *log << cell.name << ": skipped: " << error << '\n';
    }
    result.cells.push_back(std::move(cell));
    result.cell_errors.push_back(error);
  }
  std::ofstream out = open_out(result.dir / "sweep.csv");
  out << "value,mean,std,n,failed\n";
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const CellResult& c = result.cells[i];
    const int failed = result.cell_errors[i].empty() ? c.failed() : static_cast<int>(base.seeds.size());
    out << spec.values[i] << ',' << csv_number(c.stats.mean) << ',' << csv_number(c.stats.std) << ',' << c.stats.n
        << ',' << failed << '\n';
  }
  return result;
}

const char* to_string(AblationCell cell) {
  switch (cell) {
    case AblationCell::full: return "full";
    case AblationCell::rcb_only: return "rcb_only";
    case AblationCell::rsq_only: return "rsq_only";
    case AblationCell::fixed_beta: return "fixed_beta";
    case AblationCell::water_filling: return "water_filling";
    case AblationCell::uniform_noise: return "uniform_noise";
  }
  return "?";
}

RunConfig ablation_config(const RunConfig& base, AblationCell cell) {
  RunConfig config = base;
  TrainerConfig& t = config.trainer;
  switch (cell) {
    case AblationCell::full: break;
    case AblationCell::rcb_only: t.rsq.lambda = 0.0; break;
    case AblationCell::rsq_only:
      t.schedule = ScheduleMode::fixed;
      t.fixed_beta = t.rcb.beta_max;
      break;
    case AblationCell::fixed_beta:
      t.schedule = ScheduleMode::fixed;
      t.fixed_beta = t.rcb.beta_max;
      t.allocation = AllocationMode::none;
      break;
    case AblationCell::water_filling: t.allocation = AllocationMode::water_filling; break;
    case AblationCell::uniform_noise: t.sd.source = IntrinsicSource::uniform_noise; break;
  }
  config.label = base.label + "/" + to_string(cell);
  return config;
}

AblationResult cmd_ablate(const RunConfig& base, const std::vector<AblationCell>& cells, std::ostream* log) {
  AblationResult result;
  result.dir = run_directory(base);
  fs::create_directories(result.dir);
  for (AblationCell which : cells) {
    const RunConfig config = ablation_config(base, which);
    const fs::path cell_dir = result.dir / to_string(which);
    CellResult cell = execute_runs(config, cell_dir, log);
    cell.name = to_string(which);
    std::ofstream gap = open_out(cell_dir / "quality_gap.csv");
    gap << "seed,iteration,quality_gap\n";
    for (const SeedResult& s : cell.seeds) {
      const fs::path records = cell_dir / ("seed_" + std::to_string(s.seed)) / "records.jsonl";
      for (const IterationRecord& r : read_records(records)) {
        gap << s.seed << ',' << r.iteration << ',' << csv_number(r.quality_gap) << '\n';
      }
    }
    result.cells.push_back(std::move(cell));
  }
  std::ofstream out = open_out(result.dir / "ablation.csv");
  out << "cell,mean,std,n,failed\n";
  for (const CellResult& c : result.cells) {
    out << c.name << ',' << csv_number(c.stats.mean) << ',' << csv_number(c.stats.std) << ',' << c.stats.n << ','
        << c.failed() << '\n';
  }
  return result;
}

// ---------------------------------------------------------------------------
// verify / check

std::vector<CheckRow> cmd_verify(const fs::path& dir, bool quick) {
  fs::create_directories(dir);
  std::vector<CheckRow> rows;

  for (const RegimeCase& c : standard_regime_cases()) {
    const FixedPoint fp = find_fixed_point(c.response, c.params);
    const ContractionReport contraction = check_contraction(c.params, c.response.slope_bound());
    const double e0 = std::abs(fp.r_star);
    const int iterations =
        static_cast<int>(std::ceil(std::log(1e-12 / e0) / std::log(contraction.rho))) + 100;
    const ScheduleTrajectory traj = simulate_schedule(c.response, c.params, {}, iterations, 0);
    double worst_excess = -std::numeric_limits<double>::infinity();
    double envelope = e0;
    for (std::size_t k = 0; k < traj.r_ema.size(); ++k) {
      worst_excess = std::max(worst_excess, std::abs(traj.r_ema[k] - fp.r_star) - envelope - 1e-10);
      envelope *= contraction.rho;
    }
    const double terminal = std::abs(traj.r_ema.back() - fp.r_star);
    std::ostringstream detail;
    detail << "rho=" << contraction.rho << " beta*=" << std::setprecision(10) << fp.beta_star << " roots=" << fp.roots.size()
           << " terminal=" << std::setprecision(3) << terminal << " envelope_excess=" << worst_excess;
    rows.push_back({"converge " + c.name, detail.str(), contraction.satisfied && fp.unique && worst_excess <= 0 && terminal < 1e-8});

    std::string file = c.name;
    std::replace(file.begin(), file.end(), '/', '_');
    std::ofstream out = open_out(dir / ("trajectory_" + file + ".csv"));
    out << "k,r_ema,beta\n";
    for (std::size_t k = 0; k < traj.r_ema.size(); ++k) {
      out << k << ',' << csv_number(traj.r_ema[k]) << ',' << csv_number(traj.beta[k]) << '\n';
    }
  }

  const int seeds = quick ? 4 : 20;
  const int iterations = quick ? 4000 : 20000;
  RcbParams params;
  for (double alpha : {0.01, 0.03, 0.1}) {
    for (double l_phi : {0.0, 0.4, 0.8}) {
      for (double sigma : {1.0, 10.0, 50.0}) {
        params.alpha_r = alpha;
        const ResponseFunction response = linear_response_for_lphi(params, params.r_target, l_phi);
        const NoiseFloorReport report = measure_noise_floor(response, params, {sigma, NoiseDistribution::gaussian}, iterations, seeds);
        std::ostringstream name;
        name << "noise alpha=" << alpha << " L=" << l_phi << " sigma=" << sigma;
        std::ostringstream detail;
        detail << std::setprecision(4) << "mse=" << report.mse << " bound=" << report.bound
               << " ar1=" << report.ar1_oracle << " window=[" << report.window_begin << "," << iterations << "]";
        bool passed = report.within_bound;
        if (l_phi == 0.0) passed = passed && report.mse <= 2.0 * report.ar1_oracle && report.mse >= 0.5 * report.ar1_oracle;
        rows.push_back({name.str(), detail.str(), passed});
      }
    }
  }

  std::ofstream table = open_out(dir / "verify.csv");
  table << "check,passed,detail\n";
  for (const CheckRow& r : rows) table << '"' << r.name << "\"," << (r.passed ? 1 : 0) << ",\"" << r.detail << "\"\n";
  return rows;
}

std::vector<CheckRow> cmd_check(std::uint64_t seed) {
  std::vector<CheckRow> rows;
  std::mt19937_64 rng(seed);

  {
    RcbParams p;
    p.beta_min = 0.3;
    p.beta_max = 0.5;
    const ContractionReport r = check_contraction(p, 0.1);
    std::ostringstream d;
    d << std::setprecision(17) << "product=" << r.lipschitz_product;
    rows.push_back({"contraction product kappa=0.01 span=0.2 slope=0.1", d.str(), std::abs(r.lipschitz_product - 5e-5) <= 1e-12});
  }
  {
    const double w = transition_bandwidth(0.01);
    std::ostringstream d;
    d << std::setprecision(10) << "bandwidth=" << w;
    rows.push_back({"bandwidth kappa=0.01", d.str(), w >= 588.8 && w <= 589.0});
  }
  {
    std::uniform_int_distribution<int> size(2, 16);
    std::uniform_real_distribution<double> log_snr(-3.0, 3.0);
    int violations = 0;
    double worst_budget = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      Eigen::VectorXd snr(size(rng));
      for (Eigen::Index i = 0; i < snr.size(); ++i) snr(i) = std::pow(10.0, log_snr(rng));
      Eigen::VectorXd rsq = snr.unaryExpr([](double s) { return rsq_from_snr(s); });
      const double budget = static_cast<double>(snr.size()) * 0.25;
      const auto wf = water_filling(snr, budget);
      const auto affine = affine_allocation(rsq, RsqParams{});
      if (!ordering_check(snr, affine, wf, RsqParams{}).passed) ++violations;
      worst_budget = std::max(worst_budget, std::abs(wf.powers.sum() - budget));
    }
    rows.push_back({"ordering preservation (200 vectors)", "violations=" + std::to_string(violations), violations == 0});
    std::ostringstream d;
    d << "max |sum p - B|=" << worst_budget;
    rows.push_back({"water-filling budget", d.str(), worst_budget <= 1e-9});
  }
  {
    // Magnitudes keep c * mu and c * sigma at or above 0.1 for every c, where epsilon is negligible.
    std::uniform_real_distribution<double> u(100.0, 1000.0);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      AgentSignalStats s{u(rng), std::pow(u(rng), 2)};
      const double base = compute_rsq(s, 1e-8);
      for (double c : {1e-3, 1e3}) {
        AgentSignalStats scaled{c * s.mu, c * c * s.sigma_sq};
        worst = std::max(worst, std::abs(compute_rsq(scaled, 1e-8) - base));
      }
    }
    std::ostringstream d;
    d << "max drift=" << worst;
    rows.push_back({"RSQ scale invariance", d.str(), worst < 1e-6});
  }
  {
    std::uniform_int_distribution<int> size(2, 8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int failures = 0;
    for (int trial = 0; trial < 10; ++trial) {
      const int n = size(rng);
      Eigen::MatrixXd p(n, n);
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) p(r, c) = u(rng) < 0.4 ? 0.0 : u(rng);
        p(r, (r + 1) % n) += 0.1;
        p.row(r) /= p.row(r).sum();
      }
      if (!check_quasimetric(successor_measure(TabularMdp{p, 0.9})).passed()) ++failures;
    }
    rows.push_back({"successor distance quasimetric (10 MDPs)", "failures=" + std::to_string(failures), failures == 0});
  }
  return rows;
}

void print_check_table(std::ostream& out, const std::vector<CheckRow>& rows) {
  std::size_t width = 0;
  for (const CheckRow& r : rows) width = std::max(width, r.name.size());
  for (const CheckRow& r : rows) {
    out << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width)) << r.name << "  "
        << r.detail << '\n';
  }
}

}  // namespace qex
