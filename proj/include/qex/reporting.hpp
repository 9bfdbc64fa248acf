#pragma once

#include "qex/config.hpp"
#include "qex/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qex {

// File formats
//
//   records.jsonl    one IterationRecord per line, schema kRecordSchema
//   timing.csv       iteration,wall_clock_seconds (kept apart so record streams are deterministic)
//   trajectories.jsonl  one line per env step, only with debug.trajectories = true
//   config.cfg       the fully resolved configuration
//   summary.csv      seed,final_return,status rows, then mean and std rows
//   sweep.csv        value,mean,std,n,failed
//   ablation.csv     cell,mean,std,n,failed
//   quality_gap.csv  seed,iteration,quality_gap (one per ablation cell)

inline constexpr const char* kRecordSchema = "qex.iteration.v1";

std::string record_to_line(const IterationRecord& record);
IterationRecord record_from_line(const std::string& line);
std::vector<IterationRecord> read_records(const std::filesystem::path& path);

struct MeanStd {
  double mean{0};
  double std{0};  // population
  int n{0};
};

/// Empty input gives n = 0 and NaN moments.
MeanStd mean_std(const std::vector<double>& values);

struct SeedResult {
  std::uint64_t seed{0};
  std::optional<double> final_return;
  std::string error;  // empty on success
  bool ok() const { return error.empty() && final_return.has_value(); }
};

struct CellResult {
  std::string name;
  std::vector<SeedResult> seeds;
  MeanStd stats;  // over successful seeds
  int failed() const;
};

/// Runs every seed of `config` into `dir`: dir/config.cfg, dir/summary.csv and
/// dir/seed_<s>/{records.jsonl,timing.csv}. Records are flushed as they are
/// produced; a failing seed is recorded and the rest still run.
CellResult execute_runs(const RunConfig& config, const std::filesystem::path& dir, std::ostream* log = nullptr);

/// Final return of every seed recomputed from the stored record streams.
CellResult summarize_directory(const std::filesystem::path& dir, int final_window);

struct SweepResult {
  std::filesystem::path dir;
  std::vector<std::string> values;
  std::vector<CellResult> cells;
  std::vector<std::string> cell_errors;  // config errors per value, empty when the cell ran
};

SweepResult cmd_sweep(const SweepSpec& spec, std::ostream* log = nullptr);

enum class AblationCell { full, rcb_only, rsq_only, fixed_beta, water_filling, uniform_noise };
inline constexpr AblationCell kAllAblationCells[] = {AblationCell::full,          AblationCell::rcb_only,
                                                     AblationCell::rsq_only,      AblationCell::fixed_beta,
                                                     AblationCell::water_filling, AblationCell::uniform_noise};
const char* to_string(AblationCell cell);
/// The base configuration with one component switched.
RunConfig ablation_config(const RunConfig& base, AblationCell cell);

struct AblationResult {
  std::filesystem::path dir;
  std::vector<CellResult> cells;
};

AblationResult cmd_ablate(const RunConfig& base, const std::vector<AblationCell>& cells, std::ostream* log = nullptr);

/// Run directory for a config: output_root / label.
std::filesystem::path run_directory(const RunConfig& config);

struct CheckRow {
  std::string name;
  std::string detail;
  bool passed{false};
};

/// Convergence suite: the standard in-regime cases plus the noise-floor grid.
/// Writes verify.csv and one trajectory file per case under `dir`.
std::vector<CheckRow> cmd_verify(const std::filesystem::path& dir, bool quick);

/// Fast property checks that touch no files.
std::vector<CheckRow> cmd_check(std::uint64_t seed);

void print_check_table(std::ostream& out, const std::vector<CheckRow>& rows);

}  // namespace qex
