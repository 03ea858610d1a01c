#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "shaped_transfer/harness.hpp"

namespace shaped_transfer {

inline constexpr std::string_view csv_header =
    "method,seed,episode,env_steps,episode_reward,smoothed_reward,truncated";

/// Trailing mean: out[k] = mean(series[max(0, k-W+1) .. k]).
std::vector<double> moving_average(std::span<const double> series, int window);

struct EpisodeStats {
  int episode = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  int count = 0;
  double mean_env_steps = 0.0;
};

/// Aligns series by index; indices present in only some series aggregate
/// over that subset.
std::vector<EpisodeStats> aggregate_seeds(const std::vector<std::vector<double>>& series);
/// Aggregates the W-smoothed rewards of each record.
std::vector<EpisodeStats> aggregate_seeds(std::span<const RunRecord> records, int window);

struct CsvRow {
  std::string method;
  std::uint64_t seed = 0;
  int episode = 0;
  long env_steps = 0;
  double episode_reward = 0.0;
  double smoothed_reward = 0.0;
  bool truncated = false;
};

std::vector<CsvRow> csv_rows(const RunRecord& record, int window);
std::string format_csv_row(const CsvRow& row);
std::string format_double(double value);

void emit_csv(std::span<const RunRecord> records, int window, const std::string& path);
std::vector<CsvRow> read_csv(const std::string& path);

/// Per-method, per-seed series of one CSV column.
struct MethodSeries {
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> smoothed;
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> env_steps;
};
std::vector<MethodSeries> group_by_method(const std::vector<CsvRow>& rows);

enum class PlotAlignment { episode, env_steps };

struct MethodCurve {
  std::string method;
  std::vector<EpisodeStats> stats;
};

std::vector<MethodCurve> curves_from_rows(const std::vector<CsvRow>& rows);

/// SVG learning-curve plot: mean line plus a +-1 std band per method.
std::string render_plot(const std::vector<MethodCurve>& curves, PlotAlignment alignment, const std::string& title);
void emit_plot(const std::vector<MethodCurve>& curves, const std::string& path, PlotAlignment alignment,
               const std::string& title = {});

/// Summary statistics per method (seed count, episodes, final means).
nlohmann::json report(const std::vector<CsvRow>& rows, int final_episodes = 50);

}  // namespace shaped_transfer
