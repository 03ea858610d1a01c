#include "shaped_transfer/curves.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "shaped_transfer/errors.hpp"

namespace shaped_transfer {

std::vector<double> moving_average(std::span<const double> series, int window) {
  require(window >= 1, errc::contract, "moving-average window must be >= 1");
  std::vector<double> out(series.size());
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const std::size_t first = k + 1 >= w ? k + 1 - w : 0;
    double sum = 0.0;
    for (std::size_t i = first; i <= k; ++i) sum += series[i];
    out[k] = sum / static_cast<double>(k - first + 1);
  }
  return out;
}

std::vector<EpisodeStats> aggregate_seeds(const std::vector<std::vector<double>>& series) {
  require(!series.empty(), errc::contract, "nothing to aggregate");
  std::size_t longest = 0;
  for (const auto& s : series) longest = std::max(longest, s.size());
  std::vector<EpisodeStats> out;
  out.reserve(longest);
  for (std::size_t k = 0; k < longest; ++k) {
    EpisodeStats st;
    st.episode = static_cast<int>(k);
    double sum = 0.0;
    for (const auto& s : series)
      if (k < s.size()) {
        sum += s[k];
        ++st.count;
      }
    st.mean = sum / st.count;
    double sq = 0.0;
    for (const auto& s : series)
      if (k < s.size()) sq += (s[k] - st.mean) * (s[k] - st.mean);
    st.stddev = std::sqrt(sq / st.count);
    out.push_back(st);
  }
  return out;
}

std::vector<EpisodeStats> aggregate_seeds(std::span<const RunRecord> records, int window) {
  require(!records.empty(), errc::contract, "nothing to aggregate");
  std::vector<std::vector<double>> smoothed, steps;
  for (const auto& r : records) {
    std::vector<double> raw, st;
    for (const auto& e : r.episodes) {
      raw.push_back(e.reward);
      st.push_back(static_cast<double>(e.env_steps));
    }
    smoothed.push_back(moving_average(raw, window));
    steps.push_back(std::move(st));
  }
  auto out = aggregate_seeds(smoothed);
  const auto step_stats = aggregate_seeds(steps);
  for (std::size_t k = 0; k < out.size(); ++k) out[k].mean_env_steps = step_stats[k].mean;
  return out;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return {buf, res.ptr};
}

std::vector<CsvRow> csv_rows(const RunRecord& record, int window) {
  std::vector<double> raw;
  for (const auto& e : record.episodes) raw.push_back(e.reward);
  const auto smoothed = moving_average(raw, window);
  std::vector<CsvRow> rows;
  for (std::size_t k = 0; k < record.episodes.size(); ++k) {
    const auto& e = record.episodes[k];
    rows.push_back({to_string(record.method), record.seed, e.episode, e.env_steps, e.reward, smoothed[k], e.truncated});
  }
  return rows;
}

std::string format_csv_row(const CsvRow& row) {
  std::string out = row.method;
  out += ',' + std::to_string(row.seed);
  out += ',' + std::to_string(row.episode);
  out += ',' + std::to_string(row.env_steps);
  out += ',' + format_double(row.episode_reward);
  out += ',' + format_double(row.smoothed_reward);
  out += row.truncated ? ",1" : ",0";
  return out;
}

void emit_csv(std::span<const RunRecord> records, int window, const std::string& path) {
  require(!records.empty(), errc::contract, "no records to write");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), errc::io, "cannot write CSV '" + path + "'");
  out << csv_header << '\n';
  for (const auto& r : records)
    for (const auto& row : csv_rows(r, window)) out << format_csv_row(row) << '\n';
  require(static_cast<bool>(out), errc::io, "failed writing CSV '" + path + "'");
}

namespace {

template <typename T>
T parse_number(std::string_view field, const std::string& where) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  require(res.ec == std::errc() && res.ptr == field.data() + field.size(), errc::io,
          "bad numeric field '" + std::string(field) + "' in " + where);
  return value;
}

}  // namespace

std::vector<CsvRow> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), errc::io, "cannot read CSV '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == csv_header, errc::io,
          "CSV '" + path + "' does not start with the expected header");
  std::vector<CsvRow> rows;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1))
      f.push_back(rest.substr(0, pos));
    f.push_back(rest);
    const std::string where = path + ":" + std::to_string(n);
    require(f.size() == 7, errc::io, "expected 7 fields at " + where);
    CsvRow row;
    row.method = std::string(f[0]);
    row.seed = parse_number<std::uint64_t>(f[1], where);
    row.episode = parse_number<int>(f[2], where);
    row.env_steps = parse_number<long>(f[3], where);
    row.episode_reward = parse_number<double>(f[4], where);
    row.smoothed_reward = parse_number<double>(f[5], where);
    require(f[6] == "0" || f[6] == "1", errc::io, "bad truncated flag at " + where);
    row.truncated = f[6] == "1";
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<MethodSeries> group_by_method(const std::vector<CsvRow>& rows) {
  std::vector<MethodSeries> out;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> seed_slot;
  for (const auto& row : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& m) { return m.method == row.method; });
    if (it == out.end()) {
      out.push_back({row.method, {}, {}, {}, {}});
      it = std::prev(out.end());
    }
    const auto key = std::make_pair(row.method, row.seed);
    auto slot = seed_slot.find(key);
    if (slot == seed_slot.end()) {
      slot = seed_slot.emplace(key, it->seeds.size()).first;
      it->seeds.push_back(row.seed);
      it->smoothed.emplace_back();
      it->raw.emplace_back();
      it->env_steps.emplace_back();
    }
    it->smoothed[slot->second].push_back(row.smoothed_reward);
    it->raw[slot->second].push_back(row.episode_reward);
    it->env_steps[slot->second].push_back(static_cast<double>(row.env_steps));
  }
  return out;
}

std::vector<MethodCurve> curves_from_rows(const std::vector<CsvRow>& rows) {
  std::vector<MethodCurve> out;
  for (const auto& m : group_by_method(rows)) {
    MethodCurve c{m.method, aggregate_seeds(m.smoothed)};
    const auto steps = aggregate_seeds(m.env_steps);
    for (std::size_t k = 0; k < c.stats.size(); ++k) c.stats[k].mean_env_steps = steps[k].mean;
    out.push_back(std::move(c));
  }
  return out;
}

nlohmann::json report(const std::vector<CsvRow>& rows, int final_episodes) {
  require(final_episodes >= 1, errc::contract, "final episode count must be >= 1");
  nlohmann::json out = nlohmann::json::object();
  for (const auto& m : group_by_method(rows)) {
    std::size_t min_len = SIZE_MAX, max_len = 0;
    double final_sum = 0.0, overall_sum = 0.0;
    std::size_t final_n = 0, overall_n = 0;
    std::vector<double> final_means;
    for (const auto& raw : m.raw) {
      min_len = std::min(min_len, raw.size());
      max_len = std::max(max_len, raw.size());
      const std::size_t from = raw.size() > static_cast<std::size_t>(final_episodes)
                                   ? raw.size() - static_cast<std::size_t>(final_episodes)
                                   : 0;
      double s = 0.0;
      for (std::size_t i = from; i < raw.size(); ++i) s += raw[i];
      final_means.push_back(s / static_cast<double>(raw.size() - from));
      final_sum += s;
      final_n += raw.size() - from;
      for (double v : raw) overall_sum += v;
      overall_n += raw.size();
    }
    double steps_max = 0.0;
    for (const auto& s : m.env_steps)
      if (!s.empty()) steps_max = std::max(steps_max, s.back());
    out[m.method] = {{"seeds", m.seeds.size()},
                     {"episodes_min", min_len},
                     {"episodes_max", max_len},
                     {"max_env_steps", static_cast<long>(steps_max)},
                     {"mean_reward", overall_sum / static_cast<double>(overall_n)},
                     {"final_episodes", final_episodes},
                     {"final_mean_reward", final_sum / static_cast<double>(final_n)},
                     {"final_mean_reward_per_seed", final_means}};
  }
  return out;
}

}  // namespace shaped_transfer
