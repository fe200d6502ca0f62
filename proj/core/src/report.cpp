// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/report.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"

namespace ssmtta {

using nlohmann::json;

std::string format_pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

namespace {

json config_to(const ExperimentConfig& c) {
  std::vector<std::string> probes;
  for (const auto& p : c.adapt.probe_perms) probes.push_back(p.str());
  return json{
      {"checkpoint", c.checkpoint},
      {"data_seed", c.data_seed},
      {"data_samples", c.data_samples},
      {"corruption", to_string(c.corruption)},
      {"severity", c.severity},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"pool", c.pool},
      {"ranking_source", c.ranking_source},
      {"method", to_string(c.adapt.method)},
      {"mode", to_string(c.adapt.mode)},
      {"exec", to_string(c.adapt.execution)},
      {"k", c.adapt.k},
      {"iters", c.adapt.iterations},
      {"lr", c.adapt.lr},
      {"polarity", to_string(c.adapt.polarity)},
      {"entropy_weighted", c.adapt.entropy_weighted},
      {"calibration_batches", c.adapt.calibration_batches},
      {"probe_perms", probes},
  };
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw std::invalid_argument(std::string("config field '") + key + "' missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config field '") + key + "': " + e.what());
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::string config_json(const ExperimentConfig& config) { return config_to(config).dump(2); }

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed JSON: ") + e.what());
  }
  if (j.contains("config")) j = j.at("config");
  ExperimentConfig c;
  c.checkpoint = field<std::string>(j, "checkpoint");
  c.data_seed = field<std::uint64_t>(j, "data_seed");
  c.data_samples = field<std::size_t>(j, "data_samples");
  c.corruption = parse_corruption(field<std::string>(j, "corruption"));
  c.severity = field<int>(j, "severity");
  c.batch_size = field<std::size_t>(j, "batch_size");
  c.seed = field<std::uint64_t>(j, "seed");
  c.pool = field<std::string>(j, "pool");
  c.ranking_source = field<std::string>(j, "ranking_source");
  c.adapt.method = parse_method(field<std::string>(j, "method"));
  c.adapt.mode = parse_mode(field<std::string>(j, "mode"));
  c.adapt.execution = parse_execution(field<std::string>(j, "exec"));
  c.adapt.k = field<std::size_t>(j, "k");
  c.adapt.iterations = field<std::size_t>(j, "iters");
  c.adapt.lr = field<double>(j, "lr");
  c.adapt.polarity = parse_polarity(field<std::string>(j, "polarity"));
  c.adapt.entropy_weighted = field<bool>(j, "entropy_weighted");
  c.adapt.calibration_batches = field<std::size_t>(j, "calibration_batches");
  for (const auto& p : field<std::vector<std::string>>(j, "probe_perms")) c.adapt.probe_perms.push_back(Permutation::parse(p));
  return c;
}

std::string run_report_json(const ExperimentRun& run) {
  const RunResult& r = run.result;
  json per_batch = json::array();
  for (std::size_t b = 0; b < r.batches.size(); ++b) {
    per_batch.push_back({{"batch", b},
                         {"samples", r.batches[b].samples},
                         {"correct", r.batches[b].correct},
                         {"accuracy_pct", format_pct(r.batches[b].accuracy())}});
  }
  json entropies = json::array();
  if (r.ranking) {
    for (const auto& e : r.ranking->entries) entropies.push_back({{"perm", e.perm.str()}, {"entropy", e.entropy}});
  }
  json selected = json::array();
  for (const auto& p : r.selected) selected.push_back(p.str());
  json diversity = json::array();
  for (const auto& d : r.diversity) diversity.push_back({{"param", d.name}, {"mean_l2", d.mean_l2}, {"std_l2", d.std_l2}});
  json probes = json::object();
  for (const auto& [perm, hits] : r.probe_correct) {
    probes[perm] = format_pct(r.samples() ? static_cast<double>(hits) / static_cast<double>(r.samples()) : 0.0);
  }
  json report{
      {"format", "ssmtta-run-report"},
      {"version", 1},
      {"config", config_to(run.config)},
      {"method", to_string(r.method)},
      {"samples", r.samples()},
      {"correct", r.correct()},
      {"accuracy_pct", format_pct(r.accuracy())},
      {"per_corruption", {{std::string(to_string(run.config.corruption)) + "/" + std::to_string(run.config.severity),
                           format_pct(r.accuracy())}}},
      {"per_batch", per_batch},
      {"permutation_entropies", entropies},
      {"selected", selected},
      {"probe_accuracy_pct", probes},
      {"timing_s",
       {{"ranking", r.timing.ranking_s}, {"adaptation", r.timing.adaptation_s}, {"prediction", r.timing.prediction_s}}},
      {"diversity", diversity},
  };
  return report.dump(2) + "\n";
}

std::string ranking_json(const EntropyRanking& ranking, const ExperimentConfig& config) {
  json entries = json::array();
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    entries.push_back({{"rank", i + 1}, {"perm", ranking.entries[i].perm.str()}, {"entropy", ranking.entries[i].entropy}});
  }
  json doc{{"format", "ssmtta-ranking"},
           {"version", 1},
           {"config", config_to(config)},
           {"calibration", {{"batches", ranking.calibration_batches},
                            {"samples", ranking.calibration_samples},
                            {"seed", ranking.seed},
                            {"source", ranking.source}}},
           {"ranking", entries}};
  return doc.dump(2) + "\n";
}

std::string accuracy_csv(const ExperimentRun& run) {
  const auto& c = run.config;
  const RunResult& r = run.result;
  std::ostringstream out;
  const std::string prefix = std::string(to_string(c.adapt.method)) + "," + to_string(c.adapt.mode) + "," +
                             to_string(c.adapt.execution) + "," + to_string(c.corruption) + "," +
                             std::to_string(c.severity) + "," + std::to_string(c.seed) + ",";
  out << kAccuracyCsvHeader << "\n";
  for (std::size_t b = 0; b < r.batches.size(); ++b) {
    const auto& rec = r.batches[b];
    out << prefix << b << "," << rec.samples << "," << rec.correct << "," << format_pct(rec.accuracy()) << "\n";
  }
  out << prefix << "all," << r.samples() << "," << r.correct() << "," << format_pct(r.accuracy()) << "\n";
  return out.str();
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << kSweepCsvHeader << "\n";
  for (const auto& r : rows) {
    out << r.axis << "," << r.value << "," << r.method << "," << r.seed << "," << r.samples << "," << r.correct << ","
        << format_pct(r.accuracy()) << "\n";
  }
  for (const auto& [value, mean] : sweep_means(rows)) {
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const SweepRow& r) { return r.value == value; });
    std::size_t samples = 0, correct = 0;
    for (const auto& r : rows)
      if (r.value == value) samples += r.samples, correct += r.correct;
    out << it->axis << "," << value << "," << it->method << ",mean," << samples << "," << correct << ","
        << format_pct(mean) << "\n";
  }
  return out.str();
}

std::string summarize_csvs(const std::vector<std::string>& csv_texts) {
  struct Acc {
    std::string source;
    std::size_t runs = 0;
    double total = 0.0;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> groups;
  auto add = [&](const std::string& source, const std::string& key, double frac) {
    const std::string id = source + "\x1f" + key;
    auto [it, fresh] = groups.try_emplace(id, Acc{source});
    if (fresh) order.push_back(id);
    it->second.runs += 1;
    it->second.total += frac;
  };
  for (const auto& text : csv_texts) {
    std::istringstream in(text);
    std::string header, line;
    std::getline(in, header);
    const bool accuracy = header == kAccuracyCsvHeader;
    const bool sweep = header == kSweepCsvHeader;
    if (!accuracy && !sweep) throw std::invalid_argument("unrecognised CSV header '" + header + "'");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split(line);
      if (cells.size() != (accuracy ? 10u : 7u)) throw std::invalid_argument("malformed CSV row '" + line + "'");
      const double samples = std::stod(cells[accuracy ? 7 : 4]);
      const double correct = std::stod(cells[accuracy ? 8 : 5]);
      const double frac = samples > 0 ? correct / samples : 0.0;
      if (accuracy && cells[6] == "all") add("adapt", cells[0] + "/" + cells[3] + "/" + cells[4], frac);
      if (sweep && cells[3] != "mean") add("ablate", cells[0] + "=" + cells[1] + "/" + cells[2], frac);
    }
  }
  std::ostringstream out;
  out << kSummaryCsvHeader << "\n";
  for (const auto& id : order) {
    const Acc& a = groups.at(id);
    out << a.source << "," << id.substr(id.find('\x1f') + 1) << "," << a.runs << ","
        << format_pct(a.total / static_cast<double>(a.runs)) << "\n";
  }
  return out.str();
}

}  // namespace ssmtta
