#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/ontology.hpp"
#include "simlab/policy.hpp"
#include "simlab/simulator.hpp"

namespace simlab {

// One simulator taking part in a cross-evaluation. `make` must return a fresh
// instance each call; jobs never share a simulator object.
struct SimulatorEntry {
  std::string id;
  bool neural = false;
  std::function<std::unique_ptr<UserSimulator>()> make;
};

struct CrossEvalConfig {
  std::size_t policies_per_sim = 2;
  std::size_t train_episodes = 5000;
  std::size_t eval_dialogues = 1000;
  double error_rate = 0.25;
  std::uint64_t base_seed = 0;
  std::size_t threads = 1;
  PolicyTrainConfig policy;  // learning schedule; episodes, seed and error rate come from the fields above

  void validate() const;
  nlohmann::json to_json() const;
  static CrossEvalConfig from_json(const nlohmann::json &j);
};

struct CellResult {
  double success = 0.0;  // percent
  double reward = 0.0;
};

struct GroupScore {
  double success = 0.0;
  double reward = 0.0;
  int rank = 0;  // 1 = best mean reward within the group
};

struct CrossEvalReport {
  CrossEvalConfig config;
  std::vector<std::string> simulators;
  std::vector<bool> neural;
  // [train][eval], averaged over the K policies of the training simulator
  std::vector<std::vector<CellResult>> matrix;
  // [train][k][eval], the unaveraged evaluations
  std::vector<std::vector<std::vector<CellResult>>> runs;
  std::vector<std::optional<GroupScore>> vs_neural;
  std::vector<std::optional<GroupScore>> vs_agenda;
  std::vector<GroupScore> overall;
  std::vector<std::size_t> ranking;  // row indices, best overall mean reward first

  nlohmann::json to_json() const;
  static CrossEvalReport from_json(const nlohmann::json &j);
};

// Fills the aggregate fields (vs_neural, vs_agenda, overall, ranks) from the
// matrix. Overall is the mean of the two group scores; a missing group leaves
// only the other.
void aggregate(CrossEvalReport &r);

struct CrossEvalOutput {
  CrossEvalReport report;
  std::vector<std::vector<PolicyTrainResult>> policies;  // [train][k]
};

CrossEvalOutput run_crosseval(const std::vector<SimulatorEntry> &sims, const Ontology &o, const CrossEvalConfig &cfg);

// text | json | markdown
std::string render_report(const CrossEvalReport &r, const std::string &format);

// Experiment manifest. Simulator entries are either the string "agenda", a
// model path, or {"id": ..., "model": path} / {"id": ..., "kind": "agenda"}.
// Relative paths resolve against the manifest's directory.
struct ManifestSimulator {
  std::string id;
  std::optional<std::filesystem::path> model;  // empty = agenda
};

struct CrossEvalManifest {
  nlohmann::json raw;
  std::vector<ManifestSimulator> simulators;
  std::optional<std::filesystem::path> ontology;
  CrossEvalConfig config;

  static CrossEvalManifest parse(const nlohmann::json &j, const std::filesystem::path &base_dir);
  static CrossEvalManifest load(const std::filesystem::path &path);
};

std::vector<SimulatorEntry> build_simulators(const CrossEvalManifest &m, const Ontology &o);

// Writes manifest.json, report.{json,txt,md} and policies/<sim>-<seed>.json.
void write_run_directory(const std::filesystem::path &dir, const CrossEvalManifest &m, const CrossEvalOutput &out);

// Human evaluation results (one JSONL record per session, written by the
// service). Records with "questionnaire": null are abandoned sessions.
struct HumanRecord {
  std::string session;
  std::string policy;
  std::string group;  // training simulator of the policy
  int length = 0;
  std::optional<std::vector<double>> answers;  // q1..q6, q1/q2 as 1 = yes
};

HumanRecord human_record_from_json(const nlohmann::json &j);
std::vector<HumanRecord> load_human_results(const std::filesystem::path &path);

struct Moments {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1)
  double se = 0.0;  // standard error of the mean
};

struct HumanGroupSummary {
  std::string group;
  std::size_t dialogues = 0;
  Moments length;
  std::vector<Moments> questions;  // q1..q6; q1/q2 on a 0..1 scale
};

struct HumanReport {
  std::vector<HumanGroupSummary> groups;  // sorted by group name
  std::size_t abandoned = 0;
  nlohmann::json to_json() const;
};

Moments moments(const std::vector<double> &xs);
HumanReport summarize_human(const std::vector<HumanRecord> &records);
// Q1/Q2 are shown as percentages with the standard error of the proportion in
// brackets; length and Q3-Q6 as mean (sd).
std::string render_human_report(const HumanReport &r, const std::string &format);

} // namespace simlab
