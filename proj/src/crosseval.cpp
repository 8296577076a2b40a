#include "simlab/crosseval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "simlab/usersim.hpp"

namespace simlab {

void CrossEvalConfig::validate() const {
  if (policies_per_sim == 0) throw UsageError("policies_per_sim must be >= 1");
  if (train_episodes == 0) throw UsageError("train_episodes must be >= 1");
  if (eval_dialogues == 0) throw UsageError("eval_dialogues must be >= 1");
  if (!(error_rate >= 0.0 && error_rate <= 1.0)) throw UsageError("error_rate must be in [0, 1]");
  if (threads == 0) throw UsageError("threads must be >= 1");
}

nlohmann::json CrossEvalConfig::to_json() const {
  return {{"policies_per_sim", policies_per_sim},
          {"train_episodes", train_episodes},
          {"eval_dialogues", eval_dialogues},
          {"error_rate", error_rate},
          {"base_seed", base_seed},
          {"alpha_start", policy.alpha_start},
          {"alpha_end", policy.alpha_end},
          {"tau_start", policy.tau_start},
          {"tau_end", policy.tau_end},
          {"reward", policy.reward.to_json()}};
}

CrossEvalConfig CrossEvalConfig::from_json(const nlohmann::json &j) {
  CrossEvalConfig c;
  try {
    c.policies_per_sim = j.value("policies_per_sim", c.policies_per_sim);
    c.train_episodes = j.value("train_episodes", c.train_episodes);
    c.eval_dialogues = j.value("eval_dialogues", c.eval_dialogues);
    c.error_rate = j.value("error_rate", c.error_rate);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.threads = j.value("threads", c.threads);
    c.policy.alpha_start = j.value("alpha_start", c.policy.alpha_start);
    c.policy.alpha_end = j.value("alpha_end", c.policy.alpha_end);
    c.policy.tau_start = j.value("tau_start", c.policy.tau_start);
    c.policy.tau_end = j.value("tau_end", c.policy.tau_end);
    if (j.contains("reward")) c.policy.reward = RewardConfig::from_json(j.at("reward"));
  } catch (const nlohmann::json::exception &e) {
    throw UsageError(std::string("bad cross-evaluation config: ") + e.what());
  }
  return c;
}

namespace {

nlohmann::json cell_json(const CellResult &c) { return {{"success", c.success}, {"reward", c.reward}}; }

CellResult cell_from(const nlohmann::json &j) { return {j.at("success").get<double>(), j.at("reward").get<double>()}; }

nlohmann::json group_json(const std::optional<GroupScore> &g) {
  if (!g) return nullptr;
  return {{"success", g->success}, {"reward", g->reward}, {"rank", g->rank}};
}

std::optional<GroupScore> group_from(const nlohmann::json &j) {
  if (j.is_null()) return std::nullopt;
  return GroupScore{j.at("success").get<double>(), j.at("reward").get<double>(), j.at("rank").get<int>()};
}

// Rank 1 = highest reward; ties keep row order.
template <typename Get> void assign_ranks(std::size_t rows, Get get) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rows; ++i)
    if (get(i)) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return get(a)->reward > get(b)->reward; });
  for (std::size_t r = 0; r < idx.size(); ++r) get(idx[r])->rank = static_cast<int>(r + 1);
}

std::optional<GroupScore> mean_over(const std::vector<CellResult> &row, const std::vector<bool> &neural, bool want) {
  GroupScore g;
  std::size_t n = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (neural[j] != want) continue;
    g.success += row[j].success;
    g.reward += row[j].reward;
    ++n;
  }
  if (n == 0) return std::nullopt;
  g.success /= static_cast<double>(n);
  g.reward /= static_cast<double>(n);
  return g;
}

// Runs jobs 0..n-1 on up to `threads` workers; the first failure is rethrown
// after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)> &job) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (failure) return;
      }
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto &t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

[[noreturn]] void rethrow_with_context(const std::string &prefix) {
  try {
    throw;
  } catch (const UsageError &e) {
    throw UsageError(prefix + e.what());
  } catch (const NumericalError &e) {
    throw NumericalError(prefix + e.what());
  } catch (const DataError &e) {
    throw DataError(prefix + e.what());
  } catch (const std::exception &e) {
    throw NumericalError(prefix + e.what());
  }
}

// Every cell in evaluation column j sees the same goal sequence.
std::uint64_t eval_seed(std::uint64_t base, std::size_t column) { return base + 1000003ULL * (column + 1); }

} // namespace

nlohmann::json CrossEvalReport::to_json() const {
  nlohmann::json j;
  j["kind"] = "crosseval";
  j["config"] = config.to_json();
  j["simulators"] = nlohmann::json::array();
  for (std::size_t i = 0; i < simulators.size(); ++i)
    j["simulators"].push_back({{"id", simulators[i]}, {"neural", static_cast<bool>(neural[i])}});
  j["matrix"] = nlohmann::json::array();
  for (const auto &row : matrix) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto &c : row) r.push_back(cell_json(c));
    j["matrix"].push_back(r);
  }
  j["runs"] = nlohmann::json::array();
  for (const auto &per_k : runs) {
    nlohmann::json rk = nlohmann::json::array();
    for (const auto &row : per_k) {
      nlohmann::json r = nlohmann::json::array();
      for (const auto &c : row) r.push_back(cell_json(c));
      rk.push_back(r);
    }
    j["runs"].push_back(rk);
  }
  j["rows"] = nlohmann::json::array();
  for (std::size_t i = 0; i < simulators.size(); ++i)
    j["rows"].push_back({{"simulator", simulators[i]},
                         {"vs_neural", group_json(vs_neural[i])},
                         {"vs_agenda", group_json(vs_agenda[i])},
                         {"overall", group_json(overall[i])}});
  j["ranking"] = nlohmann::json::array();
  for (auto i : ranking) j["ranking"].push_back(simulators[i]);
  return j;
}

CrossEvalReport CrossEvalReport::from_json(const nlohmann::json &j) {
  try {
    if (j.value("kind", "") != "crosseval") throw DataError("not a cross-evaluation report");
    CrossEvalReport r;
    r.config = CrossEvalConfig::from_json(j.at("config"));
    for (const auto &s : j.at("simulators")) {
      r.simulators.push_back(s.at("id").get<std::string>());
      r.neural.push_back(s.at("neural").get<bool>());
    }
    for (const auto &row : j.at("matrix")) {
      std::vector<CellResult> cells;
      for (const auto &c : row) cells.push_back(cell_from(c));
      r.matrix.push_back(cells);
    }
    for (const auto &per_k : j.value("runs", nlohmann::json::array())) {
      std::vector<std::vector<CellResult>> rk;
      for (const auto &row : per_k) {
        std::vector<CellResult> cells;
        for (const auto &c : row) cells.push_back(cell_from(c));
        rk.push_back(cells);
      }
      r.runs.push_back(rk);
    }
    const auto n = r.simulators.size();
    if (r.matrix.size() != n) throw DataError("report matrix does not match simulator list");
    for (const auto &row : r.matrix)
      if (row.size() != n) throw DataError("report matrix is not square");
    for (const auto &row : j.at("rows")) {
      r.vs_neural.push_back(group_from(row.at("vs_neural")));
      r.vs_agenda.push_back(group_from(row.at("vs_agenda")));
      r.overall.push_back(*group_from(row.at("overall")));
    }
    for (const auto &name : j.at("ranking")) {
      auto it = std::find(r.simulators.begin(), r.simulators.end(), name.get<std::string>());
      if (it == r.simulators.end()) throw DataError("ranking names an unknown simulator");
      r.ranking.push_back(static_cast<std::size_t>(it - r.simulators.begin()));
    }
    return r;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

void aggregate(CrossEvalReport &r) {
  const std::size_t n = r.matrix.size();
  r.vs_neural.assign(n, std::nullopt);
  r.vs_agenda.assign(n, std::nullopt);
  r.overall.assign(n, GroupScore{});
  for (std::size_t i = 0; i < n; ++i) {
    r.vs_neural[i] = mean_over(r.matrix[i], r.neural, true);
    r.vs_agenda[i] = mean_over(r.matrix[i], r.neural, false);
    if (r.vs_neural[i] && r.vs_agenda[i]) {
      r.overall[i].success = 0.5 * (r.vs_neural[i]->success + r.vs_agenda[i]->success);
      r.overall[i].reward = 0.5 * (r.vs_neural[i]->reward + r.vs_agenda[i]->reward);
    } else {
      const auto &only = r.vs_neural[i] ? r.vs_neural[i] : r.vs_agenda[i];
      r.overall[i].success = only->success;
      r.overall[i].reward = only->reward;
    }
  }
  assign_ranks(n, [&](std::size_t i) { return r.vs_neural[i] ? &*r.vs_neural[i] : nullptr; });
  assign_ranks(n, [&](std::size_t i) { return r.vs_agenda[i] ? &*r.vs_agenda[i] : nullptr; });
  assign_ranks(n, [&](std::size_t i) { return &r.overall[i]; });
  r.ranking.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) r.ranking[static_cast<std::size_t>(r.overall[i].rank - 1)] = i;
}

CrossEvalOutput run_crosseval(const std::vector<SimulatorEntry> &sims, const Ontology &o, const CrossEvalConfig &cfg) {
  cfg.validate();
  if (sims.size() < 2) throw UsageError("cross-evaluation needs at least two simulators");
  for (std::size_t i = 0; i < sims.size(); ++i)
    for (std::size_t j = i + 1; j < sims.size(); ++j)
      if (sims[i].id == sims[j].id) throw UsageError("duplicate simulator id: " + sims[i].id);

  const std::size_t n = sims.size(), k = cfg.policies_per_sim;
  ErrorChannelConfig err = cfg.policy.error;
  err.rate = cfg.error_rate;
  err.validate();

  CrossEvalOutput out;
  out.policies.assign(n, std::vector<PolicyTrainResult>(k));
  parallel_for(n * k, cfg.threads, [&](std::size_t job) {
    const std::size_t i = job / k, s = job % k;
    const std::uint64_t seed = cfg.base_seed + s;
    try {
      auto sim = sims[i].make();
      PolicyTrainConfig pc = cfg.policy;
      pc.episodes = cfg.train_episodes;
      pc.seed = seed;
      pc.error = err;
      out.policies[i][s] = train_policy(*sim, o, pc);
    } catch (...) {
      rethrow_with_context("training against simulator '" + sims[i].id + "' with seed " + std::to_string(seed) + ": ");
    }
  });

  auto &r = out.report;
  r.config = cfg;
  for (const auto &s : sims) {
    r.simulators.push_back(s.id);
    r.neural.push_back(s.neural);
  }
  r.runs.assign(n, std::vector<std::vector<CellResult>>(k, std::vector<CellResult>(n)));
  parallel_for(n * k * n, cfg.threads, [&](std::size_t job) {
    const std::size_t i = job / (k * n), s = (job / n) % k, j = job % n;
    try {
      auto sim = sims[j].make();
      const auto ev = evaluate_policy(out.policies[i][s].model, *sim, o, cfg.eval_dialogues, err,
                                      eval_seed(cfg.base_seed, j), cfg.policy.reward, cfg.policy.goals);
      r.runs[i][s][j] = {100.0 * ev.success_rate, ev.mean_reward};
    } catch (...) {
      rethrow_with_context("evaluating policy (" + sims[i].id + ", seed " + std::to_string(cfg.base_seed + s) +
                           ") against '" + sims[j].id + "': ");
    }
  });
  r.matrix.assign(n, std::vector<CellResult>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t s = 0; s < k; ++s) {
        r.matrix[i][j].success += r.runs[i][s][j].success;
        r.matrix[i][j].reward += r.runs[i][s][j].reward;
      }
      r.matrix[i][j].success /= static_cast<double>(k);
      r.matrix[i][j].reward /= static_cast<double>(k);
    }
  aggregate(r);
  return out;
}

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string pad(const std::string &s, std::size_t w, bool right = true) {
  if (s.size() >= w) return s;
  return right ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
}

std::vector<std::string> group_cells(const std::optional<GroupScore> &g) {
  if (!g) return {"-", "-", "-"};
  return {fmt(g->success), fmt(g->reward), std::to_string(g->rank)};
}

std::string render_text(const CrossEvalReport &r) {
  std::size_t w = 6;
  for (const auto &s : r.simulators) w = std::max(w, s.size());
  std::ostringstream out;
  const std::string blank(w, ' ');
  out << blank << " | " << pad("Against Neural Simulators", 24, false) << " | " << pad("Against Agenda", 24, false)
      << " | " << pad("Overall", 24, false) << "\n";
  out << pad("Policy", w, false);
  for (int g = 0; g < 3; ++g) out << " | " << pad("Succ", 8) << pad("Rew", 9) << pad("Rank", 7);
  out << "\n" << std::string(w + 3 * 27, '-') << "\n";
  for (std::size_t i = 0; i < r.simulators.size(); ++i) {
    out << pad(r.simulators[i], w, false);
    for (const auto &g : {r.vs_neural[i], r.vs_agenda[i], std::optional<GroupScore>(r.overall[i])}) {
      const auto c = group_cells(g);
      out << " | " << pad(c[0], 8) << pad(c[1], 9) << pad(c[2], 7);
    }
    out << "\n";
  }
  out << "\nFull matrix (rows: training simulator, columns: evaluation simulator; success % / mean reward)\n";
  std::size_t cw = 16;
  for (const auto &s : r.simulators) cw = std::max(cw, s.size() + 2);
  out << blank;
  for (const auto &s : r.simulators) out << pad(s, cw);
  out << "\n";
  for (std::size_t i = 0; i < r.simulators.size(); ++i) {
    out << pad(r.simulators[i], w, false);
    for (const auto &c : r.matrix[i]) out << pad(fmt(c.success) + " / " + fmt(c.reward), cw);
    out << "\n";
  }
  out << "\nRanking by overall mean reward:";
  for (auto i : r.ranking) out << " " << r.simulators[i];
  out << "\n";
  return out.str();
}

std::string render_markdown(const CrossEvalReport &r) {
  std::ostringstream out;
  out << "| Policy | Neural Succ | Neural Rew | Neural Rank | Agenda Succ | Agenda Rew | Agenda Rank | Overall Succ | "
         "Overall Rew | Overall Rank |\n";
  out << "|---|---|---|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < r.simulators.size(); ++i) {
    out << "| " << r.simulators[i];
    for (const auto &g : {r.vs_neural[i], r.vs_agenda[i], std::optional<GroupScore>(r.overall[i])})
      for (const auto &c : group_cells(g)) out << " | " << c;
    out << " |\n";
  }
  return out.str();
}

} // namespace

std::string render_report(const CrossEvalReport &r, const std::string &format) {
  if (format == "text") return render_text(r);
  if (format == "json") return r.to_json().dump(2) + "\n";
  if (format == "markdown") return render_markdown(r);
  throw UsageError("unknown report format: " + format + " (expected text, json or markdown)");
}

CrossEvalManifest CrossEvalManifest::parse(const nlohmann::json &j, const std::filesystem::path &base_dir) {
  auto resolve = [&](const std::string &p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  CrossEvalManifest m;
  m.raw = j;
  try {
    if (!j.is_object()) throw UsageError("manifest must be a JSON object");
    static const std::vector<std::string> known = {"simulators",   "policies_per_sim", "train_episodes",
                                                   "eval_dialogues", "error_rate",       "base_seed",
                                                   "threads",      "ontology",         "alpha_start",
                                                   "alpha_end",    "tau_start",        "tau_end",
                                                   "reward"};
    for (const auto &[key, _] : j.items())
      if (std::find(known.begin(), known.end(), key) == known.end()) throw UsageError("unknown manifest key: " + key);
    for (const auto &s : j.at("simulators")) {
      ManifestSimulator ms;
      if (s.is_string()) {
        const auto v = s.get<std::string>();
        if (v == "agenda") {
          ms.id = "agenda";
        } else {
          ms.model = resolve(v);
          ms.id = ms.model->stem().string();
        }
      } else {
        const auto kind = s.value("kind", s.contains("model") ? "neural" : "agenda");
        if (kind == "agenda") {
          ms.id = s.value("id", "agenda");
        } else if (kind == "neural") {
          ms.model = resolve(s.at("model").get<std::string>());
          ms.id = s.value("id", ms.model->stem().string());
        } else {
          throw UsageError("unknown simulator kind: " + kind);
        }
      }
      m.simulators.push_back(ms);
    }
    if (j.contains("ontology")) m.ontology = resolve(j.at("ontology").get<std::string>());
    m.config = CrossEvalConfig::from_json(j);
  } catch (const nlohmann::json::exception &e) {
    throw UsageError(std::string("bad manifest: ") + e.what());
  }
  m.config.validate();
  if (m.simulators.size() < 2) throw UsageError("manifest must list at least two simulators");
  return m;
}

CrossEvalManifest CrossEvalManifest::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw UsageError("manifest is not valid JSON: " + std::string(e.what()));
  }
  return parse(j, path.parent_path());
}

std::vector<SimulatorEntry> build_simulators(const CrossEvalManifest &m, const Ontology &o) {
  std::vector<SimulatorEntry> out;
  for (const auto &s : m.simulators) {
    SimulatorEntry e;
    e.id = s.id;
    if (!s.model) {
      e.make = [&o] { return std::make_unique<AgendaSimulator>(o); };
    } else {
      e.neural = true;
      auto model = std::make_shared<const GeneratorModel>(GeneratorModel::load(*s.model));
      const std::string id = s.id;
      e.make = [model, &o, id] { return std::make_unique<NeuralSimulator>(model, o, id); };
    }
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

void write_file(const std::filesystem::path &p, const std::string &text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
}

} // namespace

void write_run_directory(const std::filesystem::path &dir, const CrossEvalManifest &m, const CrossEvalOutput &out) {
  std::filesystem::create_directories(dir / "policies");
  write_file(dir / "manifest.json", m.raw.dump(2) + "\n");
  write_file(dir / "report.json", render_report(out.report, "json"));
  write_file(dir / "report.txt", render_report(out.report, "text"));
  write_file(dir / "report.md", render_report(out.report, "markdown"));
  for (std::size_t i = 0; i < out.policies.size(); ++i)
    for (const auto &p : out.policies[i]) {
      const std::string stem = out.report.simulators[i] + "-" + std::to_string(p.model.metadata.seed);
      p.model.save(dir / "policies" / (stem + ".json"));
      std::string curve;
      for (const auto &c : p.curve)
        curve += nlohmann::json{{"episode", c.episode},
                                {"success", c.windowed_success},
                                {"reward", c.windowed_reward},
                                {"alpha", c.alpha},
                                {"tau", c.tau}}
                     .dump() +
                 "\n";
      write_file(dir / "policies" / (stem + ".curve.jsonl"), curve);
    }
}

HumanRecord human_record_from_json(const nlohmann::json &j) {
  try {
    HumanRecord r;
    r.session = j.at("session").get<std::string>();
    r.policy = j.at("policy").get<std::string>();
    r.group = j.value("policy_sim", r.policy);
    if (r.group.empty()) r.group = r.policy;
    r.length = j.at("length").get<int>();
    const auto &q = j.at("questionnaire");
    if (q.is_null()) return r;
    std::vector<double> a;
    for (int i = 1; i <= 6; ++i) {
      const auto &v = q.at("q" + std::to_string(i));
      if (i <= 2) {
        bool yes;
        if (v.is_boolean()) {
          yes = v.get<bool>();
        } else {
          const auto s = to_lower(v.get<std::string>());
          if (s != "yes" && s != "no") throw ValidationError("q" + std::to_string(i) + " must be yes or no");
          yes = s == "yes";
        }
        a.push_back(yes ? 1.0 : 0.0);
      } else {
        const int x = v.get<int>();
        if (x < 1 || x > 6) throw ValidationError("q" + std::to_string(i) + " must be in 1..6");
        a.push_back(x);
      }
    }
    r.answers = a;
    return r;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("malformed results record: ") + e.what());
  }
}

std::vector<HumanRecord> load_human_results(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open results file: " + path.string());
  std::vector<HumanRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(human_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception &e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError &e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Moments moments(const std::vector<double> &xs) {
  Moments m;
  if (xs.empty()) return m;
  const double n = static_cast<double>(xs.size());
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / (n - 1.0));
    m.se = m.sd / std::sqrt(n);
  }
  return m;
}

nlohmann::json HumanReport::to_json() const {
  auto mj = [](const Moments &m) { return nlohmann::json{{"mean", m.mean}, {"sd", m.sd}, {"se", m.se}}; };
  nlohmann::json j;
  j["groups"] = nlohmann::json::array();
  for (const auto &g : groups) {
    nlohmann::json q = nlohmann::json::object();
    for (std::size_t i = 0; i < g.questions.size(); ++i) q["q" + std::to_string(i + 1)] = mj(g.questions[i]);
    j["groups"].push_back({{"group", g.group}, {"dialogues", g.dialogues}, {"length", mj(g.length)}, {"questions", q}});
  }
  j["abandoned_excluded"] = abandoned;
  return j;
}

HumanReport summarize_human(const std::vector<HumanRecord> &records) {
  HumanReport rep;
  std::map<std::string, std::vector<const HumanRecord *>> by_group;
  for (const auto &r : records) {
    if (!r.answers) {
      ++rep.abandoned;
      continue;
    }
    by_group[r.group].push_back(&r);
  }
  for (const auto &[name, rs] : by_group) {
    HumanGroupSummary g;
    g.group = name;
    g.dialogues = rs.size();
    std::vector<double> len;
    std::vector<std::vector<double>> q(6);
    for (const auto *r : rs) {
      len.push_back(r->length);
      for (std::size_t i = 0; i < 6; ++i) q[i].push_back((*r->answers)[i]);
    }
    g.length = moments(len);
    for (const auto &col : q) {
      Moments m = moments(col);
      g.questions.push_back(m);
    }
    // Binary items: standard error of the proportion, sqrt(p(1-p)/n)
    for (std::size_t i = 0; i < 2; ++i) {
      auto &m = g.questions[i];
      m.se = std::sqrt(m.mean * (1.0 - m.mean) / static_cast<double>(g.dialogues));
    }
    rep.groups.push_back(g);
  }
  return rep;
}

std::string render_human_report(const HumanReport &r, const std::string &format) {
  if (format == "json") return r.to_json().dump(2) + "\n";
  if (format != "text" && format != "markdown")
    throw UsageError("unknown report format: " + format + " (expected text, json or markdown)");
  auto ms = [](double mean, double spread) { return fmt(mean) + " (" + fmt(spread) + ")"; };
  const std::vector<std::string> heads = {"Policy",  "Num Dials", "Average Length", "Q1 [%]", "Q2 [%]",
                                          "Q3 [1-6]", "Q4 [1-6]", "Q5 [1-6]",       "Q6 [1-6]"};
  std::vector<std::vector<std::string>> rows;
  for (const auto &g : r.groups) {
    std::vector<std::string> row = {g.group, std::to_string(g.dialogues), ms(g.length.mean, g.length.sd)};
    for (std::size_t i = 0; i < 2; ++i) row.push_back(ms(100.0 * g.questions[i].mean, 100.0 * g.questions[i].se));
    for (std::size_t i = 2; i < 6; ++i) row.push_back(ms(g.questions[i].mean, g.questions[i].sd));
    rows.push_back(row);
  }
  std::ostringstream out;
  if (format == "markdown") {
    out << "|";
    for (const auto &h : heads) out << " " << h << " |";
    out << "\n|";
    for (std::size_t i = 0; i < heads.size(); ++i) out << "---|";
    out << "\n";
    for (const auto &row : rows) {
      out << "|";
      for (const auto &c : row) out << " " << c << " |";
      out << "\n";
    }
  } else {
    std::vector<std::size_t> w(heads.size());
    for (std::size_t i = 0; i < heads.size(); ++i) {
      w[i] = heads[i].size();
      for (const auto &row : rows) w[i] = std::max(w[i], row[i].size());
    }
    for (std::size_t i = 0; i < heads.size(); ++i) out << (i ? "  " : "") << pad(heads[i], w[i], i == 0 ? false : true);
    out << "\n";
    for (const auto &row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "  " : "") << pad(row[i], w[i], i != 0);
      out << "\n";
    }
  }
  out << "\nLength: system turns per dialogue, mean (sd). Q1/Q2: percent yes (standard error). Q3-Q6: mean (sd).\n";
  out << r.abandoned << " abandoned session(s) with no questionnaire excluded.\n";
  return out.str();
}

} // namespace simlab
