// simlab: command-line driver for corpus preparation, simulator training and
// evaluation, policy training, cross-evaluation and the human-evaluation
// service.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "simlab/corpus.hpp"
#include "simlab/crosseval.hpp"
#include "simlab/kernels.hpp"
#include "simlab/metrics.hpp"
#include "simlab/policy.hpp"
#include "simlab/service.hpp"
#include "simlab/training.hpp"

using namespace simlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Config file: --config, else $SIMLAB_CONFIG, else empty. Sections: ontology,
// kernels, split, train, policy, synth. Command-line flags win.
json load_config(const std::string &flag_path) {
  std::string path = flag_path;
  if (path.empty())
    if (const char *env = std::getenv("SIMLAB_CONFIG")) path = env;
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw UsageError("config file must hold a JSON object");
    return j;
  } catch (const json::exception &e) {
    throw UsageError("config file is not valid JSON: " + std::string(e.what()));
  }
}

json section(const json &cfg, const char *name) { return cfg.contains(name) ? cfg.at(name) : json::object(); }

struct Globals {
  std::string config_path;
  std::string ontology_path;
  std::string kernels;
  json config;
  std::optional<Ontology> custom;

  const Ontology &ontology() {
    std::string p = ontology_path;
    if (p.empty()) p = config.value("ontology", "");
    if (p.empty()) return toy_ontology();
    if (!custom) custom = load_ontology(p);
    return *custom;
  }
};

void write_text(const fs::path &path, const std::string &text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

SplitSpec split_from(const json &cfg, bool drop_null) {
  SplitSpec s;
  const json j = section(cfg, "split");
  s.train = j.value("train", s.train);
  s.dev = j.value("dev", s.dev);
  s.test = j.value("test", s.test);
  s.drop_null_turns = drop_null || j.value("drop_null_turns", false);
  return s;
}

std::unique_ptr<UserSimulator> make_sim(const std::string &spec, const Ontology &o,
                                        std::shared_ptr<const GeneratorModel> *keep) {
  if (spec == "agenda") return std::make_unique<AgendaSimulator>(o);
  auto model = std::make_shared<const GeneratorModel>(GeneratorModel::load(spec));
  if (keep) *keep = model;
  return std::make_unique<NeuralSimulator>(model, o, fs::path(spec).stem().string());
}

std::string fixed(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"simlab: user simulators, dialogue policies and cross-evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file (default: $SIMLAB_CONFIG)");
  app.add_option("--ontology", g.ontology_path, "ontology JSON (default: bundled toy domain)");
  app.add_option("--kernels", g.kernels, "numeric kernels: auto, scalar or avx2 (default: $SIMLAB_KERNELS or auto)");

  // corpus -------------------------------------------------------------------
  auto *corpus = app.add_subcommand("corpus", "synthesize, convert and inspect corpora");
  corpus->require_subcommand(1);

  auto *synth = corpus->add_subcommand("synth", "generate a synthetic corpus (agenda simulator vs handcrafted policy)");
  std::string synth_out;
  std::optional<std::size_t> synth_n;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--out", synth_out, "output JSONL")->required();
  synth->add_option("--dialogues", synth_n, "number of dialogues (500)");
  synth->add_option("--seed", synth_seed, "seed (7)");

  auto *convert = corpus->add_subcommand("convert", "convert a DSTC-2 style directory tree");
  std::string conv_in, conv_out;
  convert->add_option("--dstc2", conv_in, "root directory with log.json/label.json sessions")->required();
  convert->add_option("--out", conv_out, "output JSONL")->required();

  auto *stats = corpus->add_subcommand("stats", "corpus statistics");
  std::string stats_in;
  bool stats_json = false;
  stats->add_option("--corpus", stats_in, "corpus JSONL")->required();
  stats->add_flag("--json", stats_json, "print JSON");

  // sim ----------------------------------------------------------------------
  auto *sim = app.add_subcommand("sim", "train and evaluate neural user simulators");
  sim->require_subcommand(1);

  auto *strain = sim->add_subcommand("train", "train an MLE or GAN simulator");
  std::string st_corpus, st_out, st_log, st_disc_out, st_method;
  std::optional<double> st_gen_lr, st_gen_wd, st_disc_lr, st_disc_wd;
  std::optional<int> st_epochs, st_pre, st_adv;
  std::optional<std::size_t> st_batch, st_adv_batch;
  std::optional<std::uint64_t> st_seed;
  bool st_drop_null = false;
  strain->add_option("--corpus", st_corpus, "corpus JSONL")->required();
  strain->add_option("--out", st_out, "output model JSON")->required();
  strain->add_option("--log", st_log, "per-epoch log JSONL");
  strain->add_option("--disc-out", st_disc_out, "discriminator model JSON (GAN)");
  strain->add_option("--method", st_method, "mle or gan");
  strain->add_option("--gen-lr", st_gen_lr, "generator learning rate");
  strain->add_option("--gen-wd", st_gen_wd, "generator weight decay");
  strain->add_option("--disc-lr", st_disc_lr, "discriminator learning rate");
  strain->add_option("--disc-wd", st_disc_wd, "discriminator weight decay");
  strain->add_option("--epochs", st_epochs, "MLE epochs");
  strain->add_option("--pretrain-epochs", st_pre, "GAN pre-training epochs");
  strain->add_option("--adversarial-epochs", st_adv, "GAN adversarial epochs");
  strain->add_option("--batch-size", st_batch, "dialogues per MLE update");
  strain->add_option("--adversarial-batch-size", st_adv_batch, "dialogues per adversarial update");
  strain->add_option("--seed", st_seed, "seed");
  strain->add_flag("--drop-null-turns", st_drop_null, "drop user turns whose only act is null()");

  auto *seval = sim->add_subcommand("eval", "direct evaluation: F-score, KL-divergence, entropy");
  std::string se_corpus, se_format = "text";
  std::vector<std::string> se_models;
  bool se_weighted = false, se_drop_null = false;
  seval->add_option("--corpus", se_corpus, "corpus JSONL (test split is used)")->required();
  seval->add_option("--model", se_models, "model JSON (repeatable)")->required();
  seval->add_option("--format", se_format, "text or json");
  seval->add_flag("--weighted-kl", se_weighted, "weight contexts by frequency in the KL average");
  seval->add_flag("--drop-null-turns", se_drop_null, "drop user turns whose only act is null()");

  // policy -------------------------------------------------------------------
  auto *policy = app.add_subcommand("policy", "train and evaluate dialogue policies");
  policy->require_subcommand(1);

  auto *ptrain = policy->add_subcommand("train", "Monte Carlo control against a simulator");
  std::string pt_sim = "agenda", pt_out = "policies";
  std::optional<std::size_t> pt_episodes, pt_eval;
  std::optional<double> pt_err;
  std::size_t pt_runs = 1;
  std::optional<std::uint64_t> pt_seed;
  ptrain->add_option("--sim", pt_sim, "'agenda' or a simulator model JSON");
  ptrain->add_option("--episodes", pt_episodes, "training episodes per run (5000)");
  ptrain->add_option("--error-rate", pt_err, "semantic error rate (0.25)");
  ptrain->add_option("--runs", pt_runs, "independent runs, seeds seed..seed+runs-1");
  ptrain->add_option("--seed", pt_seed, "first seed (0)");
  ptrain->add_option("--eval-dialogues", pt_eval, "greedy evaluation dialogues after training (1000, 0 = skip)");
  ptrain->add_option("--out-dir", pt_out, "directory for policy-<seed>.json and curves");

  auto *peval = policy->add_subcommand("eval", "greedy evaluation of a policy");
  std::string pe_policy, pe_sim = "agenda";
  std::size_t pe_n = 1000;
  double pe_err = 0.25;
  std::uint64_t pe_seed = 0;
  peval->add_option("--policy", pe_policy, "policy JSON")->required();
  peval->add_option("--sim", pe_sim, "'agenda' or a simulator model JSON");
  peval->add_option("--dialogues", pe_n, "evaluation dialogues");
  peval->add_option("--error-rate", pe_err, "semantic error rate");
  peval->add_option("--seed", pe_seed, "seed");

  // crosseval ----------------------------------------------------------------
  auto *xe = app.add_subcommand("crosseval", "policy cross-evaluation");
  xe->require_subcommand(1);
  auto *xrun = xe->add_subcommand("run", "train K policies per simulator and evaluate against all");
  std::string xr_manifest, xr_out, xr_format = "text";
  std::optional<std::size_t> xr_threads;
  xrun->add_option("--manifest", xr_manifest, "experiment manifest JSON")->required();
  xrun->add_option("--out", xr_out, "run directory (default: next to the manifest, <name>-run)");
  xrun->add_option("--threads", xr_threads, "worker threads");
  xrun->add_option("--format", xr_format, "report printed to stdout: text, json or markdown");

  auto *xrender = xe->add_subcommand("render", "render a stored report or aggregate human results");
  std::string xd_report, xd_human, xd_format = "text";
  xrender->add_option("--report", xd_report, "report.json from a run");
  xrender->add_option("--human", xd_human, "questionnaire results JSONL");
  xrender->add_option("--format", xd_format, "text, json or markdown");

  // chat / serve -------------------------------------------------------------
  auto *chat = app.add_subcommand("chat", "terminal chat with a policy");
  std::string ch_policy, ch_goal;
  std::uint64_t ch_seed = 0;
  chat->add_option("--policy", ch_policy, "policy JSON")->required();
  chat->add_option("--goal", ch_goal, "goal JSON (default: sampled)");
  chat->add_option("--seed", ch_seed, "seed for goal sampling and realization");

  auto *serve = app.add_subcommand("serve", "HTTP service for human evaluation");
  std::vector<std::string> sv_policies;
  std::string sv_host = "127.0.0.1", sv_results = "results.jsonl", sv_static;
  int sv_port = 8080;
  std::uint64_t sv_seed = 0;
  serve->add_option("--policy", sv_policies, "policy JSON (repeatable; sessions rotate round-robin)")->required();
  serve->add_option("--host", sv_host, "bind address");
  serve->add_option("--port", sv_port, "port (0 picks a free one)");
  serve->add_option("--results", sv_results, "questionnaire results JSONL (appended)");
  serve->add_option("--seed", sv_seed, "seed for scenario sampling");
  serve->add_option("--static", sv_static, "directory served at / (chat front end)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    g.config = load_config(g.config_path);
    std::string kern = g.kernels.empty() ? g.config.value("kernels", "") : g.kernels;
    if (!kern.empty()) kernels::select_backend(kern);

    if (*synth) {
      SynthesisConfig c;
      const json j = section(g.config, "synth");
      c.dialogues = synth_n.value_or(j.value("dialogues", c.dialogues));
      c.seed = synth_seed.value_or(j.value("seed", c.seed));
      const auto ds = synthesize_corpus(g.ontology(), c);
      write_corpus(fs::path(synth_out), ds);
      std::cout << "wrote " << ds.size() << " dialogues to " << synth_out << "\n";
    } else if (*convert) {
      Dstc2ConvertStats st;
      const auto ds = convert_dstc2(conv_in, &st);
      write_corpus(fs::path(conv_out), ds);
      std::cout << "converted " << st.sessions << " sessions (" << st.skipped_acts << " unmappable acts skipped) to "
                << conv_out << "\n";
    } else if (*stats) {
      const auto s = corpus_stats(read_corpus(fs::path(stats_in)));
      if (stats_json) {
        std::cout << corpus_stats_to_json(s).dump(2) << "\n";
      } else {
        std::cout << "dialogues        " << s.dialogues << "\nturns            " << s.turns << "\nmean turns       "
                  << fixed(s.mean_turns, 2) << "\nuser acts        " << s.user_acts << "\nnull user turns  "
                  << s.null_user_turns << "\n";
        for (const auto &[type, n] : s.act_type_counts) std::cout << "  " << type << " " << n << "\n";
      }
    } else if (*strain) {
      TrainConfig c = TrainConfig::from_json(section(g.config, "train"));
      if (!st_method.empty()) c.method = method_from_name(st_method);
      if (st_gen_lr) c.gen_lr = *st_gen_lr;
      if (st_gen_wd) c.gen_wd = *st_gen_wd;
      if (st_disc_lr) c.disc_lr = *st_disc_lr;
      if (st_disc_wd) c.disc_wd = *st_disc_wd;
      if (st_epochs) c.epochs = *st_epochs;
      if (st_pre) c.pretrain_epochs = *st_pre;
      if (st_adv) c.adversarial_epochs = *st_adv;
      if (st_batch) c.batch_size = *st_batch;
      if (st_adv_batch) c.adversarial_batch_size = *st_adv_batch;
      if (st_seed) c.seed = *st_seed;
      c.validate();
      const auto &o = g.ontology();
      const auto split = load_corpus(st_corpus, split_from(g.config, st_drop_null));
      const auto res = train_simulator(split, o, c);
      json meta = {{"method", method_name(c.method)},
                   {"config", c.to_json()},
                   {"selected", {{"phase", res.selected_phase}, {"epoch", res.selected_epoch}}}};
      res.generator.save(st_out, meta);
      if (!st_disc_out.empty() && res.discriminator) res.discriminator->save(st_disc_out, meta);
      if (!st_log.empty()) res.log.write_jsonl(st_log);
      const auto &last = res.log.records.back();
      std::cout << method_name(c.method) << " model written to " << st_out << " (selected " << res.selected_phase
                << " epoch " << res.selected_epoch << ", final dev NLL " << fixed(last.dev_nll) << ")\n";
    } else if (*seval) {
      if (se_format != "text" && se_format != "json") throw UsageError("unknown format: " + se_format);
      const auto split = load_corpus(se_corpus, split_from(g.config, se_drop_null));
      if (split.test.empty()) throw DataError("corpus has an empty test split");
      std::vector<DirectEvalReport> rows;
      std::optional<double> baseline;
      for (const auto &path : se_models) {
        const auto m = GeneratorModel::load(path);
        const auto test = encode_dialogues(split.test, m.layout());
        rows.push_back(direct_eval(m, test, fs::path(path).stem().string(), se_weighted));
        if (!baseline) baseline = majority_baseline_f(encode_dialogues(split.train, m.layout()), test);
      }
      if (se_format == "json") {
        json out = {{"models", json::array()}, {"majority_baseline_f", *baseline}};
        for (const auto &r : rows) out["models"].push_back(r.to_json());
        std::cout << out.dump(2) << "\n";
      } else {
        std::cout << render_direct_table(rows) << "majority-sequence baseline F-score: " << fixed(*baseline) << "\n";
      }
    } else if (*ptrain) {
      const auto &o = g.ontology();
      const json pj = section(g.config, "policy");
      PolicyTrainConfig base;
      base.episodes = pt_episodes.value_or(pj.value("episodes", base.episodes));
      base.error.rate = pt_err.value_or(pj.value("error_rate", base.error.rate));
      base.alpha_start = pj.value("alpha_start", base.alpha_start);
      base.alpha_end = pj.value("alpha_end", base.alpha_end);
      base.tau_start = pj.value("tau_start", base.tau_start);
      base.tau_end = pj.value("tau_end", base.tau_end);
      base.error.validate();
      if (pt_runs == 0) throw UsageError("--runs must be >= 1");
      const std::uint64_t seed0 = pt_seed.value_or(pj.value("seed", std::uint64_t{0}));
      const std::size_t n_eval = pt_eval.value_or(pj.value("eval_dialogues", std::size_t{1000}));
      std::shared_ptr<const GeneratorModel> keep;
      auto simulator = make_sim(pt_sim, o, &keep);
      fs::create_directories(pt_out);
      double sum_success = 0.0, sum_reward = 0.0;
      for (std::size_t r = 0; r < pt_runs; ++r) {
        PolicyTrainConfig c = base;
        c.seed = seed0 + r;
        const auto res = train_policy(*simulator, o, c);
        const fs::path stem = fs::path(pt_out) / ("policy-" + std::to_string(c.seed));
        res.model.save(stem.string() + ".json");
        std::string curve;
        for (const auto &p : res.curve)
          curve += json{{"episode", p.episode}, {"success", p.windowed_success}, {"reward", p.windowed_reward},
                        {"alpha", p.alpha}, {"tau", p.tau}}
                       .dump() +
                   "\n";
        write_text(stem.string() + ".curve.jsonl", curve);
        std::cout << "seed " << c.seed << ": trained " << c.episodes << " episodes";
        if (n_eval > 0) {
          const auto ev = evaluate_policy(res.model, *simulator, o, n_eval, c.error, c.seed + 1000003ULL);
          write_text(stem.string() + ".eval.json", ev.to_json().dump(2) + "\n");
          sum_success += ev.success_rate;
          sum_reward += ev.mean_reward;
          std::cout << ", greedy success " << fixed(100.0 * ev.success_rate, 2) << "%, mean reward "
                    << fixed(ev.mean_reward, 2) << ", mean length " << fixed(ev.mean_length, 2);
        }
        std::cout << "\n";
      }
      if (n_eval > 0 && pt_runs > 1)
        std::cout << "mean over " << pt_runs << " runs: success " << fixed(100.0 * sum_success / pt_runs, 2)
                  << "%, reward " << fixed(sum_reward / pt_runs, 2) << "\n";
    } else if (*peval) {
      const auto &o = g.ontology();
      const auto p = PolicyModel::load(pe_policy, o);
      std::shared_ptr<const GeneratorModel> keep;
      auto simulator = make_sim(pe_sim, o, &keep);
      ErrorChannelConfig err;
      err.rate = pe_err;
      const auto ev = evaluate_policy(p, *simulator, o, pe_n, err, pe_seed);
      std::cout << ev.to_json().dump(2) << "\n";
    } else if (*xrun) {
      auto m = CrossEvalManifest::load(xr_manifest);
      if (xr_threads) m.config.threads = *xr_threads;
      const Ontology &o = m.ontology ? *(g.custom = load_ontology(*m.ontology)) : g.ontology();
      const auto sims = build_simulators(m, o);
      const auto out = run_crosseval(sims, o, m.config);
      fs::path dir = xr_out;
      if (dir.empty()) dir = fs::path(xr_manifest).parent_path() / (fs::path(xr_manifest).stem().string() + "-run");
      write_run_directory(dir, m, out);
      std::cout << render_report(out.report, xr_format);
      std::cerr << "run directory: " << dir.string() << "\n";
    } else if (*xrender) {
      if (xd_report.empty() == xd_human.empty()) throw UsageError("give exactly one of --report or --human");
      if (!xd_human.empty()) {
        std::cout << render_human_report(summarize_human(load_human_results(xd_human)), xd_format);
      } else {
        std::ifstream in(xd_report);
        if (!in) throw DataError("cannot open report: " + xd_report);
        json j;
        try {
          j = json::parse(in);
        } catch (const json::exception &e) {
          throw DataError("report is not valid JSON: " + std::string(e.what()));
        }
        std::cout << render_report(CrossEvalReport::from_json(j), xd_format);
      }
    } else if (*chat) {
      const auto &o = g.ontology();
      ServedPolicy p{fs::path(ch_policy).stem().string(), PolicyModel::load(ch_policy, o)};
      UserGoal goal;
      if (!ch_goal.empty()) {
        std::ifstream in(ch_goal);
        if (!in) throw DataError("cannot open goal file: " + ch_goal);
        try {
          goal = goal_from_json(json::parse(in));
        } catch (const json::exception &e) {
          throw DataError("goal file is not valid JSON: " + std::string(e.what()));
        }
        validate_goal(goal, o);
      } else {
        Rng rng(ch_seed);
        goal = sample_goal(o, rng);
      }
      run_chat(p, o, goal, std::cin, std::cout, ch_seed);
    } else if (*serve) {
      const auto &o = g.ontology();
      std::vector<ServedPolicy> ps;
      for (const auto &path : sv_policies) ps.push_back({fs::path(path).stem().string(), PolicyModel::load(path, o)});
      ServiceConfig sc;
      sc.results_path = sv_results;
      sc.seed = sv_seed;
      EvaluationService service(o, std::move(ps), sc);
      std::optional<fs::path> stat;
      if (!sv_static.empty()) stat = sv_static;
      HttpServer server(service, stat);
      const int port = server.start(sv_host, sv_port);
      std::cout << "serving " << service.num_policies() << " policies on http://" << sv_host << ":" << port
                << "/v1 (results: " << sv_results << ")" << std::endl;
      static HttpServer *running = &server;
      std::signal(SIGINT, [](int) { running->stop(); });
      std::signal(SIGTERM, [](int) { running->stop(); });
      server.wait();
      service.abandon_all();
    }
  } catch (const UsageError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError &e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const DataError &e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
