// Copyright 2026 The VDEM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line entry point. Every subcommand writes its results under --out;
// nothing written depends on wall-clock time, so equal seeds give equal bytes.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vdem/goalnet/train.hpp"
#include "vdem/harness.hpp"
#include "vdem/library.hpp"
#include "vdem/planner.hpp"
#include "vdem/vocab_io.hpp"

namespace fs = std::filesystem;
using namespace vdem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitLoad = 2;
constexpr int kExitThreshold = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Settings: built-in defaults, then --config, then explicit flags.
struct Settings {
  std::uint64_t seed = 1;
  fs::path out = "out";
  fs::path data = VDEM_DATA_DIR;
  MonitorConfig monitor;
  goalnet::Hyper hyper;
  std::size_t pairs = 20000;
  std::size_t max_atoms = 19;
  bool attention = true;
  int trials = 50;
  bool nondeterministic = true;
};

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void apply_config(const fs::path& file, Settings& s) {
  json j = read_json_file(file);
  if (j.contains("data_dir")) {
    fs::path d = j.at("data_dir").get<std::string>();
    s.data = d.is_absolute() ? d : file.parent_path() / d;
  }
  take(j, "seed", s.seed);
  if (j.contains("monitor")) {
    const auto& m = j.at("monitor");
    take(m, "mu", s.monitor.mu);
    take(m, "tau", s.monitor.tau);
    take(m, "k", s.monitor.k);
    take(m, "max_goals", s.monitor.max_goals);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    take(t, "epochs", s.hyper.epochs);
    take(t, "batch", s.hyper.batch);
    take(t, "lr", s.hyper.lr);
    take(t, "clip", s.hyper.clip);
    take(t, "pairs", s.pairs);
    take(t, "max_atoms", s.max_atoms);
    take(t, "attention", s.attention);
  }
  if (j.contains("ablate")) {
    const auto& a = j.at("ablate");
    take(a, "trials", s.trials);
    take(a, "nondeterministic", s.nondeterministic);
  }
}

void write_out(const Settings& s, const std::string& name, const std::string& text) {
  std::error_code ec;
  fs::create_directories(s.out, ec);
  if (ec) throw IoError("cannot create " + s.out.string() + ": " + ec.message());
  write_text_file(s.out / name, text);
  std::cout << "wrote " << (s.out / name).string() << "\n";
}

PlanLibrary library(const Settings& s) { return load_library(s.data / "library.json"); }

State typed(const std::string& text, const Vocabulary& v) {
  State st = parse_state(text);
  for (const auto& a : st)
    if (auto why = v.type_violation(a); !why.empty())
      throw UsageError(to_string(a) + " " + why);
  return st;
}

std::vector<goalnet::TrainingPair> corpus(const Settings& s, const PlanLibrary& lib,
                                          const std::string& data_file, std::uint64_t seed) {
  if (!data_file.empty()) return goalnet::load_dataset(data_file, *lib.vocabulary);
  goalnet::GrowOptions go;
  go.max_atoms = s.max_atoms;
  return goalnet::grow_dataset(lib, s.pairs, seed, go);
}

goalnet::Params checkpoint(const Settings& s, const std::string& file, const Vocabulary& v) {
  return goalnet::load_checkpoint(file.empty() ? s.data / "goalnet.json" : fs::path(file), v);
}

// Subcommands -----------------------------------------------------------------------------

int vocab_check(const Settings& s, const std::string& file) {
  Vocabulary v = load_vocabulary(file.empty() ? s.data / "vocab.json" : fs::path(file));
  std::size_t typed_atoms = filter_by_types(herbrand_universe(v), v).size();
  json j{{"sorts", v.sorts().size()},
         {"terms", v.terms().size()},
         {"predicates", v.predicates().size()},
         {"tasks", v.tasks().size()},
         {"tokens", v.size()},
         {"herbrand_atoms", herbrand_count(v)},
         {"type_valid_atoms", typed_atoms},
         {"hash", hex64(v.hash())}};
  std::cout << j.dump(1) << "\n";
  write_out(s, "vocab.json", j.dump(1) + "\n");
  return kExitOk;
}

int lib_validate(const Settings& s) {
  PlanLibrary lib = library(s);
  auto violations = validate_library(lib);
  json rows = json::array();
  for (const auto& x : violations) {
    rows.push_back({{"entry", x.entry}, {"kind", x.kind}, {"detail", x.detail}});
    std::cout << "warning: " << x.entry << ": " << x.kind << ": " << x.detail << "\n";
  }
  std::cout << lib.entries.size() << " entries, " << lib.chains.size() << " chains, "
            << violations.size() << " violations\n";
  write_out(s, "violations.json", json{{"violations", rows}}.dump(1) + "\n");
  return kExitOk;
}

int plan_cmd(const Settings& s, const std::string& entry) {
  PlanLibrary lib = library(s);
  std::vector<const PlanEntry*> which;
  for (const auto& e : lib.entries)
    if (entry.empty() || e.name == entry) which.push_back(&e);
  if (which.empty()) throw UsageError("no library entry named " + entry);
  std::ostringstream os;
  for (const PlanEntry* e : which) {
    SolvedPlan p = plan(*e);
    os << e->name << " length " << p.steps.size() << " world " << p.world_actions()
       << " goal " << to_string(e->goal_state) << "\n";
    for (std::size_t i = 0; i < p.steps.size(); ++i)
      os << "  " << i + 1 << " " << to_string(p.steps[i]) << "\n";
  }
  std::cout << os.str();
  write_out(s, "plans.txt", os.str());
  return kExitOk;
}

int match_cmd(const Settings& s, const std::string& goal) {
  PlanLibrary lib = library(s);
  State g = typed(goal, *lib.vocabulary);
  std::ostringstream os;
  try {
    MatchScore m = match_plan(lib, g);
    os << "entry " << m.entry_name << " overlap " << m.overlap << "\n";
    for (const auto& [from, to] : m.substitution) os << "  " << from << " -> " << to << "\n";
  } catch (const NoMatch& e) {
    os << "no match: " << e.what() << "\n";
  }
  std::cout << os.str();
  write_out(s, "match.txt", os.str());
  return kExitOk;
}

int datagen(const Settings& s) {
  PlanLibrary lib = library(s);
  auto pairs = corpus(s, lib, "", s.seed);
  write_out(s, "dataset.tsv", goalnet::dataset_to_tsv(pairs, *lib.vocabulary));
  return kExitOk;
}

int train_cmd(const Settings& s, const std::string& data_file) {
  PlanLibrary lib = library(s);
  auto pairs = corpus(s, lib, data_file, s.seed);
  goalnet::GoalNetConfig cfg;
  cfg.attention = s.attention;
  std::string losses = "epoch,loss\n";
  auto r = goalnet::train(pairs, *lib.vocabulary, cfg, s.hyper, s.seed, [&](int e, double l) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d,%.6f\n", e + 1, l);
    losses += buf;
    std::cerr << "epoch " << e + 1 << " loss " << l << "\n";
  });
  write_out(s, "loss.csv", losses);
  write_out(s, "goalnet.json", goalnet::checkpoint_to_json(r.params).dump() + "\n");
  return kExitOk;
}

int gradcheck_cmd(const Settings& s, bool mutate, double tol) {
  PlanLibrary lib = library(s);
  auto base = goalnet::base_pairs(lib);
  if (base.empty()) throw InsufficientBase();
  goalnet::GoalNetConfig cfg;
  cfg.attention = s.attention;
  auto p = goalnet::Params::for_vocabulary(cfg, *lib.vocabulary);
  p.init_uniform(s.seed);
  const auto& sample = base[s.seed % base.size()];
  auto rep = goalnet::grad_check(p, sample, *lib.vocabulary, 1e-5, 12, s.seed,
                                 mutate ? goalnet::GradMutation::attention_softmax
                                        : goalnet::GradMutation::none);
  json j{{"max_rel_error", rep.max_rel_error},
         {"checked", rep.checked},
         {"by_group", rep.by_group},
         {"mutation", mutate}};
  std::cout << j.dump(1) << "\n";
  write_out(s, "gradcheck.json", j.dump(1) + "\n");
  // A mutated gradient must be caught; a correct one must pass.
  bool ok = mutate ? rep.max_rel_error > 1e-2 : rep.max_rel_error < tol;
  return ok ? kExitOk : kExitThreshold;
}

int eval_curve_cmd(const Settings& s, const std::string& ckpt, const std::string& data_file) {
  PlanLibrary lib = library(s);
  auto net = checkpoint(s, ckpt, *lib.vocabulary);
  auto test = corpus(s, lib, data_file, s.seed);
  auto rows = eval_curve(net, *lib.vocabulary, test, s.max_atoms);
  for (const auto& r : rows)
    if (r.empty()) std::cerr << "empty bucket: " << r.atoms << " atoms\n";
  write_out(s, "curve.csv", curve_csv(rows));
  return kExitOk;
}

std::vector<Scenario> scenarios(const Settings& s, const std::string& which) {
  if (which.empty()) return load_scenarios(s.data / "scenarios");
  fs::path p = which;
  if (!fs::exists(p)) p = s.data / "scenarios" / (which + ".json");
  if (!fs::exists(p)) throw ScenarioLoadError("no scenario " + which);
  return {load_scenario(p)};
}

std::optional<goalnet::Params> maybe_net(const Settings& s, const std::string& ckpt,
                                         const Vocabulary& v, bool needed) {
  if (!needed) return std::nullopt;
  return checkpoint(s, ckpt, v);
}

AblationConfig ablation(const Settings& s, Mode m) {
  AblationConfig a;
  a.mode = m;
  a.trials = s.trials;
  a.nondeterministic = s.nondeterministic;
  if (a.trials < 1) throw UsageError("trials must be at least 1");
  return a;
}

MonitorConfig monitor_cfg(const Settings& s) {
  MonitorConfig c = s.monitor;
  c.seed = s.seed;
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

// Scenario seeds are taken from --seed when it is given explicitly.
void reseed(std::vector<Scenario>& scs, const std::optional<std::uint64_t>& seed) {
  if (seed)
    for (auto& sc : scs) sc.trial_seed = *seed;
}

int run_cmd(const Settings& s, const std::optional<std::uint64_t>& seed,
            const std::string& which, const std::string& mode, const std::string& ckpt) {
  auto scs = scenarios(s, which.empty() ? "bring_brush" : which);
  reseed(scs, seed);
  Scenario& sc = scs.front();
  Mode m = mode_from_string(mode);
  auto net = maybe_net(s, ckpt, *sc.lib->vocabulary, m == Mode::GPr);
  AblationConfig a = ablation(s, m);
  MonitorConfig cfg = monitor_cfg(s);
  std::ostringstream traces;
  MetricsReport rep;
  rep.task = sc.name;
  rep.mode = m;
  rep.seed = sc.trial_seed;
  rep.config_hash = config_hash(sc, cfg, a, net ? &*net : nullptr);
  long steps = 0;
  if (m == Mode::Kn && sc.requires_search) {
    rep.supported = false;
  } else {
    for (int t = 0; t < a.trials; ++t) {
      TrialResult r = run_trial(sc, cfg, a, net ? &*net : nullptr, t);
      write_trace_jsonl(traces, r.trace);
      ++rep.trials;
      steps += r.steps;
      if (r.success)
        ++rep.successes;
      else
        ++rep.failures[r.reason];
    }
    rep.mean_steps = double(steps) / rep.trials;
  }
  std::cout << report_csv({rep});
  write_out(s, "trace.jsonl", traces.str());
  emit_report({rep}, s.out);
  return kExitOk;
}

int ablate_cmd(const Settings& s, const std::optional<std::uint64_t>& seed,
               const std::string& ckpt, bool gate) {
  auto scs = scenarios(s, "");
  reseed(scs, seed);
  if (scs.empty()) throw ScenarioLoadError("no scenarios found");
  auto net = checkpoint(s, ckpt, *scs.front().lib->vocabulary);
  MonitorConfig cfg = monitor_cfg(s);
  std::vector<MetricsReport> reports;
  for (const auto& sc : scs)
    for (Mode m : {Mode::Kn, Mode::M, Mode::GPr}) {
      reports.push_back(run_scenario(sc, cfg, ablation(s, m), &net));
      std::cerr << sc.name << " " << to_string(m) << " done\n";
    }
  std::cout << report_csv(reports);
  emit_report(reports, s.out);
  std::cout << "wrote " << (s.out / "metrics.csv").string() << "\n";
  if (!gate) return kExitOk;
  OrderingCheck c = check_ordering(reports);
  for (const auto& p : c.problems) std::cout << "ordering: " << p << "\n";
  return c.ok ? kExitOk : kExitThreshold;
}

// Rebuilds the success table from metrics.json files: one row per task, one
// column per mode.
int report_cmd(const Settings& s, const std::vector<std::string>& inputs) {
  std::map<std::string, std::map<std::string, std::string>> table;
  std::set<std::string> modes;
  for (const auto& in : inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "metrics.json";
    json j = read_json_file(p);
    for (const auto& r : j.at("reports")) {
      std::string mode = r.at("mode").get<std::string>();
      modes.insert(mode);
      table[r.at("task").get<std::string>()][mode] =
          r.at("supported").get<bool>() ? r.at("success_rate").get<std::string>() : "-";
    }
  }
  std::vector<std::string> order;
  for (const char* m : {"Kn", "M", "GPr"})
    if (modes.count(m)) order.push_back(m);
  std::string csv = "task";
  for (const auto& m : order) csv += "," + m;
  csv += "\n";
  for (const auto& [task, row] : table) {
    csv += task;
    for (const auto& m : order) {
      auto it = row.find(m);
      csv += "," + (it == row.end() ? std::string() : it->second);
    }
    csv += "\n";
  }
  std::cout << csv;
  write_out(s, "table.csv", csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vision-grounded execution monitor"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  std::string config, out = "out", data;
  auto* seed_opt = app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--config", config, "JSON settings file")->check(CLI::ExistingFile);
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_option("--data-dir", data, "data directory (vocabulary, library, scenarios)");
  app.fallthrough();

  // Flags shared by several subcommands; applied over the config file.
  std::optional<int> epochs, batch, trials, tau, k, max_goals;
  std::optional<double> lr, mu;
  std::optional<std::size_t> pairs, max_atoms;
  bool no_attention = false, benign = false;

  auto* vocab = app.add_subcommand("vocab", "vocabulary tools");
  vocab->require_subcommand(1);
  std::string vocab_file;
  auto* vocab_check_cmd = vocab->add_subcommand("check", "load and summarize a vocabulary");
  vocab_check_cmd->add_option("file", vocab_file, "vocabulary JSON");

  auto* lib = app.add_subcommand("lib", "plan library tools");
  lib->require_subcommand(1);
  auto* lib_validate_cmd = lib->add_subcommand("validate", "report library violations");

  std::string entry;
  auto* plan_sub = app.add_subcommand("plan", "solve library entries");
  plan_sub->add_option("entry", entry, "entry name (all when omitted)");

  std::string goal;
  auto* match_sub = app.add_subcommand("match", "best library entry for a goal state");
  match_sub->add_option("goal", goal, "state, e.g. \"On(brush, table) Detected(brush)\"")
      ->required();

  auto* datagen_sub = app.add_subcommand("datagen", "grow the training corpus");
  datagen_sub->add_option("--pairs", pairs, "corpus size");
  datagen_sub->add_option("--max-atoms", max_atoms, "longest input state");

  std::string data_file, ckpt;
  auto* train_sub = app.add_subcommand("train", "train the goal predictor");
  train_sub->add_option("--data", data_file, "dataset TSV (generated when omitted)");
  train_sub->add_option("--pairs", pairs, "generated corpus size");
  train_sub->add_option("--max-atoms", max_atoms, "longest input state");
  train_sub->add_option("--epochs", epochs, "epochs");
  train_sub->add_option("--batch", batch, "batch size");
  train_sub->add_option("--lr", lr, "Adam learning rate");
  train_sub->add_flag("--no-attention", no_attention, "mean context instead of attention");

  bool mutate = false;
  double tol = 1e-4;
  auto* grad_sub = app.add_subcommand("gradcheck", "finite-difference gradient check");
  grad_sub->add_flag("--mutate", mutate, "corrupt the attention gradient");
  grad_sub->add_flag("--no-attention", no_attention, "mean context instead of attention");
  grad_sub->add_option("--tol", tol, "largest accepted relative error")->capture_default_str();

  auto* curve_sub = app.add_subcommand("eval-curve", "accuracy by input atom count");
  curve_sub->add_option("--checkpoint", ckpt, "goal predictor checkpoint");
  curve_sub->add_option("--data", data_file, "test TSV (generated when omitted)");
  curve_sub->add_option("--pairs", pairs, "generated test size");
  curve_sub->add_option("--max-atoms", max_atoms, "longest input state");

  std::string scenario, mode = "GPr";
  auto* run_sub = app.add_subcommand("run", "run one scenario in one mode");
  run_sub->add_option("scenario", scenario, "scenario name or file")->capture_default_str();
  run_sub->add_option("--mode", mode, "Kn, M or GPr")
      ->check(CLI::IsMember({"Kn", "M", "GPr"}))
      ->capture_default_str();
  run_sub->add_option("--trials", trials, "trials");
  run_sub->add_option("--checkpoint", ckpt, "goal predictor checkpoint");
  run_sub->add_flag("--benign", benign, "no relocations, slips or actuator failures");

  bool gate = false;
  auto* ablate_sub = app.add_subcommand("ablate", "all scenarios in all modes");
  ablate_sub->add_option("--trials", trials, "trials per scenario and mode");
  ablate_sub->add_option("--checkpoint", ckpt, "goal predictor checkpoint");
  ablate_sub->add_flag("--benign", benign, "no relocations, slips or actuator failures");
  ablate_sub->add_flag("--gate", gate, "exit 3 unless the mode ordering holds");

  std::vector<std::string> inputs;
  auto* report_sub = app.add_subcommand("report", "tabulate metrics.json files");
  report_sub->add_option("inputs", inputs, "metrics.json files or directories")->required();

  for (auto* sub : {run_sub, ablate_sub}) {
    sub->add_option("--mu", mu, "detection confidence threshold");
    sub->add_option("--tau", tau, "search steps per query");
    sub->add_option("--k", k, "proposals per request");
    sub->add_option("--max-goals", max_goals, "goal attempts per run");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Settings s;
    if (!config.empty()) apply_config(config, s);
    if (seed_opt->count()) s.seed = seed;
    s.out = out;
    if (!data.empty()) s.data = data;
    if (epochs) s.hyper.epochs = *epochs;
    if (batch) s.hyper.batch = *batch;
    if (lr) s.hyper.lr = *lr;
    if (pairs) s.pairs = *pairs;
    if (max_atoms) s.max_atoms = *max_atoms;
    if (no_attention) s.attention = false;
    if (trials) s.trials = *trials;
    if (benign) s.nondeterministic = false;
    if (mu) s.monitor.mu = *mu;
    if (tau) s.monitor.tau = *tau;
    if (k) s.monitor.k = *k;
    if (max_goals) s.monitor.max_goals = *max_goals;
    std::optional<std::uint64_t> explicit_seed;
    if (seed_opt->count() || !config.empty()) explicit_seed = s.seed;

    if (*vocab_check_cmd) return vocab_check(s, vocab_file);
    if (*lib_validate_cmd) return lib_validate(s);
    if (*plan_sub) return plan_cmd(s, entry);
    if (*match_sub) return match_cmd(s, goal);
    if (*datagen_sub) return datagen(s);
    if (*train_sub) return train_cmd(s, data_file);
    if (*grad_sub) return gradcheck_cmd(s, mutate, tol);
    if (*curve_sub) return eval_curve_cmd(s, ckpt, data_file);
    if (*run_sub) return run_cmd(s, explicit_seed, scenario, mode, ckpt);
    if (*ablate_sub) return ablate_cmd(s, explicit_seed, ckpt, gate);
    if (*report_sub) return report_cmd(s, inputs);
  } catch (const UsageError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return kExitUsage;
  } catch (const AtomSyntaxError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitLoad;
  }
  return kExitUsage;
}
