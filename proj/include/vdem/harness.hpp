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

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vdem/actuator.hpp"
#include "vdem/goalnet/train.hpp"
#include "vdem/library.hpp"
#include "vdem/monitor.hpp"
#include "vdem/vocab_io.hpp"

namespace vdem {

// Scenarios ---------------------------------------------------------------------

struct Relocation {
  std::string object;
  std::string to;
  double p = 0.0;
};

struct Nondeterminism {
  Relocation relocate;  // the object is moved after knowledge is taken
  double p_revert = 0;  // a succeeded world action is undone (the object slips)
};

struct Scenario {
  std::string name;
  std::shared_ptr<const PlanLibrary> lib;
  Scene scene;
  TaskSpec spec;
  std::vector<State> script;  // goal order for the modes without a predictor
  bool requires_search = false;
  DetectorModel noise;
  PerceptionConfig perception;
  FailureProfile actuator;
  Nondeterminism nondeterminism;
  std::uint64_t monitor_seed = 1;
  std::uint64_t trial_seed = 1;
};

namespace detail {

inline State typed_state(const json& j, const Vocabulary& v, const std::string& what) {
  State s = state_from_json(j);
  for (const auto& a : s)
    if (auto why = v.type_violation(a); !why.empty())
      throw ScenarioLoadError(what + ": " + to_string(a) + " " + why);
  return s;
}

}  // namespace detail

/// Loads a scenario file; paths inside it are relative to the file. A
/// library already loaded for the same manifest can be shared.
inline Scenario load_scenario(const std::filesystem::path& path,
                              std::shared_ptr<const PlanLibrary> lib = nullptr) {
  try {
    json j = read_json_file(path);
    auto dir = path.parent_path();
    Scenario sc;
    sc.name = j.at("name").get<std::string>();
    if (!lib)
      lib = std::make_shared<const PlanLibrary>(
          load_library(dir / j.at("library").get<std::string>()));
    sc.lib = lib;
    const Vocabulary& v = *lib->vocabulary;
    if (j.contains("vocabulary")) {
      Vocabulary declared = load_vocabulary(dir / j.at("vocabulary").get<std::string>());
      if (declared.hash() != v.hash())
        throw ScenarioLoadError("vocabulary differs from the library's");
    }
    sc.scene = scene_from_json(read_json_file(dir / j.at("scene").get<std::string>()));
    for (const auto& o : sc.scene.objects)
      if (!v.find_term(o.label))
        throw ScenarioLoadError("scene object " + o.id + " is not a vocabulary term");
    const TaskSentence* task = v.find_task(j.at("task").get<std::string>());
    if (!task) throw ScenarioLoadError("unknown task " + j.at("task").get<std::string>());
    sc.spec.task = *task;
    sc.spec.start = detail::typed_state(j.at("start"), v, "start");
    sc.spec.goal = detail::typed_state(j.at("goal"), v, "goal");
    if (sc.spec.goal.empty()) throw ScenarioLoadError("terminal goal is empty");
    for (const auto& g : j.value("script", json::array()))
      sc.script.push_back(detail::typed_state(g, v, "script"));
    sc.requires_search = j.value("requires_search", false);
    if (j.contains("noise")) sc.noise = detector_from_json(j.at("noise"));
    if (j.contains("actuator")) sc.actuator.p_fail = j.at("actuator").value("p_fail", 0.0);
    if (j.contains("nondeterminism")) {
      const auto& n = j.at("nondeterminism");
      sc.nondeterminism.p_revert = n.value("p_revert", 0.0);
      if (n.contains("relocate")) {
        const auto& r = n.at("relocate");
        sc.nondeterminism.relocate = {r.at("object").get<std::string>(),
                                      r.at("to").get<std::string>(), r.value("p", 0.0)};
        if (!sc.scene.find_label(sc.nondeterminism.relocate.object) ||
            !sc.scene.find_label(sc.nondeterminism.relocate.to))
          throw ScenarioLoadError("relocation refers to objects missing from the scene");
      }
    }
    if (j.contains("seed")) {
      sc.monitor_seed = j.at("seed").value("monitor", std::uint64_t{1});
      sc.trial_seed = j.at("seed").value("trials", std::uint64_t{1});
    }
    return sc;
  } catch (const ScenarioLoadError&) {
    throw;
  } catch (const Error& e) {
    throw ScenarioLoadError(path.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw ScenarioLoadError(path.string() + ": " + e.what());
  }
}

inline std::vector<Scenario> load_scenarios(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  std::shared_ptr<const PlanLibrary> lib;
  for (const auto& f : files) {
    out.push_back(load_scenario(f, lib));
    lib = out.back().lib;
  }
  return out;
}

// Modes and trials ------------------------------------------------------------------

enum class Mode { Kn, M, GPr };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Kn: return "Kn";
    case Mode::M: return "M";
    case Mode::GPr: return "GPr";
  }
  return "?";
}

inline Mode mode_from_string(std::string_view s) {
  if (s == "Kn") return Mode::Kn;
  if (s == "M") return Mode::M;
  if (s == "GPr") return Mode::GPr;
  throw Error("unknown mode " + std::string(s));
}

struct AblationConfig {
  Mode mode = Mode::GPr;
  int trials = 50;
  bool nondeterministic = true;
};

/// Undoes a succeeded world action with probability p_revert, drawn from
/// (seed, action, attempt), as if the object slipped right afterwards.
class DisturbedActuator : public ActuatorInterface {
 public:
  DisturbedActuator(Scene& scene, ActuatorInterface& inner, double p_revert,
                    std::uint64_t seed)
      : scene_(scene), inner_(inner), p_(p_revert), seed_(seed) {}
  ActionOutcome execute(const GroundAction& a) override {
    Scene before = scene_;
    ActionOutcome o = inner_.execute(a);
    std::string key = to_string(a);
    std::uint64_t n = attempts_[key]++;
    if (o.succeeded && a.action_class == pddl::ActionClass::world &&
        hashed_uniform(seed_, "revert", key, n) < p_)
      scene_ = before;
    return o;
  }

 private:
  Scene& scene_;
  ActuatorInterface& inner_;
  double p_;
  std::uint64_t seed_;
  std::map<std::string, std::uint64_t> attempts_;
};

struct TrialResult {
  bool supported = true;
  bool success = false;          // monitor success and the goal truly holds
  bool monitor_success = false;
  bool relocated = false;
  int steps = 0;
  std::string reason;
  ExecutionTrace trace;
};

inline std::uint64_t trial_seed(const Scenario& sc, int trial) {
  return splitmix64(sc.trial_seed ^ fnv1a(sc.name) ^ splitmix64(static_cast<std::uint64_t>(trial)));
}

/// One trial. Trials with the same index share every random draw across
/// modes (relocation, actuator failures, slips, perception noise).
inline TrialResult run_trial(const Scenario& sc, const MonitorConfig& base_cfg,
                             const AblationConfig& mode, const goalnet::Params* net,
                             int trial) {
  TrialResult out;
  if (mode.mode == Mode::Kn && sc.requires_search) {
    out.supported = false;
    out.reason = "unsupported";
    return out;
  }
  if (mode.mode == Mode::GPr && !net) throw Error("GPr mode needs goal predictor parameters");
  std::uint64_t seed = trial_seed(sc, trial);
  MonitorConfig cfg = base_cfg;
  cfg.seed = splitmix64(seed ^ sc.monitor_seed);

  Scene scene = sc.scene;
  const Scene known = scene;  // what full world knowledge is taken from
  const Relocation& r = sc.nondeterminism.relocate;
  if (mode.nondeterministic && !r.object.empty() &&
      hashed_uniform(seed, "relocate", sc.name) < r.p) {
    detail::place_on(scene, detail::by_label(scene, r.object), detail::by_label(scene, r.to));
    out.relocated = true;
  }
  FailureProfile fp = sc.actuator;
  double p_revert = sc.nondeterminism.p_revert;
  if (!mode.nondeterministic) {
    fp.p_fail = 0;
    p_revert = 0;
  }
  SimActuator sim(scene, fp, seed);
  DisturbedActuator act(scene, sim, p_revert, seed);
  MonitorContext ctx{sc.spec, sc.lib.get(), cfg};

  switch (mode.mode) {
    case Mode::Kn: {
      BeliefVision belief(known);
      BeliefActuator informed(act, belief);
      out.trace = run_task(ctx, std::cref(belief), informed, scripted_proposer(sc.script));
      break;
    }
    case Mode::M: {
      LiveVision live(scene, sc.noise, sc.perception, cfg);
      out.trace = run_task(ctx, std::ref(live), act, scripted_proposer(sc.script));
      break;
    }
    case Mode::GPr: {
      LiveVision live(scene, sc.noise, sc.perception, cfg);
      out.trace = run_task(ctx, std::ref(live), act,
                           goalnet_proposer(*net, *sc.lib->vocabulary, sc.spec.task, cfg.k));
      break;
    }
  }
  out.monitor_success = out.trace.success;
  out.steps = out.trace.steps;
  View truth = truth_view(scene);
  bool holds = std::all_of(sc.spec.goal.begin(), sc.spec.goal.end(),
                           [&](const Atom& a) { return ground_atom(a, truth); });
  out.success = out.monitor_success && holds;
  out.reason = out.success ? "" : out.monitor_success ? "goal_not_in_world" : out.trace.reason;
  return out;
}

// Metrics ------------------------------------------------------------------------------

struct MetricsReport {
  std::string task;
  Mode mode = Mode::GPr;
  bool supported = true;
  int trials = 0;
  int successes = 0;
  double mean_steps = 0;
  std::map<std::string, int> failures;  // reason -> count
  std::uint64_t seed = 0;
  std::string config_hash;

  double rate() const { return trials ? double(successes) / trials : 0.0; }
};

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const Scenario& sc, const MonitorConfig& cfg,
                               const AblationConfig& mode, const goalnet::Params* net) {
  json j{{"scenario", sc.name},
         {"mode", to_string(mode.mode)},
         {"trials", mode.trials},
         {"nondeterministic", mode.nondeterministic},
         {"mu", cfg.mu},
         {"tau", cfg.tau},
         {"k", cfg.k},
         {"max_goals", cfg.max_goals},
         {"seed", sc.trial_seed}};
  std::uint64_t h = fnv1a(j.dump());
  if (net && mode.mode == Mode::GPr)
    for (double w : net->weights()) h = fnv1a(std::string_view(reinterpret_cast<const char*>(&w), sizeof w), h);
  return hex64(h);
}

inline MetricsReport run_scenario(const Scenario& sc, const MonitorConfig& cfg,
                                  const AblationConfig& mode,
                                  const goalnet::Params* net = nullptr) {
  if (mode.trials < 1) throw Error("trials must be at least 1");
  MetricsReport rep;
  rep.task = sc.name;
  rep.mode = mode.mode;
  rep.seed = sc.trial_seed;
  rep.config_hash = config_hash(sc, cfg, mode, net);
  if (mode.mode == Mode::Kn && sc.requires_search) {
    rep.supported = false;
    return rep;
  }
  long steps = 0;
  for (int t = 0; t < mode.trials; ++t) {
    TrialResult r = run_trial(sc, cfg, mode, net, t);
    ++rep.trials;
    steps += r.steps;
    if (r.success)
      ++rep.successes;
    else
      ++rep.failures[r.reason];
  }
  rep.mean_steps = double(steps) / rep.trials;
  return rep;
}

/// Mode ordering over one ablation: per task GPr >= M >= Kn (unsupported Kn
/// rows impose nothing), and GPr - Kn >= min_gap on at least min_tasks tasks.
struct OrderingCheck {
  bool ok = true;
  int wide_gaps = 0;
  std::vector<std::string> problems;
};

inline OrderingCheck check_ordering(const std::vector<MetricsReport>& reports,
                                    double min_gap = 0.2, int min_tasks = 3) {
  std::map<std::string, std::map<Mode, const MetricsReport*>> by_task;
  for (const auto& r : reports) by_task[r.task][r.mode] = &r;
  OrderingCheck c;
  for (const auto& [task, m] : by_task) {
    auto get = [&](Mode x) -> const MetricsReport* {
      auto it = m.find(x);
      return it == m.end() || !it->second->supported ? nullptr : it->second;
    };
    const MetricsReport *kn = get(Mode::Kn), *mm = get(Mode::M), *gp = get(Mode::GPr);
    if (gp && mm && gp->rate() < mm->rate()) c.problems.push_back(task + ": GPr < M");
    if (mm && kn && mm->rate() < kn->rate()) c.problems.push_back(task + ": M < Kn");
    if (gp && kn && gp->rate() - kn->rate() >= min_gap - 1e-12) ++c.wide_gaps;
  }
  if (c.wide_gaps < min_tasks)
    c.problems.push_back("GPr - Kn gap reached on " + std::to_string(c.wide_gaps) + " tasks");
  c.ok = c.problems.empty();
  return c;
}

// Reports ------------------------------------------------------------------------------

namespace detail {

inline std::string fixed(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

}  // namespace detail

inline std::string report_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "task,mode,supported,trials,successes,success_rate,mean_steps,seed,config_hash\n";
  for (const auto& r : reports) {
    out += r.task + "," + std::string(to_string(r.mode)) + "," +
           (r.supported ? "yes" : "no") + "," + std::to_string(r.trials) + "," +
           std::to_string(r.successes) + "," +
           (r.supported ? detail::fixed(r.rate()) : "") + "," +
           (r.supported ? detail::fixed(r.mean_steps, 2) : "") + "," +
           std::to_string(r.seed) + "," + r.config_hash + "\n";
  }
  return out;
}

inline json report_json(const std::vector<MetricsReport>& reports) {
  json rows = json::array();
  for (const auto& r : reports) {
    json row{{"task", r.task},
             {"mode", to_string(r.mode)},
             {"supported", r.supported},
             {"trials", r.trials},
             {"successes", r.successes},
             {"seed", r.seed},
             {"config_hash", r.config_hash}};
    if (r.supported) {
      row["success_rate"] = detail::fixed(r.rate());
      row["mean_steps"] = detail::fixed(r.mean_steps, 2);
      row["failures"] = r.failures;
    }
    rows.push_back(row);
  }
  return {{"reports", rows}};
}

/// Writes metrics.csv and metrics.json into `dir`.
inline void emit_report(const std::vector<MetricsReport>& reports,
                        const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "metrics.csv", report_csv(reports));
  write_text_file(dir / "metrics.json", report_json(reports).dump(1) + "\n");
}

// Accuracy curve --------------------------------------------------------------------------

struct CurveRow {
  std::size_t atoms = 0;
  int n = 0;
  double top1 = 0, top3 = 0;
  bool empty() const { return n == 0; }
};

/// Exact-match accuracy per input atom count; counts without test pairs are
/// reported as empty rows.
inline std::vector<CurveRow> eval_curve(const goalnet::Params& net, const Vocabulary& v,
                                        const std::vector<goalnet::TrainingPair>& test,
                                        std::size_t max_atoms = 19) {
  auto pts = goalnet::evaluate_curve(net, v, test, 3);
  std::vector<CurveRow> out;
  for (std::size_t n = 1; n <= max_atoms; ++n) {
    CurveRow row;
    row.atoms = n;
    if (auto it = pts.find(n); it != pts.end()) {
      row.n = it->second.n;
      row.top1 = it->second.acc1();
      row.top3 = it->second.acc3();
    }
    out.push_back(row);
  }
  return out;
}

inline std::string curve_csv(const std::vector<CurveRow>& rows) {
  std::string out = "atoms,pairs,top1,top3\n";
  for (const auto& r : rows)
    out += std::to_string(r.atoms) + "," + std::to_string(r.n) + "," +
           (r.empty() ? "" : detail::fixed(r.top1)) + "," +
           (r.empty() ? "" : detail::fixed(r.top3)) + "\n";
  return out;
}

}  // namespace vdem
