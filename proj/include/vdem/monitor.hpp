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
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "vdem/actuator.hpp"
#include "vdem/goalnet/model.hpp"
#include "vdem/perception.hpp"
#include "vdem/planner.hpp"

namespace vdem {

using goalnet::GoalProposal;

struct MonitorConfig {
  double mu = 0.7;       // detection confidence threshold
  int tau = 6;           // search steps per vision query
  int k = 3;             // proposals retained per request
  int max_goals = 12;    // goal attempts per run, recoveries included
  std::uint64_t seed = 0;

  void validate() const {
    if (!(mu > 0 && mu < 1)) throw Error("mu must lie in (0, 1)");
    if (tau < 1) throw Error("tau must be at least 1");
    if (k < 1) throw Error("k must be at least 1");
    if (max_goals < 1) throw Error("max_goals must be at least 1");
  }
};

/// What the loop is asked to achieve: a task, its verifiable start state and
/// the terminal goal that ends it.
struct TaskSpec {
  TaskSentence task;
  State start;
  State goal;
};

// Events ------------------------------------------------------------------------

enum class EventKind {
  vision_query,
  vision_result,
  action_dispatch,
  action_result,
  goal_reached,
  proposal_requested,
  proposal_selected,
  recovery,
  end_task
};

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::vision_query: return "vision_query";
    case EventKind::vision_result: return "vision_result";
    case EventKind::action_dispatch: return "action_dispatch";
    case EventKind::action_result: return "action_result";
    case EventKind::goal_reached: return "goal_reached";
    case EventKind::proposal_requested: return "proposal_requested";
    case EventKind::proposal_selected: return "proposal_selected";
    case EventKind::recovery: return "recovery";
    case EventKind::end_task: return "end_task";
  }
  return "?";
}

struct MonitorEvent {
  int t = 0;
  EventKind kind = EventKind::end_task;
  json payload = json::object();
  friend bool operator==(const MonitorEvent&, const MonitorEvent&) = default;
};

struct GoalAttempt {
  State goal;
  int rank = 0;
  std::string entry;
  bool reached = false;
  friend bool operator==(const GoalAttempt&, const GoalAttempt&) = default;
};

struct ExecutionTrace {
  std::string task;
  std::vector<MonitorEvent> events;
  bool success = false;
  std::string reason;  // failure reason; empty on success
  std::vector<GoalAttempt> goals;
  int steps = 0;       // loop transitions
  friend bool operator==(const ExecutionTrace&, const ExecutionTrace&) = default;
};

// Loop state -----------------------------------------------------------------------

enum class Phase {
  verify_start,
  propose,
  verify_pre,
  act,
  verify_effect,
  verify_goal,
  verify_terminal,
  done
};

struct ActiveGoal {
  GoalProposal proposal;
  PlanEntry entry;      // instantiated for the proposal
  SolvedPlan plan;
  std::size_t next = 0; // index of the next plan step
  State symbolic;       // entry init advanced by the steps executed so far
  bool replanned = false;
};

struct LoopState {
  Phase phase = Phase::verify_start;
  State current;                       // last verified state
  std::vector<GoalProposal> proposals; // answer to the last request
  std::vector<int> tried_ranks;        // from `proposals`
  std::vector<State> failed_goals;
  std::vector<State> reached_goals;
  std::optional<ActiveGoal> active;
  int goals_attempted = 0;
  int t = 0;                           // next event timestamp
  int steps = 0;
  bool success = false;
  std::string reason;
  std::vector<GoalAttempt> attempts;
};

/// What the loop needs next from the outside world.
struct Request {
  enum class Kind { vision, act, propose, none } kind = Kind::none;
  State state;            // vision: conjunction to verify; propose: input state
  std::string purpose;    // vision: start | precondition | effect | goal | terminal
  GroundAction action;    // act
};

/// The injected answer to a Request.
struct Observation {
  std::optional<bool> vision;
  std::string vision_reason;  // "timeout" | "relation" when false
  std::optional<ActionOutcome> action;
  std::optional<std::vector<GoalProposal>> proposals;
};

struct MonitorContext {
  TaskSpec spec;
  const PlanLibrary* lib = nullptr;
  MonitorConfig cfg;
};

inline Request next_request(const MonitorContext& ctx, const LoopState& s) {
  Request r;
  auto vision = [&](State st, std::string purpose) {
    r.kind = Request::Kind::vision;
    r.state = std::move(st);
    r.purpose = std::move(purpose);
    return r;
  };
  switch (s.phase) {
    case Phase::verify_start: return vision(ctx.spec.start, "start");
    case Phase::propose:
      r.kind = Request::Kind::propose;
      r.state = s.current;
      return r;
    case Phase::verify_pre:
      return vision(s.active->plan.expected_pre[s.active->next], "precondition");
    case Phase::act:
      r.kind = Request::Kind::act;
      r.action = s.active->plan.steps[s.active->next];
      return r;
    case Phase::verify_effect:
      return vision(s.active->plan.expected_effect[s.active->next], "effect");
    case Phase::verify_goal: return vision(s.active->entry.goal_state, "goal");
    case Phase::verify_terminal: return vision(ctx.spec.goal, "terminal");
    case Phase::done: return r;
  }
  return r;
}

// Recovery ----------------------------------------------------------------------------

/// Instantiates and solves the library entry that best matches `goal`.
inline std::optional<ActiveGoal> activate(const PlanLibrary& lib, const GoalProposal& p) {
  try {
    MatchScore m = match_plan(lib, p.goal);
    if (m.overlap == 0) return std::nullopt;
    ActiveGoal a;
    a.proposal = p;
    a.entry = instantiate(lib.entries[m.entry], m.substitution);
    a.plan = plan(a.entry);
    a.symbolic = a.entry.problem.init;
    return a;
  } catch (const NoMatch&) {
    return std::nullopt;
  } catch (const NoPlan&) {
    return std::nullopt;
  } catch (const BudgetExceeded&) {
    return std::nullopt;
  }
}

/// The lowest-ranked remaining proposal that resolves to a library plan and is
/// neither `failed` nor a goal that already failed in this run.
inline std::optional<ActiveGoal> recover(const std::optional<State>& failed,
                                         const std::vector<GoalProposal>& remaining,
                                         const PlanLibrary& lib,
                                         const std::vector<State>& failed_before = {}) {
  std::vector<const GoalProposal*> order;
  for (const auto& p : remaining) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(),
                   [](const GoalProposal* a, const GoalProposal* b) { return a->rank < b->rank; });
  for (const GoalProposal* p : order) {
    if (failed && p->goal == *failed) continue;
    if (std::find(failed_before.begin(), failed_before.end(), p->goal) != failed_before.end())
      continue;
    if (auto a = activate(lib, *p)) return a;
  }
  return std::nullopt;
}

// One transition -------------------------------------------------------------------------

struct StepResult {
  LoopState state;
  std::vector<MonitorEvent> events;
};

namespace detail {

class Emitter {
 public:
  explicit Emitter(LoopState& s) : s_(s) {}
  void operator()(EventKind k, json payload = json::object()) {
    events.push_back({s_.t++, k, std::move(payload)});
  }
  std::vector<MonitorEvent> events;

 private:
  LoopState& s_;
};

inline void finish(LoopState& s, Emitter& emit, bool success, std::string reason) {
  s.phase = Phase::done;
  s.success = success;
  s.reason = std::move(reason);
  s.active.reset();
  emit(EventKind::end_task,
       {{"outcome", success ? "success" : "failure"}, {"reason", s.reason}});
}

inline json goal_json(const GoalProposal& p, const ActiveGoal& a) {
  return {{"rank", p.rank},
          {"goal", to_string(p.goal)},
          {"entry", a.entry.name},
          {"plan_length", a.plan.steps.size()}};
}

inline void start_goal(LoopState& s, Emitter& emit, ActiveGoal a) {
  ++s.goals_attempted;
  s.tried_ranks.push_back(a.proposal.rank);
  s.attempts.push_back({a.proposal.goal, a.proposal.rank, a.entry.name, false});
  s.phase = a.plan.steps.empty() ? Phase::verify_goal : Phase::verify_pre;
  s.active = std::move(a);
  (void)emit;
}

inline std::vector<GoalProposal> untried(const LoopState& s) {
  std::vector<GoalProposal> out;
  for (const auto& p : s.proposals)
    if (std::find(s.tried_ranks.begin(), s.tried_ranks.end(), p.rank) == s.tried_ranks.end())
      out.push_back(p);
  return out;
}

inline void goal_failed(const MonitorContext& ctx, LoopState& s, Emitter& emit,
                        const std::string& reason) {
  State failed = s.active->proposal.goal;
  s.failed_goals.push_back(failed);
  s.active.reset();
  std::optional<ActiveGoal> next;
  if (s.goals_attempted < ctx.cfg.max_goals)
    next = recover(failed, untried(s), *ctx.lib, s.failed_goals);
  json payload{{"failed_goal", to_string(failed)}, {"cause", reason}};
  payload["selected_rank"] = next ? json(next->proposal.rank) : json(nullptr);
  emit(EventKind::recovery, payload);
  if (!next) {
    finish(s, emit, false,
           s.goals_attempted >= ctx.cfg.max_goals ? "max_goals" : reason);
    return;
  }
  emit(EventKind::proposal_selected, goal_json(next->proposal, *next));
  start_goal(s, emit, std::move(*next));
}

/// Re-plans the active entry from its symbolic state once; false when the
/// allowance is spent or no plan exists.
inline bool replan(LoopState& s) {
  ActiveGoal& a = *s.active;
  if (a.replanned) return false;
  a.replanned = true;
  pddl::PlanProblem p = a.entry.problem;
  p.init = a.symbolic;
  try {
    SolvedPlan np = plan(*a.entry.domain, p);
    np.entry = a.entry.name;
    a.plan = std::move(np);
    a.next = 0;
    s.phase = a.plan.steps.empty() ? Phase::verify_goal : Phase::verify_pre;
    return true;
  } catch (const Error&) {
    return false;
  }
}

inline std::string vision_cause(const Observation& o) {
  return o.vision_reason == "timeout" ? "vision_timeout" : "vision_relation";
}

inline bool terminal_covered(const State& goal, const std::vector<State>& reached) {
  for (const auto& a : goal) {
    bool seen = false;
    for (const auto& r : reached) seen = seen || r.contains(a);
    if (!seen) return false;
  }
  return true;
}

}  // namespace detail

/// Performs exactly one branch of the loop, consuming the observation that
/// answers next_request(ctx, s). Pure: equal inputs give equal outputs.
inline StepResult step(const MonitorContext& ctx, LoopState s, const Observation& obs) {
  using detail::Emitter;
  Emitter emit(s);
  Request req = next_request(ctx, s);
  ++s.steps;
  auto need = [](bool present, const char* what) {
    if (!present) throw Error(std::string("step expects ") + what);
  };

  if (req.kind == Request::Kind::vision) {
    need(obs.vision.has_value(), "a vision result");
    json q{{"purpose", req.purpose}, {"state", to_string(req.state)}};
    if (s.active && (s.phase == Phase::verify_pre || s.phase == Phase::verify_effect))
      q["action"] = to_string(s.active->plan.steps[s.active->next]);
    emit(EventKind::vision_query, q);
    json r{{"purpose", req.purpose}, {"ok", *obs.vision}};
    if (!*obs.vision) r["reason"] = obs.vision_reason;
    emit(EventKind::vision_result, r);
  }

  switch (s.phase) {
    case Phase::verify_start:
      if (!*obs.vision) {
        detail::finish(s, emit, false, "start_not_verified");
      } else {
        s.current = ctx.spec.start;
        s.phase = Phase::propose;
        emit(EventKind::proposal_requested, {{"input", to_string(s.current)}});
      }
      break;

    case Phase::propose: {
      need(obs.proposals.has_value(), "proposals");
      s.proposals = *obs.proposals;
      s.tried_ranks.clear();
      std::optional<ActiveGoal> a;
      if (s.goals_attempted < ctx.cfg.max_goals)
        a = recover(std::nullopt, s.proposals, *ctx.lib, s.failed_goals);
      if (!a) {
        detail::finish(s, emit, false,
                       s.goals_attempted >= ctx.cfg.max_goals ? "max_goals" : "no_proposal");
        break;
      }
      emit(EventKind::proposal_selected, detail::goal_json(a->proposal, *a));
      detail::start_goal(s, emit, std::move(*a));
      break;
    }

    case Phase::verify_pre:
      if (*obs.vision) {
        s.phase = Phase::act;
      } else if (!detail::replan(s)) {
        detail::goal_failed(ctx, s, emit, detail::vision_cause(obs));
      }
      break;

    case Phase::act: {
      need(obs.action.has_value(), "an action outcome");
      emit(EventKind::action_dispatch, {{"action", to_string(req.action)}});
      json r{{"action", to_string(req.action)}, {"ok", obs.action->succeeded}};
      if (!obs.action->succeeded) r["reason"] = obs.action->reason;
      if (obs.action->succeeded) {
        emit(EventKind::action_result, r);
        s.phase = Phase::verify_effect;
      } else {
        bool re = detail::replan(s);
        r["replanned"] = re;
        emit(EventKind::action_result, r);
        if (!re) detail::goal_failed(ctx, s, emit, "actuator");
      }
      break;
    }

    case Phase::verify_effect:
      if (*obs.vision) {
        ActiveGoal& a = *s.active;
        a.symbolic = apply(a.symbolic, a.plan.steps[a.next]);
        ++a.next;
        s.phase = a.next == a.plan.steps.size() ? Phase::verify_goal : Phase::verify_pre;
      } else if (!detail::replan(s)) {
        detail::goal_failed(ctx, s, emit, detail::vision_cause(obs));
      }
      break;

    case Phase::verify_goal:
      if (!*obs.vision) {
        detail::goal_failed(ctx, s, emit, detail::vision_cause(obs));
        break;
      }
      {
        const ActiveGoal& a = *s.active;
        s.current = a.entry.goal_state;
        s.reached_goals.push_back(s.current);
        s.attempts.back().reached = true;
        emit(EventKind::goal_reached, {{"rank", a.proposal.rank},
                                       {"goal", to_string(a.entry.goal_state)}});
        s.active.reset();
      }
      if (ctx.spec.goal.subset_of(s.current)) {
        detail::finish(s, emit, true, "");
      } else if (detail::terminal_covered(ctx.spec.goal, s.reached_goals)) {
        s.phase = Phase::verify_terminal;
      } else {
        s.phase = Phase::propose;
        emit(EventKind::proposal_requested, {{"input", to_string(s.current)}});
      }
      break;

    case Phase::verify_terminal:
      if (*obs.vision) {
        detail::finish(s, emit, true, "");
      } else {
        s.phase = Phase::propose;
        emit(EventKind::proposal_requested, {{"input", to_string(s.current)}});
      }
      break;

    case Phase::done:
      throw Error("step called on a finished loop");
  }
  return {std::move(s), std::move(emit.events)};
}

// Drivers ---------------------------------------------------------------------------------

struct VisionAnswer {
  bool ok = false;
  std::string reason;
};

using VisionFn = std::function<VisionAnswer(const State&)>;
/// Proposals for the next goal given the last verified state and the number
/// of goals reached so far.
using ProposeFn = std::function<std::vector<GoalProposal>(const State&, int)>;

/// Upper bound on loop transitions for plans of at most `max_plan_len` steps:
/// the start check, then per goal attempt one selection, two passes over the
/// plan (one re-plan) of three transitions per step, and the goal and terminal
/// checks.
inline long step_bound(const MonitorConfig& cfg, std::size_t max_plan_len) {
  return 1 + static_cast<long>(cfg.max_goals) * (6 * static_cast<long>(max_plan_len) + 3);
}

inline ExecutionTrace run_task(const MonitorContext& ctx, const VisionFn& vision,
                               ActuatorInterface& act, const ProposeFn& propose) {
  ctx.cfg.validate();
  LoopState s;
  ExecutionTrace tr;
  tr.task = ctx.spec.task.id;
  while (s.phase != Phase::done) {
    Request req = next_request(ctx, s);
    Observation obs;
    switch (req.kind) {
      case Request::Kind::vision: {
        VisionAnswer a = vision(req.state);
        obs.vision = a.ok;
        obs.vision_reason = a.reason;
        break;
      }
      case Request::Kind::act: obs.action = act.execute(req.action); break;
      case Request::Kind::propose:
        obs.proposals = propose(req.state, static_cast<int>(s.reached_goals.size()));
        break;
      case Request::Kind::none: break;
    }
    StepResult r = step(ctx, std::move(s), obs);
    s = std::move(r.state);
    for (auto& e : r.events) tr.events.push_back(std::move(e));
  }
  tr.success = s.success;
  tr.reason = s.reason;
  tr.goals = s.attempts;
  tr.steps = s.steps;
  return tr;
}

// Vision and proposal sources ------------------------------------------------------------

/// Live perception of a scene; the head stays where each query left it.
class LiveVision {
 public:
  LiveVision(Scene& scene, DetectorModel model, PerceptionConfig pcfg, const MonitorConfig& cfg)
      : scene_(scene), model_(std::move(model)), pcfg_(pcfg), mu_(cfg.mu), tau_(cfg.tau),
        rng_(splitmix64(cfg.seed ^ 0x5649534fu)) {}

  VisionAnswer operator()(const State& s) {
    VisionResult r = query_vision(s, scene_, scene_.camera, model_, rng_, mu_, tau_, pcfg_);
    scene_.camera = r.camera;
    return {r.ok, r.reason};
  }

 private:
  Scene& scene_;
  DetectorModel model_;
  PerceptionConfig pcfg_;
  double mu_;
  int tau_;
  std::mt19937_64 rng_;
};

/// Full world knowledge taken once: the initial ground truth, overlaid with
/// the symbolic effects of every action reported successful since.
class BeliefVision {
 public:
  explicit BeliefVision(const Scene& initial) : truth_(truth_view(initial)) {}

  VisionAnswer operator()(const State& s) const {
    for (const auto& a : s) {
      if (deleted_.contains(a)) return {false, "relation"};
      if (added_.contains(a)) continue;
      if (!ground_atom(a, truth_)) return {false, "relation"};
    }
    return {true, ""};
  }

  void on_success(const GroundAction& a) {
    for (const auto& d : a.del) {
      added_.erase(d);
      deleted_.insert(d);
    }
    for (const auto& x : a.add) {
      deleted_.erase(x);
      added_.insert(x);
    }
  }

 private:
  View truth_;
  State added_, deleted_;
};

/// Forwards to an actuator and tells a belief about reported successes.
class BeliefActuator : public ActuatorInterface {
 public:
  BeliefActuator(ActuatorInterface& inner, BeliefVision& belief)
      : inner_(inner), belief_(belief) {}
  ActionOutcome execute(const GroundAction& a) override {
    ActionOutcome o = inner_.execute(a);
    if (o.succeeded) belief_.on_success(a);
    return o;
  }

 private:
  ActuatorInterface& inner_;
  BeliefVision& belief_;
};

/// Predicted proposals; an empty list when nothing well formed decodes.
inline ProposeFn goalnet_proposer(const goalnet::Params& net, const Vocabulary& vocab,
                                  const TaskSentence& task, int k) {
  return [&net, &vocab, task, k](const State& s, int) {
    try {
      return goalnet::infer_topk(net, vocab, task, s, k);
    } catch (const NoValidProposal&) {
      return std::vector<GoalProposal>{};
    }
  };
}

/// A fixed goal order: the next scripted goal as the only proposal.
inline ProposeFn scripted_proposer(std::vector<State> script) {
  return [script = std::move(script)](const State&, int reached) {
    std::vector<GoalProposal> out;
    if (reached >= 0 && static_cast<std::size_t>(reached) < script.size()) {
      GoalProposal p;
      p.goal = script[reached];
      p.rank = 1;
      out.push_back(std::move(p));
    }
    return out;
  };
}

/// Perception plus prediction on a scene the actuator also acts on.
inline ExecutionTrace run_task(const TaskSpec& spec, Scene& scene, const PlanLibrary& lib,
                               const goalnet::Params& net, ActuatorInterface& act,
                               const MonitorConfig& cfg, const DetectorModel& model = {},
                               const PerceptionConfig& pcfg = {}) {
  MonitorContext ctx{spec, &lib, cfg};
  LiveVision live(scene, model, pcfg, cfg);
  return run_task(ctx, std::ref(live), act,
                  goalnet_proposer(net, *lib.vocabulary, spec.task, cfg.k));
}

// Trace records -----------------------------------------------------------------------------

inline json event_to_json(const MonitorEvent& e) {
  json j{{"t", e.t}, {"kind", to_string(e.kind)}};
  for (auto it = e.payload.begin(); it != e.payload.end(); ++it) j[it.key()] = it.value();
  return j;
}

inline json trace_summary(const ExecutionTrace& tr) {
  json goals = json::array();
  for (const auto& g : tr.goals)
    goals.push_back({{"goal", to_string(g.goal)},
                     {"rank", g.rank},
                     {"entry", g.entry},
                     {"reached", g.reached}});
  return {{"kind", "summary"},
          {"task", tr.task},
          {"outcome", tr.success ? "success" : "failure"},
          {"reason", tr.reason},
          {"steps", tr.steps},
          {"events", tr.events.size()},
          {"goals", goals}};
}

/// One event per line followed by the summary record.
inline void write_trace_jsonl(std::ostream& os, const ExecutionTrace& tr) {
  for (const auto& e : tr.events) os << event_to_json(e).dump() << '\n';
  os << trace_summary(tr).dump() << '\n';
}

/// States whose verification succeeded for the start check and each reached
/// goal, in order.
inline std::vector<State> verified_states(const ExecutionTrace& tr) {
  std::vector<State> out;
  for (std::size_t i = 0; i + 1 < tr.events.size(); ++i) {
    const auto& q = tr.events[i];
    const auto& r = tr.events[i + 1];
    if (q.kind != EventKind::vision_query || r.kind != EventKind::vision_result) continue;
    std::string purpose = q.payload.value("purpose", "");
    if ((purpose == "start" || purpose == "goal") && r.payload.value("ok", false))
      out.push_back(parse_state(q.payload.value("state", "")));
  }
  return out;
}

}  // namespace vdem
