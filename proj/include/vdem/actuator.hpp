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

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "vdem/perception.hpp"
#include "vdem/planner.hpp"

namespace vdem {

// Deterministic draws ----------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Uniform in [0, 1), a pure function of its inputs.
inline double hashed_uniform(std::uint64_t seed, std::string_view salt, std::string_view key,
                             std::uint64_t n = 0) {
  std::uint64_t h = splitmix64(seed ^ fnv1a(salt));
  h = splitmix64(h ^ fnv1a(key));
  h = splitmix64(h ^ n);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Effects on the scene ------------------------------------------------------------

inline constexpr double kMaxHeadPitchDownDeg = 45.0;

namespace detail {

inline SceneObject& by_label(Scene& s, std::string_view label) {
  for (auto& o : s.objects)
    if (o.label == label) return o;
  throw SceneError("no object labelled " + std::string(label));
}

inline void detach(Scene& s, const std::string& object_id) {
  std::erase_if(s.attachments, [&](const Attachment& a) { return a.object == object_id; });
}

inline void translate_with_held(Scene& s, SceneObject& part, const Vec3& c) {
  Vec3 delta = c - part.box.center();
  part.box = part.box.moved_to(c);
  for (const auto& a : s.attachments)
    if (a.hand == part.id) {
      SceneObject* o = s.find(a.object);
      o->box = o->box.moved_to(o->box.center() + delta);
    }
}

inline Vec3 horizontal(const Vec3& v) { return {v.x, v.y, 0.0}; }

/// Moves the robot base to `standoff` meters (horizontally) from the edge of
/// `target`, on the side it approaches from, and carries the gripper, held
/// objects and camera along.
inline void move_robot_to(Scene& s, const SceneObject& target, double standoff) {
  SceneObject& base = by_label(s, "robot");
  Vec3 tc = target.box.center();
  Vec3 d = horizontal(base.box.center() - tc);
  if (d.norm() < 1e-9) d = {-1, 0, 0};
  d = d.normalized();
  // distance from the target centre to its footprint edge along d
  Vec3 half = target.box.extent() * 0.5;
  double edge = std::min(std::abs(d.x) > 1e-9 ? half.x / std::abs(d.x) : 1e300,
                         std::abs(d.y) > 1e-9 ? half.y / std::abs(d.y) : 1e300);
  double r = 0.5 * std::max(base.box.extent().x, base.box.extent().y);
  Vec3 c = tc + d * (edge + r + standoff);
  c.z = base.box.center().z;
  Vec3 delta = c - base.box.center();
  base.box = base.box.moved_to(c);
  for (auto& o : s.objects)
    if (o.self && o.label != "robot") {
      // the gripper sits at the base's right front corner, out of the
      // camera's way, facing the target
      Vec3 side{d.y, -d.x, 0.0};
      Vec3 hc = c - d * (r + 0.05) + side * (r + 0.1);
      hc.z = o.box.center().z;
      translate_with_held(s, o, hc);
    }
  s.camera.position = s.camera.position + delta;
  s.camera.aim_at(tc);
  // keep the horizon in view so later searches by turning the head work
  s.camera.pitch = std::max(s.camera.pitch, -deg2rad(kMaxHeadPitchDownDeg));
}

inline void place_on(Scene& s, SceneObject& o, const SceneObject& support) {
  detach(s, o.id);
  Vec3 e = o.box.extent();
  Vec3 c = support.box.center();
  c.z = support.box.max.z + e.z / 2;
  // slide along the support until clear of what already sits there
  Box top = support.box;
  for (double off : {0.0, 0.15, -0.15, 0.3, -0.3}) {
    Vec3 cand = c + Vec3{off, 0, 0};
    Box b = Box::around(cand, e);
    bool clear = footprint_overlap(b, top) >= 0.99 * e.x * e.y || off == 0.0;
    for (const auto& other : s.objects)
      if (&other != &o && other.supported_by == support.id &&
          intersection_volume(other.box, b) > 0)
        clear = false;
    if (clear) {
      c = cand;
      break;
    }
  }
  o.box = o.box.moved_to(c);
  o.supported_by = support.id;
}

inline void put_in_hand(Scene& s, SceneObject& o, const SceneObject& hand) {
  detach(s, o.id);
  s.attachments.push_back({hand.id, o.id});
  o.box = o.box.moved_to(hand.box.center());
  o.supported_by.reset();
}

}  // namespace detail

/// Applies a ground action's effects to the scene geometry: deletes first,
/// then adds. Epistemic effects (Detected, Found) change nothing physical.
inline void apply_effects(Scene& s, const GroundAction& a) {
  for (const auto& d : a.del) {
    if (d.predicate == "Holding" || d.predicate == "Hold") {
      detail::detach(s, detail::by_label(s, d.args[1]).id);
    } else if (d.predicate == "Dirty" || d.predicate == "Clean" || d.predicate == "Open" ||
               d.predicate == "Closed") {
      std::string attr = d.predicate;
      attr[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(attr[0])));
      detail::by_label(s, d.args[0]).attributes.erase(attr);
    }
  }
  for (const auto& x : a.add) {
    const std::string& p = x.predicate;
    if (p == "On") {
      detail::place_on(s, detail::by_label(s, x.args[0]), detail::by_label(s, x.args[1]));
    } else if (p == "Holding" || p == "Hold") {
      detail::put_in_hand(s, detail::by_label(s, x.args[1]), detail::by_label(s, x.args[0]));
    } else if (p == "At" && x.args[0] == "robot") {
      detail::move_robot_to(s, detail::by_label(s, x.args[1]), 0.25);
    } else if (p == "CloseTo" && x.args[0] == "robot") {
      detail::move_robot_to(s, detail::by_label(s, x.args[1]), 0.05);
    } else if (p == "Free") {
      // a released gripper retracts over the base
      SceneObject& h = detail::by_label(s, x.args[0]);
      if (h.self && !s.holder_of(h.id)) {
        Vec3 c = detail::by_label(s, "robot").box.center();
        c.z = h.box.center().z;
        detail::translate_with_held(s, h, c);
      }
    } else if (p == "Clean" || p == "Dirty" || p == "Open" || p == "Closed") {
      std::string attr = p;
      attr[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(attr[0])));
      detail::by_label(s, x.args[0]).attributes.insert(attr);
    }
  }
  ++s.frame;
}

// Actuators ----------------------------------------------------------------------

struct ActionOutcome {
  bool succeeded = false;
  std::string reason;  // empty on success
  friend bool operator==(const ActionOutcome&, const ActionOutcome&) = default;
};

class ActuatorInterface {
 public:
  virtual ~ActuatorInterface() = default;
  virtual ActionOutcome execute(const GroundAction& a) = 0;
};

struct FailureProfile {
  double p_fail = 0.0;  // reported failure per world action
};

/// Executes actions on a scene. An action fails, leaving the scene untouched,
/// when its precondition does not hold physically or when the hashed failure
/// draw for (seed, action, attempt) falls under p_fail.
class SimActuator : public ActuatorInterface {
 public:
  SimActuator(Scene& scene, FailureProfile profile, std::uint64_t seed)
      : scene_(scene), profile_(profile), seed_(seed) {}

  ActionOutcome execute(const GroundAction& a) override {
    std::string key = to_string(a);
    std::uint64_t attempt = attempts_[key]++;
    View truth = truth_view(scene_);
    for (const auto& p : a.precondition)
      if (p.predicate != "Detected" && p.predicate != "Found" && !ground_atom(p, truth))
        return {false, "precondition " + to_string(p)};
    if (a.action_class == pddl::ActionClass::world &&
        hashed_uniform(seed_, "actuator", key, attempt) < profile_.p_fail)
      return {false, "actuator"};
    apply_effects(scene_, a);
    return {true, ""};
  }

  const Scene& scene() const { return scene_; }

 private:
  Scene& scene_;
  FailureProfile profile_;
  std::uint64_t seed_;
  std::map<std::string, std::uint64_t> attempts_;
};

}  // namespace vdem
