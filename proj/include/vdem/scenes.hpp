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

// Seeded scene generators and the predicate-grounding accuracy study that
// compares perceived relations against the exact scene.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vdem/perception.hpp"

namespace vdem {

enum class Ablation { full, no_shape, no_depth, no_mask };

inline std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_shape: return "no-shape";
    case Ablation::no_depth: return "no-depth";
    case Ablation::no_mask: return "no-mask";
  }
  return "?";
}

inline Ablation ablation_from_string(std::string_view s) {
  if (s == "full") return Ablation::full;
  if (s == "no-shape") return Ablation::no_shape;
  if (s == "no-depth") return Ablation::no_depth;
  if (s == "no-mask") return Ablation::no_mask;
  throw Error("unknown ablation " + std::string(s));
}

/// no-shape replaces class extents by a fixed cube; no-depth drops depth
/// sensing, which also removes the 3D extents recovered from it, and places a
/// fixed cube at half the reliable range; no-mask measures depth as the
/// median over the whole box, background included.
inline PerceptionConfig ablation_config(Ablation a, PerceptionConfig base = {}) {
  base.use_shape = a != Ablation::no_shape && a != Ablation::no_depth;
  base.depth.mode = a == Ablation::no_depth  ? DepthMode::prior
                    : a == Ablation::no_mask ? DepthMode::unmasked
                                             : DepthMode::masked;
  return base;
}

namespace detail {

template <class Rng>
const std::string& pick(const std::vector<std::string>& pool,
                        std::set<std::string>& used, Rng& rng) {
  std::vector<const std::string*> free;
  for (const auto& p : pool)
    if (!used.count(p)) free.push_back(&p);
  const std::string& s =
      *free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
  used.insert(s);
  return s;
}

inline bool collides(const Box& b, const std::vector<SceneObject>& objs,
                     const std::set<std::string>& ignore = {}) {
  for (const auto& o : objs)
    if (!ignore.count(o.id) && intersection_volume(b, o.box) > 1e-9) return true;
  return false;
}

}  // namespace detail

/// Cluttered tabletop seen from a standing robot: stacked items, an open
/// container with contents, a human hand holding a tool, and floor objects
/// that occlude the table edge. Many boxes overlap in the image.
inline Scene overlap_scene(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * U(rng); };
  static const std::vector<std::string> tools{
      "brush", "spray_bottle", "cloth", "screwdriver", "wrench", "hammer",
      "pliers", "scissors", "drill", "sponge", "tape", "knife"};
  static const std::vector<std::string> parts{"guard", "panel", "handle", "diverter",
                                              "roller", "cover", "bolt", "screws"};
  static const std::vector<std::string> containers{"box", "bin", "toolbox", "bucket",
                                                   "tray"};
  std::vector<std::string> items = tools;
  items.insert(items.end(), parts.begin(), parts.end());
  std::set<std::string> used;

  Scene s;
  s.camera.position = {0, 0, 1.3};
  s.camera.pitch = deg2rad(-25);
  s.camera.yaw = deg2rad(uni(-8, 8));
  auto add = [&](const std::string& label, Box b,
                 std::optional<std::string> support = std::nullopt) {
    s.objects.push_back({label, label, b, support, {}, false});
  };
  Box table{{0.9, -0.7, 0}, {1.7, 0.7, 0.75}};
  add("table", table);
  used.insert("table");

  auto place_on_top = [&](const Box& base, const std::string& base_id, double max_ext,
                          const std::string& label) -> bool {
    for (int attempt = 0; attempt < 30; ++attempt) {
      Vec3 e{uni(0.05, max_ext), uni(0.05, max_ext), uni(0.05, 0.3)};
      double x0 = base.min.x + e.x / 2, x1 = base.max.x - e.x / 2;
      double y0 = base.min.y + e.y / 2, y1 = base.max.y - e.y / 2;
      // overhang allowed on stacks, so On can fail the overlap test
      if (base_id != "table") x0 -= e.x * 0.4, x1 += e.x * 0.4, y0 -= e.y * 0.4,
                              y1 += e.y * 0.4;
      if (x0 > x1 || y0 > y1) continue;
      Vec3 c{uni(x0, x1), uni(y0, y1), base.max.z + e.z / 2};
      Box b = Box::around(c, e);
      if (detail::collides(b, s.objects)) continue;
      add(label, b, base_id);
      return true;
    }
    return false;
  };

  int n_items = 3 + static_cast<int>(U(rng) * 4);
  for (int i = 0; i < n_items; ++i) {
    std::string label = detail::pick(items, used, rng);
    bool stacked = false;
    if (i > 0 && U(rng) < 0.3) {
      const SceneObject base = s.objects[1 + static_cast<std::size_t>(U(rng) * i)];
      if (base.supported_by == "table")
        stacked = place_on_top(base.box, base.id, 0.2, label);
    }
    if (!stacked && !place_on_top(table, "table", 0.25, label)) used.erase(label);
  }

  if (U(rng) < 0.6) {
    std::string label = detail::pick(containers, used, rng);
    for (int attempt = 0; attempt < 30; ++attempt) {
      Vec3 e{uni(0.2, 0.35), uni(0.2, 0.35), uni(0.1, 0.2)};
      Vec3 c{uni(table.min.x + e.x / 2, table.max.x - e.x / 2),
             uni(table.min.y + e.y / 2, table.max.y - e.y / 2), table.max.z + e.z / 2};
      Box b = Box::around(c, e);
      if (detail::collides(b, s.objects)) continue;
      add(label, b, "table");
      s.objects.back().attributes.insert("open");
      int contents = static_cast<int>(U(rng) * 3);
      for (int k = 0; k < contents; ++k) {
        std::string in = detail::pick(items, used, rng);
        Vec3 ie{uni(0.04, e.x * 0.4), uni(0.04, e.y * 0.4), uni(0.03, e.z * 1.2)};
        Vec3 ic{uni(b.min.x + ie.x / 2, b.max.x - ie.x / 2),
                uni(b.min.y + ie.y / 2, b.max.y - ie.y / 2), b.min.z + ie.z / 2};
        Box ib = Box::around(ic, ie);
        if (detail::collides(ib, s.objects, {label})) {
          used.erase(in);
          continue;
        }
        add(in, ib, label);
      }
      break;
    }
  }

  if (U(rng) < 0.6) {
    Vec3 hc{uni(0.8, 1.3), uni(-0.5, 0.5), uni(0.95, 1.15)};
    Box hand = Box::around(hc, {0.1, 0.1, 0.1});
    if (!detail::collides(hand, s.objects)) {
      add("technician_hand", hand);
      used.insert("technician_hand");
      if (U(rng) < 0.6) {
        std::string tool = detail::pick(tools, used, rng);
        Vec3 te{uni(0.12, 0.25), uni(0.03, 0.06), uni(0.03, 0.06)};
        Vec3 tc = hc + Vec3{uni(-0.04, 0.04), uni(-0.04, 0.04), uni(-0.04, 0.04)};
        Box tb = Box::around(tc, te);
        if (detail::collides(tb, s.objects, {"technician_hand"}))
          used.erase(tool);
        else
          add(tool, tb);
      }
    }
  }

  if (U(rng) < 0.5) {
    std::string label = U(rng) < 0.5 ? "cart" : "bench";
    Vec3 e{uni(0.2, 0.35), uni(0.3, 0.6), uni(0.4, 0.6)};
    Vec3 c{uni(0.55, 0.75), uni(-0.4, 0.4), e.z / 2};
    Box b = Box::around(c, e);
    if (!detail::collides(b, s.objects)) add(label, b);
  }

  Box shelf{{1.9, -0.9, 0}, {2.25, 0.9, 1.0}};
  add("shelf", shelf);
  validate_scene(s);
  return s;
}

/// Balanced accuracy per predicate: the mean of the hit rates on true and on
/// false ground-truth instances.
struct GroundingScore {
  struct Counts {
    long tp = 0, fn = 0, tn = 0, fp = 0;
  };
  std::map<std::string, Counts> by_predicate;

  void add(const std::string& pred, bool truth, bool perceived) {
    auto& c = by_predicate[pred];
    if (truth) (perceived ? c.tp : c.fn)++;
    else (perceived ? c.fp : c.tn)++;
  }
  void merge(const GroundingScore& o) {
    for (const auto& [p, c] : o.by_predicate) {
      auto& m = by_predicate[p];
      m.tp += c.tp, m.fn += c.fn, m.tn += c.tn, m.fp += c.fp;
    }
  }
  static double accuracy(const Counts& c) {
    long pos = c.tp + c.fn, neg = c.tn + c.fp;
    if (pos == 0 && neg == 0) return 0;
    if (pos == 0) return double(c.tn) / neg;
    if (neg == 0) return double(c.tp) / pos;
    return 0.5 * (double(c.tp) / pos + double(c.tn) / neg);
  }
  double accuracy(const std::string& pred) const {
    auto it = by_predicate.find(pred);
    return it == by_predicate.end() ? 0 : accuracy(it->second);
  }
  double mean_accuracy() const {
    if (by_predicate.empty()) return 0;
    double s = 0;
    for (const auto& [p, c] : by_predicate) s += accuracy(c);
    return s / by_predicate.size();
  }
};

/// The predicates whose grounding accuracy is studied.
inline const std::vector<std::string>& studied_predicates() {
  static const std::vector<std::string> p{"CloseTo", "Found",  "Free",   "Hold",  "Inside",
                                          "On",      "InFront", "Left",  "Right", "Under",
                                          "Behind",  "Clear",  "Empty"};
  return p;
}

/// Every studied predicate over the scene's objects, decided on the exact
/// scene and on the perceived view.
inline GroundingScore score_grounding(const Scene& scene, const View& perceived,
                                      const RelationConfig& rel = {}) {
  static const std::set<std::string> hands{"technician_hand", "operator_hand",
                                           "robot_hand"};
  static const std::set<std::string> containers{"box", "bin", "toolbox", "bucket",
                                                "tray"};
  View truth = truth_view(scene);
  GroundingScore g;
  auto both = [&](const std::string& p, std::vector<std::string> args) {
    g.add(p, ground_relation(p, args, truth, rel), ground_relation(p, args, perceived, rel));
  };
  std::vector<std::string> labels;
  for (const auto& o : scene.objects)
    if (!o.self) labels.push_back(o.label);
  for (const auto& a : labels) {
    both("Found", {a});
    both("Clear", {a});
    if (hands.count(a)) both("Free", {a});
    if (containers.count(a)) both("Empty", {a});
    for (const auto& b : labels) {
      if (a == b) continue;
      for (const char* p : {"CloseTo", "On", "Under", "InFront", "Behind", "Left", "Right"})
        both(p, {a, b});
      if (hands.count(a)) both("Hold", {a, b});
      if (containers.count(b)) both("Inside", {a, b});
    }
  }
  return g;
}

/// Noise regime of the grounding study: a detector around 0.9 accuracy.
inline DetectorModel study_detector(std::uint64_t seed) {
  DetectorModel m;
  m.tp_rate = 0.9;
  m.confusion = 0.05;
  m.jitter_px = 3.0;
  m.depth_sigma = 0.01;
  m.mask_sigma = 0.05;
  m.seed = seed;
  return m;
}

/// Mean grounding accuracy over n seeded overlap scenes for one ablation.
inline GroundingScore evaluate_ablation(Ablation a, int n_scenes, std::uint64_t seed,
                                        PerceptionConfig base = {}) {
  PerceptionConfig cfg = ablation_config(a, base);
  GroundingScore total;
  for (int i = 0; i < n_scenes; ++i) {
    std::uint64_t scene_seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    Scene s = overlap_scene(scene_seed);
    DetectorModel m = study_detector(scene_seed);
    std::mt19937_64 rng(scene_seed ^ 0x9e3779b97f4a7c15ULL);
    View v = perceive(s, s.camera, m, rng, cfg);
    total.merge(score_grounding(s, v, cfg.relations));
  }
  return total;
}

}  // namespace vdem
