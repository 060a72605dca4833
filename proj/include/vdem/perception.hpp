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

// Simulated perception: a ground-truth scene of axis-aligned boxes, a pinhole
// camera, a noisy detector voted over a batch of frames, mask-restricted
// depth, and a look-up table of geometric rules for the relation predicates.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vdem/errors.hpp"
#include "vdem/symbolic.hpp"
#include "vdem/vocab_io.hpp"

namespace vdem {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const { return *this * (1.0 / norm()); }
  double operator[](int i) const { return i == 0 ? x : i == 1 ? y : z; }
  double& operator[](int i) { return i == 0 ? x : i == 1 ? y : z; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Axis-aligned box in the world frame (meters, z up).
struct Box {
  Vec3 min, max;

  Vec3 center() const { return (min + max) * 0.5; }
  Vec3 extent() const { return max - min; }
  double volume() const {
    Vec3 e = extent();
    return e.x * e.y * e.z;
  }
  bool contains(const Vec3& p, double margin = 0) const {
    return p.x >= min.x - margin && p.x <= max.x + margin &&
           p.y >= min.y - margin && p.y <= max.y + margin &&
           p.z >= min.z - margin && p.z <= max.z + margin;
  }
  static Box around(const Vec3& c, const Vec3& e) {
    return {c - e * 0.5, c + e * 0.5};
  }
  Box moved_to(const Vec3& c) const { return around(c, extent()); }
  friend bool operator==(const Box&, const Box&) = default;
};

inline double interval_overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

inline double intersection_volume(const Box& a, const Box& b) {
  return interval_overlap(a.min.x, a.max.x, b.min.x, b.max.x) *
         interval_overlap(a.min.y, a.max.y, b.min.y, b.max.y) *
         interval_overlap(a.min.z, a.max.z, b.min.z, b.max.z);
}

inline double footprint_overlap(const Box& a, const Box& b) {
  return interval_overlap(a.min.x, a.max.x, b.min.x, b.max.x) *
         interval_overlap(a.min.y, a.max.y, b.min.y, b.max.y);
}

/// Euclidean gap between two boxes; 0 when they touch or intersect.
inline double box_gap(const Box& a, const Box& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i) {
    double d = std::max({0.0, a.min[i] - b.max[i], b.min[i] - a.max[i]});
    s += d * d;
  }
  return std::sqrt(s);
}

/// Horizontal distance from a point to a box footprint.
inline double footprint_distance(const Vec3& p, const Box& b) {
  double dx = std::max({0.0, b.min.x - p.x, p.x - b.max.x});
  double dy = std::max({0.0, b.min.y - p.y, p.y - b.max.y});
  return std::hypot(dx, dy);
}

// Scene -----------------------------------------------------------------------

struct SceneObject {
  std::string id;
  std::string label;  // vocabulary term
  Box box;
  std::optional<std::string> supported_by;
  std::set<std::string> attributes;  // e.g. "dirty", "open"
  bool self = false;                 // part of the robot
};

struct Attachment {
  std::string hand;
  std::string object;
  friend bool operator==(const Attachment&, const Attachment&) = default;
};

struct Camera {
  Vec3 position;
  double yaw = 0;    // radians, from +x towards +y
  double pitch = 0;  // radians, positive up
  double hfov = deg2rad(70);
  double vfov = deg2rad(60);
  double max_depth = 2.5;
  int width = 640;
  int height = 480;

  Vec3 forward() const {
    return {std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw),
            std::sin(pitch)};
  }
  Vec3 right() const { return {std::sin(yaw), -std::cos(yaw), 0}; }
  Vec3 up() const {
    return {-std::sin(pitch) * std::cos(yaw), -std::sin(pitch) * std::sin(yaw),
            std::cos(pitch)};
  }
  // Horizontal heading axes used by the directional relations.
  Vec3 heading() const { return {std::cos(yaw), std::sin(yaw), 0}; }
  double fx() const { return width / 2.0 / std::tan(hfov / 2); }
  double fy() const { return height / 2.0 / std::tan(vfov / 2); }

  double depth_of(const Vec3& p) const { return (p - position).dot(forward()); }

  struct Pixel {
    double u, v, depth;
  };
  std::optional<Pixel> project(const Vec3& p) const {
    Vec3 d = p - position;
    double z = d.dot(forward());
    if (z <= 1e-9) return std::nullopt;
    return Pixel{width / 2.0 + fx() * d.dot(right()) / z,
                 height / 2.0 - fy() * d.dot(up()) / z, z};
  }
  bool in_image(const Pixel& px) const {
    return px.u >= 0 && px.u <= width && px.v >= 0 && px.v <= height;
  }
  Vec3 ray(double u, double v) const {
    return (forward() + right() * ((u - width / 2.0) / fx()) -
            up() * ((v - height / 2.0) / fy()))
        .normalized();
  }
  /// Centroid inside the image and within reliable depth.
  bool sees(const Vec3& p) const {
    auto px = project(p);
    return px && px->depth <= max_depth && in_image(*px);
  }
  void aim_at(const Vec3& target) {
    Vec3 d = target - position;
    yaw = std::atan2(d.y, d.x);
    pitch = std::atan2(d.z, std::hypot(d.x, d.y));
  }
};

struct RobotState {
  bool vision_on = true;
  std::string head = "center";  // up | down | center
  std::string arm = "retracted";
  bool base_stopped = true;
  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct Scene {
  std::vector<SceneObject> objects;
  std::vector<Attachment> attachments;
  int frame = 0;
  Camera camera;
  RobotState robot;

  const SceneObject* find(std::string_view id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  SceneObject* find(std::string_view id) {
    for (auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  const SceneObject* find_label(std::string_view label) const {
    for (const auto& o : objects)
      if (o.label == label) return &o;
    return nullptr;
  }
  std::optional<std::string> holder_of(std::string_view object) const {
    for (const auto& a : attachments)
      if (a.object == object) return a.hand;
    return std::nullopt;
  }
  /// Robot parts and whatever a robot part is holding.
  bool is_self(const SceneObject& o) const {
    if (o.self) return true;
    if (auto h = holder_of(o.id)) {
      const SceneObject* hand = find(*h);
      return hand && hand->self;
    }
    return false;
  }
};

inline void validate_scene(const Scene& s) {
  std::set<std::string> ids;
  for (const auto& o : s.objects) {
    if (!ids.insert(o.id).second) throw SceneError("duplicate object id " + o.id);
    Vec3 e = o.box.extent();
    if (!(e.x > 0 && e.y > 0 && e.z > 0))
      throw SceneError("object " + o.id + " has a degenerate box");
  }
  for (const auto& o : s.objects) {
    if (!o.supported_by) continue;
    if (!ids.count(*o.supported_by))
      throw SceneError(o.id + " is supported by unknown " + *o.supported_by);
    // walk the support chain; a revisit means a cycle
    std::set<std::string> seen{o.id};
    const SceneObject* cur = &o;
    while (cur->supported_by) {
      if (!seen.insert(*cur->supported_by).second)
        throw SceneError("support cycle through " + o.id);
      cur = s.find(*cur->supported_by);
    }
  }
  for (const auto& a : s.attachments)
    if (!ids.count(a.hand) || !ids.count(a.object))
      throw SceneError("attachment " + a.hand + " -> " + a.object +
                       " does not resolve");
  if (!(s.camera.hfov > 0 && s.camera.hfov < kPi && s.camera.vfov > 0 &&
        s.camera.vfov < kPi))
    throw SceneError("camera field of view must be in (0, pi)");
  if (!(s.camera.max_depth > 0)) throw SceneError("camera max depth must be positive");
}

// Scene files -----------------------------------------------------------------

inline Vec3 vec3_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}
inline json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Camera camera_from_json(const json& j) {
  Camera c;
  c.position = vec3_from_json(j.at("position"));
  c.yaw = deg2rad(j.value("yaw_deg", 0.0));
  c.pitch = deg2rad(j.value("pitch_deg", 0.0));
  c.hfov = deg2rad(j.value("hfov_deg", 70.0));
  c.vfov = deg2rad(j.value("vfov_deg", 60.0));
  c.max_depth = j.value("max_depth", 2.5);
  c.width = j.value("width", 640);
  c.height = j.value("height", 480);
  return c;
}

inline json camera_to_json(const Camera& c) {
  return {{"position", vec3_to_json(c.position)}, {"yaw_deg", rad2deg(c.yaw)},
          {"pitch_deg", rad2deg(c.pitch)},        {"hfov_deg", rad2deg(c.hfov)},
          {"vfov_deg", rad2deg(c.vfov)},          {"max_depth", c.max_depth},
          {"width", c.width},                     {"height", c.height}};
}

/// Scene file:
///
///   {"camera": {"position": [x, y, z], "yaw_deg": 0, "pitch_deg": -10, ...},
///    "robot": {"vision_on": true, "head": "center", "arm": "retracted"},
///    "objects": [{"id": "ladder", "label": "ladder", "min": [..], "max": [..],
///                 "supported_by": "floor", "attributes": ["dirty"],
///                 "self": false}, ...],
///    "attachments": [{"hand": "robot_hand", "object": "brush"}]}
inline Scene scene_from_json(const json& j) {
  try {
    Scene s;
    s.frame = j.value("frame", 0);
    s.camera = camera_from_json(j.at("camera"));
    if (j.contains("robot")) {
      const auto& r = j.at("robot");
      s.robot.vision_on = r.value("vision_on", true);
      s.robot.head = r.value("head", std::string("center"));
      s.robot.arm = r.value("arm", std::string("retracted"));
      s.robot.base_stopped = r.value("base_stopped", true);
    }
    for (const auto& o : j.at("objects")) {
      SceneObject so;
      so.id = o.at("id").get<std::string>();
      so.label = o.value("label", so.id);
      so.box = {vec3_from_json(o.at("min")), vec3_from_json(o.at("max"))};
      if (o.contains("supported_by"))
        so.supported_by = o.at("supported_by").get<std::string>();
      if (o.contains("attributes"))
        for (const auto& a : o.at("attributes")) so.attributes.insert(a.get<std::string>());
      so.self = o.value("self", false);
      s.objects.push_back(std::move(so));
    }
    if (j.contains("attachments"))
      for (const auto& a : j.at("attachments"))
        s.attachments.push_back(
            {a.at("hand").get<std::string>(), a.at("object").get<std::string>()});
    validate_scene(s);
    return s;
  } catch (const json::exception& e) {
    throw SceneError(std::string("scene file: ") + e.what());
  }
}

inline json scene_to_json(const Scene& s) {
  json j;
  j["frame"] = s.frame;
  j["camera"] = camera_to_json(s.camera);
  j["robot"] = {{"vision_on", s.robot.vision_on},
                {"head", s.robot.head},
                {"arm", s.robot.arm},
                {"base_stopped", s.robot.base_stopped}};
  j["objects"] = json::array();
  for (const auto& o : s.objects) {
    json jo = {{"id", o.id},
               {"label", o.label},
               {"min", vec3_to_json(o.box.min)},
               {"max", vec3_to_json(o.box.max)}};
    if (o.supported_by) jo["supported_by"] = *o.supported_by;
    if (!o.attributes.empty()) jo["attributes"] = o.attributes;
    if (o.self) jo["self"] = true;
    j["objects"].push_back(jo);
  }
  j["attachments"] = json::array();
  for (const auto& a : s.attachments)
    j["attachments"].push_back({{"hand", a.hand}, {"object", a.object}});
  return j;
}

// Relation rules --------------------------------------------------------------

/// Every geometric threshold in one place.
struct RelationConfig {
  double on_gap = 0.02;          // vertical face gap for On
  double on_overlap = 0.5;       // footprint overlap / footprint of arg 1
  double inside_ratio = 0.9;     // intersection volume / volume of arg 1
  double close_to = 0.8;         // centroid distance
  double deadband = 0.05;        // Left/Right/InFront/Behind
  double direction_gate = 2.0;   // centroid distance gate for the same four
  double hold_dilation = 0.05;   // hand box dilation for Hold
  double at_distance = 1.0;      // horizontal distance to the footprint for At
  double attach_gap = 0.02;      // contact for Attached
  double looking_cone = deg2rad(15);
  double mu = 0.7;               // detection confidence threshold for Found
};

/// What a relation is evaluated against: objects with (estimated) boxes.
struct PerceivedObject {
  std::string label;
  Box box;
  double confidence = 1.0;
  std::set<std::string> attributes;
  bool self = false;
};

struct View {
  std::vector<PerceivedObject> objects;
  std::vector<Attachment> attachments;  // by label
  Camera camera;
  RobotState robot;

  const PerceivedObject* find(std::string_view label) const {
    for (const auto& o : objects)
      if (o.label == label) return &o;
    return nullptr;
  }
  bool attached(std::string_view hand, std::string_view object) const {
    for (const auto& a : attachments)
      if (a.hand == hand && a.object == object) return true;
    return false;
  }
};

/// The exact view: every object with its true box, confidence 1.
inline View truth_view(const Scene& s) {
  View v;
  for (const auto& o : s.objects)
    v.objects.push_back({o.label, o.box, 1.0, o.attributes, o.self});
  for (const auto& a : s.attachments) {
    const SceneObject* h = s.find(a.hand);
    const SceneObject* o = s.find(a.object);
    v.attachments.push_back({h->label, o->label});
  }
  v.camera = s.camera;
  v.robot = s.robot;
  return v;
}

namespace rules {

// Slack for comparing measured geometry against thresholds.
inline constexpr double kEps = 1e-9;

inline bool on(const Box& a, const Box& b, const RelationConfig& c) {
  if (std::abs(a.min.z - b.max.z) > c.on_gap + kEps) return false;
  double area = a.extent().x * a.extent().y;
  return footprint_overlap(a, b) >= c.on_overlap * area - kEps;
}

inline bool inside(const Box& a, const Box& b, const RelationConfig& c) {
  return intersection_volume(a, b) >= c.inside_ratio * a.volume() - kEps;
}

inline bool close_to(const Box& a, const Box& b, const RelationConfig& c) {
  return (a.center() - b.center()).norm() <= c.close_to + kEps;
}

// Signed displacement of a relative to b along a camera axis, gated by the
// centroid distance. Returns 0 inside the dead-band or outside the gate.
inline int direction(const Box& a, const Box& b, const Vec3& axis,
                     const RelationConfig& c) {
  Vec3 d = a.center() - b.center();
  if (d.norm() > c.direction_gate + kEps) return 0;
  double s = d.dot(axis);
  if (s > c.deadband + kEps) return 1;
  if (s < -c.deadband - kEps) return -1;
  return 0;
}

inline bool holds_object(const View& v, const PerceivedObject& h,
                         const PerceivedObject& o, const RelationConfig& c) {
  if (&h == &o) return false;
  if (v.attached(h.label, o.label)) return true;
  return h.box.contains(o.box.center(), c.hold_dilation + kEps);
}

}  // namespace rules

inline const std::set<std::string>& perceivable_predicates() {
  static const std::set<std::string> p{
      "On",        "Under",      "Inside",       "CloseTo",  "Hold",
      "Holding",   "InFront",    "Behind",       "Left",     "Right",
      "At",        "LookingAt",  "Attached",     "Found",    "Detected",
      "Free",      "Clear",      "Empty",        "VisionOn", "HeadUp",
      "HeadDown",  "HeadCenter", "ArmExtended",  "ArmRetracted",
      "BaseStopped", "Open",     "Closed",       "Clean",    "Dirty",
      "Removed",   "Supported"};
  return p;
}

/// Decides one predicate on objects of a view. Arguments absent from the view
/// make a relation false, except the proprioceptive robot-state predicates.
inline bool ground_relation(std::string_view pred,
                            std::span<const std::string> args, const View& v,
                            const RelationConfig& c = {}) {
  std::string p(pred);
  if (!perceivable_predicates().count(p)) throw UnknownPredicate(p);
  static const std::set<std::string> binary{
      "On", "Under", "Inside", "CloseTo", "Hold", "Holding", "InFront",
      "Behind", "Left", "Right", "At", "LookingAt", "Attached"};
  std::size_t arity = binary.count(p) ? 2 : 1;
  if (args.size() != arity)
    throw TypeError(p, "expects " + std::to_string(arity) + " arguments");

  // proprioception
  if (p == "VisionOn") return v.robot.vision_on;
  if (p == "HeadUp") return v.robot.head == "up";
  if (p == "HeadDown") return v.robot.head == "down";
  if (p == "HeadCenter") return v.robot.head == "center";
  if (p == "ArmExtended") return v.robot.arm == "extended";
  if (p == "ArmRetracted") return v.robot.arm == "retracted";
  if (p == "BaseStopped") return v.robot.base_stopped;

  const PerceivedObject* a = v.find(args[0]);
  if (!a) return false;
  if (p == "Found" || p == "Detected") return a->self || a->confidence > c.mu;
  if (p == "Open" || p == "Closed" || p == "Clean" || p == "Dirty" ||
      p == "Removed" || p == "Supported") {
    std::string attr = p;
    attr[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(attr[0])));
    return a->attributes.count(attr) > 0;
  }
  if (p == "Free") {
    for (const auto& o : v.objects)
      if (rules::holds_object(v, *a, o, c)) return false;
    return true;
  }
  if (p == "Clear") {
    for (const auto& o : v.objects)
      if (&o != a && rules::on(o.box, a->box, c)) return false;
    return true;
  }
  if (p == "Empty") {
    for (const auto& o : v.objects)
      if (&o != a && rules::inside(o.box, a->box, c)) return false;
    return true;
  }

  const PerceivedObject* b = v.find(args[1]);
  if (!b || a == b) return false;
  if (p == "On") return rules::on(a->box, b->box, c);
  if (p == "Under") return rules::on(b->box, a->box, c);
  if (p == "Inside") return rules::inside(a->box, b->box, c);
  if (p == "CloseTo") return rules::close_to(a->box, b->box, c);
  if (p == "Hold" || p == "Holding") return rules::holds_object(v, *a, *b, c);
  if (p == "Right") return rules::direction(a->box, b->box, v.camera.right(), c) > 0;
  if (p == "Left") return rules::direction(a->box, b->box, v.camera.right(), c) < 0;
  if (p == "Behind") return rules::direction(a->box, b->box, v.camera.heading(), c) > 0;
  if (p == "InFront") return rules::direction(a->box, b->box, v.camera.heading(), c) < 0;
  if (p == "At") return footprint_distance(a->box.center(), b->box) <= c.at_distance + rules::kEps;
  if (p == "LookingAt") {
    Vec3 d = b->box.center() - v.camera.position;
    double cosang = d.dot(v.camera.forward()) / d.norm();
    return cosang >= std::cos(c.looking_cone);
  }
  if (p == "Attached") return box_gap(a->box, b->box) <= c.attach_gap + rules::kEps;
  throw UnknownPredicate(p);
}

inline bool ground_atom(const Atom& atom, const View& v, const RelationConfig& c = {}) {
  return ground_relation(atom.predicate, atom.args, v, c);
}

// Detector --------------------------------------------------------------------

struct DetectorModel {
  double tp_rate = 1.0;       // per-frame probability the object is detected
  std::map<std::string, double> class_tp;  // per-class override
  double confusion = 0.0;     // per-frame probability of a wrong label
  double jitter_px = 0.0;     // bbox centre jitter (pixels)
  double depth_sigma = 0.0;   // depth noise (meters)
  double mask_sigma = 0.05;   // noise on the foreground probability
  double mask_dropout = 0.0;  // fraction of pixels forced to background
  std::vector<std::string> classes;  // confusion targets; scene labels if empty
  std::uint64_t seed = 0;

  double tp_for(const std::string& label) const {
    auto it = class_tp.find(label);
    return it == class_tp.end() ? tp_rate : it->second;
  }
};

inline DetectorModel detector_from_json(const json& j) {
  DetectorModel m;
  m.tp_rate = j.value("tp_rate", 1.0);
  if (j.contains("class_tp"))
    m.class_tp = j.at("class_tp").get<std::map<std::string, double>>();
  m.confusion = j.value("confusion", 0.0);
  m.jitter_px = j.value("jitter_px", 0.0);
  m.depth_sigma = j.value("depth_sigma", 0.0);
  m.mask_sigma = j.value("mask_sigma", 0.05);
  m.mask_dropout = j.value("mask_dropout", 0.0);
  if (j.contains("classes")) m.classes = j.at("classes").get<std::vector<std::string>>();
  m.seed = j.value("seed", std::uint64_t{0});
  auto in01 = [](double x) { return x >= 0 && x <= 1; };
  if (!in01(m.tp_rate) || !in01(m.confusion) || !in01(m.mask_dropout))
    throw SceneError("detector rates must lie in [0, 1]");
  for (const auto& [k, v] : m.class_tp)
    if (!in01(v)) throw SceneError("detector rate for " + k + " must lie in [0, 1]");
  return m;
}

struct PixelBox {
  double u0 = 0, v0 = 0, u1 = 0, v1 = 0;
  double area() const { return std::max(0.0, u1 - u0) * std::max(0.0, v1 - v0); }
};

struct Detection {
  std::string label;
  std::string source;  // id of the scene object that produced it
  PixelBox bbox;
  double cu = 0, cv = 0;  // projected centroid
  double depth = 0;       // filled by estimate_depth
  double confidence = 0;
};

namespace detail {

inline std::array<Vec3, 8> corners(const Box& b) {
  std::array<Vec3, 8> c;
  for (int i = 0; i < 8; ++i)
    c[i] = {i & 1 ? b.max.x : b.min.x, i & 2 ? b.max.y : b.min.y,
            i & 4 ? b.max.z : b.min.z};
  return c;
}

inline std::optional<PixelBox> project_box(const Camera& cam, const Box& b) {
  PixelBox pb{1e300, 1e300, -1e300, -1e300};
  for (const auto& c : corners(b)) {
    auto px = cam.project(c);
    if (!px) return std::nullopt;
    pb.u0 = std::min(pb.u0, px->u);
    pb.v0 = std::min(pb.v0, px->v);
    pb.u1 = std::max(pb.u1, px->u);
    pb.v1 = std::max(pb.v1, px->v);
  }
  pb.u0 = std::clamp(pb.u0, 0.0, double(cam.width));
  pb.u1 = std::clamp(pb.u1, 0.0, double(cam.width));
  pb.v0 = std::clamp(pb.v0, 0.0, double(cam.height));
  pb.v1 = std::clamp(pb.v1, 0.0, double(cam.height));
  return pb;
}

/// Slab test; entry distance along the ray or nullopt.
inline std::optional<double> ray_hit(const Vec3& o, const Vec3& d, const Box& b) {
  double t0 = 0, t1 = 1e300;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-12) {
      if (o[i] < b.min[i] - 1e-9 || o[i] > b.max[i] + 1e-9) return std::nullopt;
      continue;
    }
    double a = (b.min[i] - 1e-9 - o[i]) / d[i];
    double c = (b.max[i] + 1e-9 - o[i]) / d[i];
    if (a > c) std::swap(a, c);
    t0 = std::max(t0, a);
    t1 = std::min(t1, c);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

/// Open containers render without their top face: a ray entering from
/// above travels on to the inner surface, so their contents stay visible.
inline std::optional<double> object_hit(const Vec3& o, const Vec3& d,
                                        const SceneObject& obj) {
  auto t = ray_hit(o, d, obj.box);
  if (!t || !obj.attributes.count("open")) return t;
  Vec3 p = o + d * *t;
  if (d.z >= 0 || std::abs(p.z - obj.box.max.z) > 1e-6) return t;
  // exit distance of the slab test
  double t1 = 1e300;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-12) continue;
    double a = (obj.box.min[i] - o[i]) / d[i];
    double c = (obj.box.max[i] - o[i]) / d[i];
    t1 = std::min(t1, std::max(a, c));
  }
  return t1;
}

}  // namespace detail

/// Per visible object, n noisy frames voted by plurality. Confidence is the
/// frequency of the winning label; objects whose winning outcome is a miss
/// are omitted. Robot parts are not detected (they are known).
inline std::vector<Detection> detect_batch(const Scene& scene, const Camera& cam,
                                           DetectorModel& model,
                                           std::mt19937_64& rng, int n = 10) {
  if (n < 1) throw Error("batch size must be at least 1");
  std::vector<std::string> classes = model.classes;
  if (classes.empty()) {
    for (const auto& o : scene.objects)
      if (!o.self) classes.push_back(o.label);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  }
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<Detection> out;
  for (const auto& o : scene.objects) {
    if (scene.is_self(o)) continue;
    Vec3 c = o.box.center();
    if (!cam.sees(c)) continue;
    auto pb = detail::project_box(cam, o.box);
    if (!pb) continue;
    auto px = *cam.project(c);

    // votes in first-seen order, so ties resolve deterministically
    std::vector<std::pair<std::string, int>> votes;
    std::map<std::string, std::pair<double, double>> centre_sum;
    auto vote = [&](const std::string& label) {
      for (auto& [l, k] : votes)
        if (l == label) {
          ++k;
          return;
        }
      votes.push_back({label, 1});
    };
    for (int f = 0; f < n; ++f) {
      if (U(rng) >= model.tp_for(o.label)) {
        vote("");
        continue;
      }
      std::string label = o.label;
      if (model.confusion > 0 && U(rng) < model.confusion && classes.size() > 1) {
        std::vector<const std::string*> others;
        for (const auto& k : classes)
          if (k != o.label) others.push_back(&k);
        label = *others[std::min(others.size() - 1,
                                 static_cast<std::size_t>(U(rng) * others.size()))];
      }
      double du = model.jitter_px > 0 ? N(rng) * model.jitter_px : 0.0;
      double dv = model.jitter_px > 0 ? N(rng) * model.jitter_px : 0.0;
      auto& cs = centre_sum[label];
      cs.first += px.u + du;
      cs.second += px.v + dv;
      vote(label);
    }
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it)
      if (it->second > best->second) best = it;
    if (best->first.empty()) continue;
    Detection d;
    d.label = best->first;
    d.source = o.id;
    d.confidence = double(best->second) / n;
    d.cu = centre_sum[d.label].first / best->second;
    d.cv = centre_sum[d.label].second / best->second;
    double su = d.cu - px.u, sv = d.cv - px.v;
    d.bbox = {pb->u0 + su, pb->v0 + sv, pb->u1 + su, pb->v1 + sv};
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<Detection> detect_batch(const Scene& scene, const Camera& cam,
                                           DetectorModel& model, int n = 10) {
  std::mt19937_64 rng(model.seed);
  return detect_batch(scene, cam, model, rng, n);
}

enum class DepthMode {
  masked,    // foreground pixels only (probability above the threshold)
  unmasked,  // every pixel of the box, background included
  prior,     // no depth sensing: a fixed prior distance
};

struct DepthConfig {
  int grid = 20;                  // samples per bbox side
  double fg_threshold = 0.7;
  double min_fg_fraction = 0.05;
  double background_depth = 6.0;  // far wall behind everything
  double prior_depth = 1.25;      // used by DepthMode::prior
  DepthMode mode = DepthMode::masked;
};

/// Nearest-face depth of the detected object, measured only on pixels whose
/// simulated foreground probability passes the threshold.
inline double estimate_depth(const Detection& det, const Scene& scene,
                             const Camera& cam, const DetectorModel& model,
                             std::mt19937_64& rng, const DepthConfig& cfg = {}) {
  const SceneObject* target = scene.find(det.source);
  if (!target) throw SceneError("detection has no source object " + det.source);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);
  if (cfg.mode == DepthMode::prior) return cfg.prior_depth;

  std::vector<const SceneObject*> occluders;
  for (const auto& o : scene.objects)
    if (!o.self) occluders.push_back(&o);

  // Grid over the box plus the projected corners of the true box, nudged
  // towards the centre, so the nearest corner is always sampled.
  std::vector<std::pair<double, double>> samples;
  const auto& bb = det.bbox;
  int g = std::max(2, cfg.grid);
  for (int i = 0; i < g; ++i)
    for (int k = 0; k < g; ++k)
      samples.push_back({bb.u0 + (i + 0.5) * (bb.u1 - bb.u0) / g,
                         bb.v0 + (k + 0.5) * (bb.v1 - bb.v0) / g});
  double su = det.cu, sv = det.cv;
  if (auto c = cam.project(target->box.center())) su -= c->u, sv -= c->v;
  for (const auto& c : detail::corners(target->box)) {
    auto px = cam.project(c);
    auto ctr = cam.project(target->box.center());
    if (!px || !ctr) continue;
    samples.push_back({px->u + (ctr->u - px->u) * 1e-3 + su,
                       px->v + (ctr->v - px->v) * 1e-3 + sv});
  }

  std::vector<double> kept;
  std::size_t grid_kept = 0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    Vec3 dir = cam.ray(samples[s].first, samples[s].second);
    double nearest = 1e300;
    const SceneObject* hit = nullptr;
    for (const auto* o : occluders) {
      auto t = detail::object_hit(cam.position, dir, *o);
      if (t && *t < nearest) {
        nearest = *t;
        hit = o;
      }
    }
    double depth = hit ? nearest * dir.dot(cam.forward())
                       : cfg.background_depth;
    if (cfg.mode == DepthMode::unmasked) {
      kept.push_back(depth);
      continue;
    }
    double prob = hit == target ? 0.95 : hit ? 0.1 : 0.3;
    prob += N(rng) * model.mask_sigma;
    if (model.mask_dropout > 0 && U(rng) < model.mask_dropout) prob = 0;
    if (prob > cfg.fg_threshold) {
      kept.push_back(depth);
      if (s < static_cast<std::size_t>(g * g)) ++grid_kept;
    }
  }
  double est;
  if (cfg.mode == DepthMode::unmasked) {
    std::nth_element(kept.begin(), kept.begin() + kept.size() / 2, kept.end());
    est = kept[kept.size() / 2];
  } else {
    double fraction = double(grid_kept) / (g * g);
    if (fraction < cfg.min_fg_fraction) throw NoForeground(fraction);
    est = *std::min_element(kept.begin(), kept.end());
  }
  if (model.depth_sigma > 0) est += N(rng) * model.depth_sigma;
  return std::max(0.0, est);
}

// Perception pipeline ---------------------------------------------------------

struct PerceptionConfig {
  int batch = 10;
  DepthConfig depth;
  bool use_shape = true;            // class extents; else a default cube
  double default_extent = 0.3;
  RelationConfig relations;
};

/// Box of the detected object recovered from its centroid ray and the
/// nearest-face depth: for an axis-aligned box the centroid lies
/// sum_k |f_k| e_k / 2 beyond its nearest point along the optical axis.
inline Box reconstruct_box(const Detection& det, double depth, const Camera& cam,
                           const Vec3& extent) {
  Vec3 f = cam.forward();
  double centre_depth = depth + 0.5 * (std::abs(f.x) * extent.x +
                                       std::abs(f.y) * extent.y +
                                       std::abs(f.z) * extent.z);
  Vec3 ray = cam.ray(det.cu, det.cv);
  Vec3 c = cam.position + ray * (centre_depth / ray.dot(f));
  return Box::around(c, extent);
}

/// One perception pass: known robot parts plus voted detections with
/// reconstructed boxes. Label collisions keep the most confident detection.
inline View perceive(const Scene& scene, const Camera& cam, DetectorModel& model,
                     std::mt19937_64& rng, const PerceptionConfig& cfg = {}) {
  View v;
  v.camera = cam;
  v.robot = scene.robot;
  for (const auto& o : scene.objects)
    if (scene.is_self(o)) v.objects.push_back({o.label, o.box, 1.0, o.attributes, true});
  for (const auto& a : scene.attachments)
    v.attachments.push_back({scene.find(a.hand)->label, scene.find(a.object)->label});

  auto dets = detect_batch(scene, cam, model, rng, cfg.batch);
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return a.confidence > b.confidence;
  });
  for (auto& d : dets) {
    if (v.find(d.label)) continue;
    try {
      d.depth = estimate_depth(d, scene, cam, model, rng, cfg.depth);
    } catch (const NoForeground&) {
      continue;
    }
    const SceneObject* src = scene.find(d.source);
    Vec3 e = cfg.use_shape ? src->box.extent()
                           : Vec3{cfg.default_extent, cfg.default_extent,
                                  cfg.default_extent};
    v.objects.push_back({d.label, reconstruct_box(d, d.depth, cam, e), d.confidence,
                         src->attributes, false});
  }
  return v;
}

// Vision query ----------------------------------------------------------------

struct VisionResult {
  bool ok = false;
  std::map<std::string, Box> boxes;
  std::map<std::string, double> depths;  // {"": -1} on failure
  Camera camera;                         // where the search left the camera
  int search_steps = 0;
  std::string reason;                    // "", "timeout" or "relation"
};

inline std::vector<std::string> terms_of(const State& s) {
  std::set<std::string> t;
  for (const auto& a : s)
    for (const auto& x : a.args) t.insert(x);
  return {t.begin(), t.end()};
}

/// Detects every term of s; once all are found with confidence above mu,
/// grounds each atom. Missing terms trigger up to tau search steps, each
/// turning the head by most of a field of view.
inline VisionResult query_vision(const State& s, const Scene& scene, Camera cam,
                                 DetectorModel& model, std::mt19937_64& rng,
                                 double mu, int tau,
                                 const PerceptionConfig& cfg = {}) {
  VisionResult r;
  r.camera = cam;
  if (s.empty()) {
    r.ok = true;
    return r;
  }
  RelationConfig rel = cfg.relations;
  rel.mu = mu;
  static const std::set<std::string> proprioceptive{
      "VisionOn", "HeadUp", "HeadDown", "HeadCenter", "ArmExtended",
      "ArmRetracted", "BaseStopped"};
  std::vector<std::string> terms;
  for (const auto& a : s)
    if (!proprioceptive.count(a.predicate))
      for (const auto& x : a.args) terms.push_back(x);
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

  auto fail = [&](const std::string& why) {
    r.ok = false;
    r.boxes.clear();
    r.depths = {{"", -1.0}};
    r.reason = why;
    return r;
  };
  for (int step = 0;; ++step) {
    View v = perceive(scene, cam, model, rng, cfg);
    bool all_found = true;
    for (const auto& t : terms) {
      const PerceivedObject* o = v.find(t);
      if (!o || !(o->self || o->confidence > mu)) all_found = false;
    }
    if (all_found) {
      r.camera = cam;
      r.search_steps = step;
      for (const auto& a : s)
        if (!ground_atom(a, v, rel)) return fail("relation");
      for (const auto& t : terms) {
        const PerceivedObject* o = v.find(t);
        r.boxes[t] = o->box;
        r.depths[t] = cam.depth_of(o->box.center());
      }
      r.ok = true;
      return r;
    }
    if (step >= tau) {
      r.camera = cam;
      r.search_steps = step;
      return fail("timeout");
    }
    cam.yaw = std::remainder(cam.yaw + 0.9 * cam.hfov, 2 * kPi);
  }
}

}  // namespace vdem
