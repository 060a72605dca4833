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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geometry_oracle.hpp"
#include "vdem/perception.hpp"
#include "vdem/scenes.hpp"

namespace vdem {
namespace {

SceneObject obj(const std::string& id, Vec3 lo, Vec3 hi,
                std::optional<std::string> support = std::nullopt) {
  return {id, id, {lo, hi}, support, {}, false};
}

// Camera at the origin looking down +x, level.
Scene empty_scene() {
  Scene s;
  s.camera.position = {0, 0, 0};
  return s;
}

// brush lying on a ladder top 1.5 m in front of a level camera
Scene brush_on_ladder() {
  Scene s = empty_scene();
  s.camera.position = {0, 0, 1.2};
  s.objects.push_back(obj("ladder", {1.3, -0.3, 0}, {1.7, 0.3, 1.0}));
  s.objects.push_back(obj("brush", {1.4, -0.1, 1.0}, {1.6, 0.1, 1.05}, "ladder"));
  s.camera.aim_at({1.5, 0, 1.0});
  return s;
}

View one_pair(Box a, Box b, const std::string& la = "a", const std::string& lb = "b") {
  View v;
  v.objects.push_back({la, a, 1.0, {}, false});
  v.objects.push_back({lb, b, 1.0, {}, false});
  return v;
}

// Relation rules ---------------------------------------------------------------

TEST(GroundRelation, AgreesWithLatticeOracle) {
  auto r = testing::compare_with_oracle(2000, 11);
  EXPECT_EQ(r.disagreements, 0) << r.first_disagreement;
  for (const auto& p : testing::oracle_predicates()) {
    EXPECT_GT(r.true_false[p].first, 0) << p << " never true";
    EXPECT_GT(r.true_false[p].second, 0) << p << " never false";
  }
}

TEST(GroundRelation, DirectionalPairsAreAntisymmetric) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.5, 1.5), E(0.02, 0.6), Y(-kPi, kPi);
  long left = 0, front = 0;
  for (int i = 0; i < 10000; ++i) {
    Vec3 ca{U(rng), U(rng), U(rng)}, cb{U(rng), U(rng), U(rng)};
    View v = one_pair(Box::around(ca, {E(rng), E(rng), E(rng)}),
                      Box::around(cb, {E(rng), E(rng), E(rng)}));
    v.camera.yaw = Y(rng);
    v.camera.pitch = Y(rng) / 4;
    auto g = [&](const char* p, const char* x, const char* y) {
      std::vector<std::string> args{x, y};
      return ground_relation(p, args, v);
    };
    ASSERT_EQ(g("Left", "a", "b"), g("Right", "b", "a"));
    ASSERT_EQ(g("InFront", "a", "b"), g("Behind", "b", "a"));
    ASSERT_FALSE(g("Left", "a", "b") && g("Right", "a", "b"));
    ASSERT_FALSE(g("InFront", "a", "b") && g("Behind", "a", "b"));
    if (g("On", "a", "b")) {
      ASSERT_TRUE(g("Under", "b", "a"));
    }
    left += g("Left", "a", "b");
    front += g("InFront", "a", "b");
  }
  EXPECT_GT(left, 1000);
  EXPECT_GT(front, 1000);
}

TEST(GroundRelation, ClearIffNothingOnIt) {
  for (int i = 0; i < 500; ++i) {
    auto c = testing::random_lattice_config(900 + i);
    View v = testing::lattice_view(c);
    for (const auto& x : c.labels) {
      bool any = false;
      for (const auto& y : c.labels)
        if (y != x) any |= ground_relation("On", std::vector<std::string>{y, x}, v);
      ASSERT_EQ(ground_relation("Clear", std::vector<std::string>{x}, v), !any);
    }
  }
}

TEST(GroundRelation, Examples) {
  View v = one_pair({{0, 0, 1.0}, {0.2, 0.2, 1.05}}, {{-0.1, -0.1, 0}, {0.3, 0.3, 0.99}},
                    "brush", "ladder");
  EXPECT_TRUE(ground_relation("On", std::vector<std::string>{"brush", "ladder"}, v));
  EXPECT_FALSE(ground_relation("On", std::vector<std::string>{"ladder", "brush"}, v));

  View far = one_pair(Box::around({0, 0, 0}, {0.1, 0.1, 0.1}),
                      Box::around({5, 0, 0}, {0.1, 0.1, 0.1}));
  EXPECT_FALSE(ground_relation("CloseTo", std::vector<std::string>{"a", "b"}, far));

  View in = one_pair(Box::around({0, 0, 0}, {0.05, 0.05, 0.05}),
                     Box::around({0, 0, 0}, {0.3, 0.3, 0.3}), "screws", "box");
  EXPECT_TRUE(ground_relation("Inside", std::vector<std::string>{"screws", "box"}, in));
  EXPECT_FALSE(ground_relation("Empty", std::vector<std::string>{"box"}, in));

  EXPECT_THROW(ground_relation("Levitating", std::vector<std::string>{"a"}, far),
               UnknownPredicate);
  EXPECT_THROW(ground_relation("On", std::vector<std::string>{"a"}, far), TypeError);
  // an argument the view does not contain makes the relation false
  EXPECT_FALSE(ground_relation("CloseTo", std::vector<std::string>{"a", "zzz"}, far));
}

TEST(GroundRelation, ProprioceptionAndAttributes) {
  View v;
  v.robot.vision_on = true;
  v.robot.head = "down";
  PerceivedObject d{"diverter", Box::around({1, 0, 0}, {0.1, 0.1, 0.1}), 0.9, {"dirty"}};
  v.objects.push_back(d);
  auto g = [&](const char* p, const char* a) {
    return ground_relation(p, std::vector<std::string>{a}, v);
  };
  EXPECT_TRUE(g("VisionOn", "robot"));
  EXPECT_TRUE(g("HeadDown", "robot_head"));
  EXPECT_FALSE(g("HeadUp", "robot_head"));
  EXPECT_TRUE(g("Dirty", "diverter"));
  EXPECT_FALSE(g("Clean", "diverter"));
  EXPECT_TRUE(g("Detected", "diverter"));
  v.objects[0].confidence = 0.7;
  EXPECT_FALSE(g("Detected", "diverter"));  // strictly above mu
}

// Detector --------------------------------------------------------------------

TEST(DetectBatch, PerfectDetectorSeesEverythingInView) {
  Scene s = brush_on_ladder();
  s.objects.push_back(obj("wrench", {-2, -0.1, 1.0}, {-1.8, 0.1, 1.1}));  // behind
  s.objects.push_back(obj("cart", {4.0, -0.2, 0.8}, {4.4, 0.2, 1.2}));   // too far
  DetectorModel m;
  auto d = detect_batch(s, s.camera, m);
  ASSERT_EQ(d.size(), 2u);
  for (const auto& x : d) {
    EXPECT_DOUBLE_EQ(x.confidence, 1.0);
    EXPECT_EQ(x.label, x.source);
  }
  EXPECT_THROW(detect_batch(s, s.camera, m, 0), Error);
}

// Probability that the true label wins the plurality outright (lo) or at
// least ties for it (hi), for n frames, perfect recall, confusion c spread
// uniformly over k other classes.
std::pair<double, double> plurality_oracle(int n, double c, int k) {
  auto choose = [](int a, int b) {
    double r = 1;
    for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return r;
  };
  // P(max of a uniform multinomial over k cells with m trials <= cap)
  auto max_at_most = [&](int m, int cap) {
    std::vector<double> ways(m + 1, 0.0);
    ways[0] = 1;
    for (int cell = 0; cell < k; ++cell) {
      std::vector<double> next(m + 1, 0.0);
      for (int used = 0; used <= m; ++used)
        for (int x = 0; x <= std::min(cap, m - used); ++x)
          next[used + x] += ways[used] * choose(m - used, x);
      ways = next;
    }
    return ways[m] / std::pow(k, m);
  };
  double lo = 0, hi = 0;
  for (int t = 0; t <= n; ++t) {
    double pt = choose(n, t) * std::pow(1 - c, t) * std::pow(c, n - t);
    if (t > 0) lo += pt * max_at_most(n - t, t - 1);
    hi += pt * max_at_most(n - t, t);
  }
  return {lo, hi};
}

TEST(DetectBatch, MajorityVoteMatchesMultinomialOracle) {
  const int trials = 1000, k_other = 9;
  auto [lo, hi] = plurality_oracle(10, 0.3, k_other);
  int correct = 0;
  for (int i = 0; i < trials; ++i) {
    Scene s = brush_on_ladder();
    s.objects.erase(s.objects.begin());  // brush alone
    DetectorModel m;
    m.confusion = 0.3;
    m.classes = {"brush", "wrench", "hammer", "pliers", "scissors",
                 "drill", "sponge", "tape",   "knife",  "cloth"};
    m.seed = 1000 + i;
    auto d = detect_batch(s, s.camera, m, 10);
    correct += d.size() == 1 && d[0].label == "brush";
  }
  double p = double(correct) / trials;
  double sigma = std::sqrt(hi * (1 - hi) / trials) + 1e-3;
  EXPECT_GE(p, lo - 3 * sigma);
  EXPECT_LE(p, hi + 3 * sigma);
  EXPECT_GE(p, 0.95);
}

TEST(DetectBatch, VotingNeverHurts) {
  for (double tp : {0.6, 0.8, 1.0})
    for (double c : {0.0, 0.1, 0.3, 0.5}) {
      int ok1 = 0, ok10 = 0;
      for (int i = 0; i < 1000; ++i) {
        Scene s = brush_on_ladder();
        DetectorModel m;
        m.tp_rate = tp;
        m.confusion = c;
        m.classes = {"brush", "ladder", "wrench", "hammer", "pliers", "tape"};
        m.seed = 77 * i + 1;
        for (int n : {1, 10}) {
          auto d = detect_batch(s, s.camera, m, n);
          bool ok = std::any_of(d.begin(), d.end(), [](const Detection& x) {
            return x.source == "brush" && x.label == "brush";
          });
          (n == 1 ? ok1 : ok10) += ok;
        }
      }
      EXPECT_GE(ok10, ok1) << "tp " << tp << " confusion " << c;
    }
}

// Depth -----------------------------------------------------------------------

TEST(EstimateDepth, ExactWithoutNoise) {
  Scene s = empty_scene();
  s.objects.push_back(obj("box", {1.2, -0.1, -0.1}, {1.4, 0.1, 0.1}));
  DetectorModel m;
  m.mask_sigma = 0;
  auto d = detect_batch(s, s.camera, m);
  ASSERT_EQ(d.size(), 1u);
  std::mt19937_64 rng(1);
  EXPECT_NEAR(estimate_depth(d[0], s, s.camera, m, rng), 1.2, 1e-6);
}

TEST(EstimateDepth, ForegroundMaskRejectsBackground) {
  Scene s = empty_scene();
  s.objects.push_back(obj("brush", {1.0, 0.15, -0.25}, {1.1, 0.35, 0.05}));
  s.objects.push_back(obj("shelf", {3.0, -1.5, -1.0}, {3.3, 1.5, 1.0}));
  DetectorModel m;
  auto d = detect_batch(s, s.camera, m);
  ASSERT_EQ(d.size(), 1u);  // the shelf is beyond reliable depth
  ASSERT_EQ(d[0].source, "brush");
  for (int seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    m.mask_sigma = 0.1;
    double z = estimate_depth(d[0], s, s.camera, m, rng);
    ASSERT_NEAR(z, 1.0, 0.02);
  }
  // without the mask, background pixels can only push the estimate back
  std::mt19937_64 rng(3);
  DepthConfig unmasked;
  unmasked.mode = DepthMode::unmasked;
  EXPECT_GE(estimate_depth(d[0], s, s.camera, m, rng, unmasked), 1.0 - 1e-6);
}

TEST(EstimateDepth, NoForegroundWhenMasked) {
  Scene s = empty_scene();
  s.objects.push_back(obj("box", {1.2, -0.1, -0.1}, {1.4, 0.1, 0.1}));
  DetectorModel m;
  m.mask_dropout = 0.99;
  auto d = detect_batch(s, s.camera, m);
  std::mt19937_64 rng(1);
  EXPECT_THROW(estimate_depth(d[0], s, s.camera, m, rng), NoForeground);
}

TEST(EstimateDepth, DepthNoiseIsUnbiased) {
  Scene s = empty_scene();
  s.objects.push_back(obj("box", {1.2, -0.1, -0.1}, {1.4, 0.1, 0.1}));
  DetectorModel m;
  m.depth_sigma = 0.05;
  m.mask_sigma = 0;
  auto d = detect_batch(s, s.camera, m);
  std::mt19937_64 rng(9);
  double sum = 0;
  for (int i = 0; i < 2000; ++i) sum += estimate_depth(d[0], s, s.camera, m, rng);
  EXPECT_NEAR(sum / 2000, 1.2, 4 * 0.05 / std::sqrt(2000.0));
}

// Perception ------------------------------------------------------------------

TEST(Perceive, ZeroNoiseRecoversBoxes) {
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> U(-0.5, 0.5), E(0.05, 0.3);
    Scene s = empty_scene();
    s.camera.position = {0, 0, 1.2};
    s.camera.pitch = deg2rad(-20);
    s.camera.yaw = U(g);
    const char* names[] = {"brush", "panel", "box", "cart"};
    for (int i = 0; i < 4; ++i) {
      // spread laterally so nothing occludes
      Vec3 c{1.2 + 0.2 * i, -0.9 + 0.6 * i, 0.3 + 0.1 * U(g)};
      s.objects.push_back(
          {names[i], names[i], Box::around(c, {E(g), E(g), E(g)}), {}, {}, false});
    }
    for (auto& o : s.objects) {
      Vec3 c = o.box.center();
      Vec3 d = c - s.camera.position;
      ASSERT_GT(d.dot(s.camera.forward()), 0);
    }
    DetectorModel m;
    m.mask_sigma = 0;
    std::mt19937_64 rng(seed);
    View v = perceive(s, s.camera, m, rng);
    View t = truth_view(s);
    for (const auto& o : s.objects) {
      if (!s.camera.sees(o.box.center())) continue;
      const PerceivedObject* p = v.find(o.label);
      ASSERT_NE(p, nullptr) << o.label;
      EXPECT_LT((p->box.center() - o.box.center()).norm(), 2e-3) << o.label;
    }
  }
}

TEST(Perceive, SelfObjectsAreKnownExactly) {
  Scene s = brush_on_ladder();
  SceneObject hand = obj("robot_hand", {0.3, -0.05, 0.9}, {0.4, 0.05, 1.0});
  hand.self = true;
  s.objects.push_back(hand);
  s.objects.push_back(obj("wrench", {0.33, -0.02, 0.93}, {0.37, 0.02, 0.97}));
  s.attachments.push_back({"robot_hand", "wrench"});
  DetectorModel m;
  m.tp_rate = 0;  // blind detector
  std::mt19937_64 rng(1);
  View v = perceive(s, s.camera, m, rng);
  ASSERT_NE(v.find("robot_hand"), nullptr);
  ASSERT_NE(v.find("wrench"), nullptr);
  EXPECT_EQ(v.find("ladder"), nullptr);
  EXPECT_TRUE(ground_relation("Holding", std::vector<std::string>{"robot_hand", "wrench"}, v));
  EXPECT_FALSE(ground_relation("Free", std::vector<std::string>{"robot_hand"}, v));
}

TEST(Perceive, AblationsDegradeGrounding) {
  double full = evaluate_ablation(Ablation::full, 150, 3).mean_accuracy();
  double shape = evaluate_ablation(Ablation::no_shape, 150, 3).mean_accuracy();
  double depth = evaluate_ablation(Ablation::no_depth, 150, 3).mean_accuracy();
  EXPECT_GT(full, shape);
  EXPECT_GT(shape, depth);
  EXPECT_GT(full, 0.8);
}

// Vision queries ----------------------------------------------------------------

TEST(QueryVision, ConformingSceneHolds) {
  Scene s = brush_on_ladder();
  DetectorModel m;
  std::mt19937_64 rng(1);
  State q = parse_state("Detected(brush) Detected(ladder) On(brush, ladder)");
  auto r = query_vision(q, s, s.camera, m, rng, 0.7, 3);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.boxes.size(), 2u);
  EXPECT_EQ(r.search_steps, 0);
  EXPECT_GT(r.depths.at("brush"), 0);
}

TEST(QueryVision, MissingTermTimesOut) {
  Scene s = brush_on_ladder();
  DetectorModel m;
  std::mt19937_64 rng(1);
  auto r = query_vision(parse_state("Detected(wrench)"), s, s.camera, m, rng, 0.7, 3);
  EXPECT_FALSE(r.ok);
  EXPECT_TRUE(r.boxes.empty());
  EXPECT_EQ(r.depths.at(""), -1.0);
  EXPECT_EQ(r.search_steps, 3);
  EXPECT_EQ(r.reason, "timeout");
}

TEST(QueryVision, SearchTurnsTowardsHiddenObject) {
  Scene s = brush_on_ladder();
  s.objects.push_back(obj("wrench", {-1.6, -0.1, 0.9}, {-1.4, 0.1, 1.0}));
  DetectorModel m;
  std::mt19937_64 rng(1);
  auto r = query_vision(parse_state("Detected(wrench)"), s, s.camera, m, rng, 0.7, 8);
  EXPECT_TRUE(r.ok);
  EXPECT_GE(r.search_steps, 1);
  EXPECT_TRUE(r.camera.sees({-1.5, 0, 0.95}));
}

TEST(QueryVision, FalseRelationAndEmptyQuery) {
  Scene s = brush_on_ladder();
  DetectorModel m;
  std::mt19937_64 rng(1);
  auto r = query_vision(parse_state("Clear(ladder)"), s, s.camera, m, rng, 0.7, 3);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.reason, "relation");
  auto e = query_vision(State{}, s, s.camera, m, rng, 0.7, 3);
  EXPECT_TRUE(e.ok);
  EXPECT_TRUE(e.boxes.empty());
  EXPECT_TRUE(e.depths.empty());
}

// Scene files -----------------------------------------------------------------

TEST(SceneFile, RoundTrip) {
  Scene s = overlap_scene(4);
  s.attachments.push_back({s.objects[1].id, s.objects[2].id});
  Scene back = scene_from_json(scene_to_json(s));
  EXPECT_EQ(scene_to_json(back).dump(), scene_to_json(s).dump());
}

TEST(SceneFile, RejectsInvalidScenes) {
  auto base = [] { return scene_to_json(brush_on_ladder()); };
  json j = base();
  j["objects"][0]["supported_by"] = "brush";  // ladder <-> brush
  EXPECT_THROW(scene_from_json(j), SceneError);
  j = base();
  j["attachments"] = json::array({{{"hand", "robot_hand"}, {"object", "brush"}}});
  EXPECT_THROW(scene_from_json(j), SceneError);
  j = base();
  j["objects"][0]["max"][2] = 0.0;
  EXPECT_THROW(scene_from_json(j), SceneError);
  j = base();
  j["camera"]["hfov_deg"] = 180;
  EXPECT_THROW(scene_from_json(j), SceneError);
  j = base();
  j["objects"].push_back(j["objects"][0]);
  EXPECT_THROW(scene_from_json(j), SceneError);
  EXPECT_THROW(scene_from_json(json::object()), SceneError);
}

TEST(DetectorFile, RejectsRatesOutsideUnitInterval) {
  EXPECT_THROW(detector_from_json({{"tp_rate", 1.5}}), SceneError);
  EXPECT_THROW(detector_from_json({{"class_tp", {{"brush", -0.1}}}}), SceneError);
  EXPECT_EQ(detector_from_json({{"confusion", 0.2}}).confusion, 0.2);
}

}  // namespace
}  // namespace vdem
