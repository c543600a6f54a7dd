#include "cmta/envs.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace cmta;
using envs::Env;
using envs::TaskKind;
using envs::TaskSpec;
using envs::Vec2;

TEST(Suite, RegistrationCounts) {
  auto f3 = envs::register_suite("MT3-Fixed");
  ASSERT_EQ(f3.size(), 3u);
  for (auto& s : f3) EXPECT_EQ(s.variant_positions.size(), 1u);
  EXPECT_EQ(f3[0].name, "reach");
  EXPECT_EQ(f3[1].name, "push");
  EXPECT_EQ(f3[2].name, "pick-lite");

  auto m3 = envs::register_suite("MT3-Mixed");
  ASSERT_EQ(m3.size(), 3u);
  for (auto& s : m3) EXPECT_EQ(s.variant_positions.size(), 50u);

  auto m5 = envs::register_suite("MT5-Mixed");
  ASSERT_EQ(m5.size(), 5u);
  EXPECT_EQ(m5[3].name, "reach-wall");
  EXPECT_EQ(m5[4].name, "push-back");

  EXPECT_THROW(envs::register_suite("MT9-Fixed"), std::invalid_argument);
}

TEST(Suite, FixedVariantIsFirstMixedVariant) {
  auto fixed = envs::register_suite("MT5-Fixed");
  auto mixed = envs::register_suite("MT5-Mixed");
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    EXPECT_TRUE(fixed[i].variant_positions[0].first == mixed[i].variant_positions[0].first);
    EXPECT_TRUE(fixed[i].variant_positions[0].second == mixed[i].variant_positions[0].second);
  }
}

TEST(Suite, RegenerationIsIdentical) {
  auto a = envs::register_suite("MT3-Mixed");
  auto b = envs::register_suite("MT3-Mixed");
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t v = 0; v < 50; ++v) {
      EXPECT_TRUE(a[i].variant_positions[v].first == b[i].variant_positions[v].first);
      EXPECT_TRUE(a[i].variant_positions[v].second == b[i].variant_positions[v].second);
    }
}

TEST(Env, ObservationLayoutAndPadding) {
  auto specs = envs::register_suite("MT3-Fixed");
  Env reach(specs[0], 150);
  Eigen::VectorXd obs = reach.reset(0);
  ASSERT_EQ(obs.size(), 8);
  // Reach has no object: slot [4,5] stays zero.
  EXPECT_DOUBLE_EQ(obs(4), 0.0);
  EXPECT_DOUBLE_EQ(obs(5), 0.0);
  // Agent starts at origin at rest.
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(obs(i), 0.0);
  // Goal slot holds the variant goal.
  EXPECT_DOUBLE_EQ(obs(6), specs[0].variant_positions[0].second.x());
  EXPECT_DOUBLE_EQ(obs(7), specs[0].variant_positions[0].second.y());

  Env push(specs[1], 150);
  Eigen::VectorXd pobs = push.reset(0);
  EXPECT_DOUBLE_EQ(pobs(4), specs[1].variant_positions[0].first.x());
  EXPECT_DOUBLE_EQ(pobs(5), specs[1].variant_positions[0].first.y());
}

TEST(Env, ResetRejectsBadVariant) {
  auto specs = envs::register_suite("MT3-Fixed");
  Env env(specs[0], 150);
  EXPECT_THROW(env.reset(1), std::invalid_argument);
}

TEST(Env, OneStepDynamicsHandComputed) {
  auto specs = envs::register_suite("MT3-Fixed");
  Env env(specs[0], 150);
  env.reset(0);
  auto r = env.step(Vec2(1.0, -0.5));
  // vel = 0.9*0 + 0.1*a, pos = 0 + 0.05*vel
  EXPECT_NEAR(env.state().agent_vel.x(), 0.1, 1e-15);
  EXPECT_NEAR(env.state().agent_vel.y(), -0.05, 1e-15);
  EXPECT_NEAR(env.state().agent_pos.x(), 0.005, 1e-15);
  EXPECT_NEAR(env.state().agent_pos.y(), -0.0025, 1e-15);
  EXPECT_NEAR(r.reward, -(env.state().agent_pos - specs[0].variant_positions[0].second).norm(),
              1e-15);
  EXPECT_FALSE(r.done);
}

TEST(Env, ActionsAreClampedToUnitBox) {
  auto specs = envs::register_suite("MT3-Fixed");
  Env a(specs[0], 150), b(specs[0], 150);
  a.reset(0);
  b.reset(0);
  a.step(Vec2(50.0, -50.0));
  b.step(Vec2(1.0, -1.0));
  EXPECT_TRUE(a.state().agent_pos == b.state().agent_pos);
  EXPECT_THROW(a.step(Vec2(std::nan(""), 0.0)), std::invalid_argument);
}

TEST(Env, ZeroActionIsFixedPoint) {
  auto specs = envs::register_suite("MT3-Fixed");
  Env env(specs[0], 150);
  env.reset(0);
  for (int i = 0; i < 20; ++i) env.step(Vec2::Zero());
  EXPECT_DOUBLE_EQ(env.state().agent_pos.norm(), 0.0);
  EXPECT_DOUBLE_EQ(env.state().agent_vel.norm(), 0.0);
}

TEST(Env, StepIsDeterministic) {
  auto specs = envs::register_suite("MT3-Fixed");
  Env a(specs[1], 150), b(specs[1], 150);
  a.reset(0);
  b.reset(0);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Vec2 act(rng.uniform(-1, 1), rng.uniform(-1, 1));
    auto ra = a.step(act);
    auto rb = b.step(act);
    EXPECT_TRUE(ra.observation == rb.observation);
    EXPECT_DOUBLE_EQ(ra.reward, rb.reward);
    EXPECT_EQ(ra.done, rb.done);
  }
}

TEST(Env, GoalAtStartSucceedsImmediately) {
  TaskSpec spec;
  spec.name = "reach-origin";
  spec.kind = TaskKind::Reach;
  spec.variant_positions = {{Vec2::Zero(), Vec2::Zero()}};
  Env env(spec, 150);
  env.reset(0);
  auto r = env.step(Vec2::Zero());
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(r.done);
  EXPECT_FALSE(r.timeout);
}

TEST(Env, TimeoutIsNotTerminalSuccess) {
  auto specs = envs::register_suite("MT3-Fixed");
  Env env(specs[0], 5);
  env.reset(0);
  envs::StepResult r;
  for (int i = 0; i < 5; ++i) r = env.step(Vec2::Zero());
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.timeout);
  EXPECT_FALSE(r.success);
}

TEST(Env, SuccessIsLatched) {
  TaskSpec spec;
  spec.name = "reach-near";
  spec.kind = TaskKind::Reach;
  spec.variant_positions = {{Vec2::Zero(), Vec2(0.01, 0.0)}};
  Env env(spec, 150);
  env.reset(0);
  auto r = env.step(Vec2(-1.0, 0.0));  // moving away, but already within radius
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(env.state().success_latched);
}

TEST(Env, RewardIsBoundedByArenaDiameter) {
  auto specs = envs::register_suite("MT3-Mixed");
  Rng rng(17);
  for (auto& spec : specs) {
    Env env(spec, 60);
    env.reset_random(rng);
    for (int i = 0; i < 60; ++i) {
      auto r = env.step(Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1)));
      EXPECT_LE(r.reward, 0.0);
      EXPECT_GE(r.reward, -2.0 * std::sqrt(2.0));
      if (r.done) break;
    }
  }
}

TEST(Env, PhaseFlipsAtFirstContact) {
  auto specs = envs::register_suite("MT3-Fixed");
  Env env(specs[1], 400);  // push
  env.reset(0);
  EXPECT_EQ(env.state().phase, 0);
  int flipped_at = -1;
  for (int i = 0; i < 400; ++i) {
    // Contact is tested against the object position before it is pushed, so
    // record the pre-step distance for the flip check.
    const double d_before = (env.state().agent_pos - env.state().object_pos).norm();
    const envs::Vec2 agent_before = env.state().agent_pos;
    env.step(envs::scripted_action(env));
    if (flipped_at < 0 && env.state().phase == 1) {
      flipped_at = i;
      // The agent was approaching: either it was already within the contact
      // radius or this step's motion brought it inside.
      const double step_len = (env.state().agent_pos - agent_before).norm();
      EXPECT_LT(d_before, envs::kContactRadius + step_len + 1e-12);
    }
    if (flipped_at >= 0) EXPECT_EQ(env.state().phase, 1);  // never reverts
    if (env.state().success_latched) break;
  }
  EXPECT_GE(flipped_at, 0);
}

TEST(Env, PickLiteObjectFollowsAfterAttach) {
  auto specs = envs::register_suite("MT3-Fixed");
  Env env(specs[2], 400);  // pick-lite
  env.reset(0);
  bool attached_seen = false;
  Vec2 prev_agent = env.state().agent_pos, prev_obj = env.state().object_pos;
  for (int i = 0; i < 400 && !env.state().success_latched; ++i) {
    env.step(envs::scripted_action(env));
    if (env.state().attached) {
      attached_seen = true;
      const Vec2 agent_delta = env.state().agent_pos - prev_agent;
      const Vec2 obj_delta = env.state().object_pos - prev_obj;
      EXPECT_LT((agent_delta - obj_delta).norm(), 1e-12);
    }
    prev_agent = env.state().agent_pos;
    prev_obj = env.state().object_pos;
  }
  EXPECT_TRUE(attached_seen);
}

TEST(Env, ScriptedOracleSolvesFixedSuite) {
  auto specs = envs::register_suite("MT3-Fixed");
  for (auto& spec : specs) {
    Env env(spec, 400);
    env.reset(0);
    bool solved = false;
    for (int i = 0; i < 400; ++i) {
      auto r = env.step(envs::scripted_action(env));
      if (r.success) {
        solved = true;
        break;
      }
    }
    EXPECT_TRUE(solved) << spec.name;
  }
}

TEST(Env, ScriptedOracleSolvesFixedReachQuickly) {
  auto specs = envs::register_suite("MT3-Fixed");
  Env env(specs[0], 150);
  env.reset(0);
  int steps = 0;
  for (; steps < 150; ++steps)
    if (env.step(envs::scripted_action(env)).success) break;
  EXPECT_LT(steps, 60);
}

TEST(Env, MixedResetCoversVariants) {
  auto specs = envs::register_suite("MT3-Mixed");
  Env env(specs[0], 150);
  Rng rng(5);
  std::set<double> goals_seen;
  for (int i = 0; i < 1000; ++i) {
    env.reset_random(rng);
    goals_seen.insert(env.state().goal_pos.x());
  }
  EXPECT_GE(goals_seen.size(), 45u);  // near-complete coverage of the 50 variants
}

TEST(Env, WallBlocksStraightLinePath) {
  auto specs = envs::register_suite("MT5-Fixed");
  Env env(specs[3], 300);  // reach-wall, goal beyond x = kWallX with |y| small
  env.reset(0);
  ASSERT_GT(env.state().goal_pos.x(), envs::kWallX);
  // Drive straight at the goal; wall must stop the crossing.
  for (int i = 0; i < 300; ++i) {
    const Vec2 err = env.state().goal_pos - env.state().agent_pos;
    Vec2 a = 8.0 * err - 2.0 * env.state().agent_vel;
    auto r = env.step(Vec2(std::clamp(a.x(), -1.0, 1.0), std::clamp(a.y(), -1.0, 1.0)));
    EXPECT_LE(env.state().agent_pos.x(), envs::kWallX + 1e-12);
    if (r.done) break;
  }
  EXPECT_FALSE(env.state().success_latched);
}

TEST(Env, ManifestWritesAllVariants) {
  auto specs = envs::register_suite("MT3-Mixed");
  const std::string path = "/tmp/cmta_manifest_test.txt";
  envs::write_manifest(specs, path);
  std::ifstream in(path);
  ASSERT_TRUE(in.good());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_NE(content.find("tasks = 3"), std::string::npos);
  EXPECT_NE(content.find("[task.2]"), std::string::npos);
  EXPECT_NE(content.find("variants = 50"), std::string::npos);
  EXPECT_NE(content.find("variant.49 = "), std::string::npos);
}
