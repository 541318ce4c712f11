#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "nnod/race.hpp"

using namespace nnod;

namespace {

RaceLog log_with(double lead, Termination reason) {
  RaceLog l;
  l.final_progress = {lead, 0.0};
  l.reason = reason;
  return l;
}

RacingGame oval_game(int horizon = 10) {
  RacingConfig c;
  c.horizon = horizon;
  return RacingGame(std::make_shared<const Track>(make_oval_track()), c);
}

RacingGame straight_game() {
  RacingConfig c;
  c.horizon = 6;
  return RacingGame(std::make_shared<const Track>(make_straight_track(400.0, 6.0)), c);
}

}  // namespace

TEST(Metrics, HandComputedExample) {
  // Leads +10 and -4, both safe: SR 100, OR 50, AELD 3 +- 7.
  const RaceMetrics m = compute_metrics({log_with(10.0, Termination::kTimeLimit), log_with(-4.0, Termination::kTimeLimit)});
  EXPECT_EQ(m.n_trial, 2);
  EXPECT_EQ(m.n_safe, 2);
  EXPECT_EQ(m.n_overtake, 1);
  EXPECT_EQ(m.safe_rate, 100.0);
  EXPECT_EQ(m.overtake_rate, 50.0);
  EXPECT_EQ(m.lead_mean, 3.0);
  EXPECT_EQ(m.lead_std, 7.0);
}

TEST(Metrics, UnsafeLeaderDoesNotCountAsOvertake) {
  const RaceMetrics m = compute_metrics({log_with(5.0, Termination::kCollision), log_with(2.0, Termination::kFinished),
                                         log_with(0.0, Termination::kTimeLimit), log_with(9.0, Termination::kAborted)});
  EXPECT_EQ(m.n_safe, 2);
  EXPECT_EQ(m.n_overtake, 1);  // a zero lead is not ahead
  EXPECT_EQ(m.safe_rate, 50.0);
  EXPECT_EQ(m.overtake_rate, 25.0);
  EXPECT_EQ(m.lead_mean, 4.0);
}

TEST(Metrics, EmptyInputIsRejected) { EXPECT_THROW(compute_metrics({}), std::invalid_argument); }

TEST(Metrics, IdentitiesOnRandomLogSets) {
  Rng rng(2024);
  const Termination kinds[] = {Termination::kTimeLimit, Termination::kCollision, Termination::kOffTrack,
                               Termination::kAborted, Termination::kFinished};
  for (int set = 0; set < 1000; ++set) {
    const int n = 1 + static_cast<int>(rng.below(40));
    std::vector<RaceLog> logs;
    std::vector<double> leads;
    int safe = 0, ahead = 0;
    for (int i = 0; i < n; ++i) {
      const double lead = rng.uniform(-30.0, 30.0);
      const Termination r = kinds[rng.below(5)];
      logs.push_back(log_with(lead, r));
      leads.push_back(lead);
      const bool s = r == Termination::kTimeLimit || r == Termination::kFinished;
      safe += s ? 1 : 0;
      ahead += s && lead > 0.0 ? 1 : 0;
    }
    const RaceMetrics m = compute_metrics(logs);
    ASSERT_EQ(m.n_trial, n);
    EXPECT_EQ(m.n_safe, safe);
    EXPECT_EQ(m.n_overtake, ahead);
    EXPECT_LE(m.n_overtake, m.n_safe);
    EXPECT_LE(m.n_safe, m.n_trial);
    EXPECT_NEAR(m.safe_rate, 100.0 * safe / n, 1e-12);
    EXPECT_NEAR(m.overtake_rate, 100.0 * ahead / n, 1e-12);
    EXPECT_LE(m.overtake_rate, m.safe_rate);

    double s1 = 0.0, s2 = 0.0;
    for (double l : leads) {
      s1 += l;
      s2 += l * l;
    }
    const double mean = s1 / n;
    EXPECT_NEAR(m.lead_mean, mean, 1e-10);
    EXPECT_GE(m.lead_std, 0.0);
    EXPECT_NEAR(m.lead_std * m.lead_std, std::max(0.0, s2 / n - mean * mean), 1e-8);
    EXPECT_GE(m.lead_mean, *std::min_element(leads.begin(), leads.end()) - 1e-12);
    EXPECT_LE(m.lead_mean, *std::max_element(leads.begin(), leads.end()) + 1e-12);

    // Order does not matter; a common shift moves only the mean.
    std::vector<RaceLog> perm(logs.rbegin(), logs.rend());
    const RaceMetrics mp = compute_metrics(perm);
    EXPECT_EQ(mp.n_safe, m.n_safe);
    EXPECT_EQ(mp.n_overtake, m.n_overtake);
    EXPECT_NEAR(mp.lead_mean, m.lead_mean, 1e-10);
    EXPECT_NEAR(mp.lead_std, m.lead_std, 1e-10);
    std::vector<RaceLog> shifted = logs;
    for (auto& l : shifted) l.final_progress[1] -= 2.5;
    const RaceMetrics ms = compute_metrics(shifted);
    EXPECT_NEAR(ms.lead_mean, m.lead_mean + 2.5, 1e-10);
    EXPECT_NEAR(ms.lead_std, m.lead_std, 1e-9);
  }
}

TEST(Race, ZeroStepLimitReturnsTheInitialState) {
  const RacingGame game = straight_game();
  const Vec<double> x0 = joint_state_on_track(game.track(), 10.0, 15.0, 0.0, 0.0, 5.0, 5.0);
  ConstantPolicy a, b;
  const RaceLog log = run_race(a, b, game, x0, 0);
  EXPECT_EQ(log.steps(), 0);
  ASSERT_EQ(log.states.size(), 1u);
  EXPECT_EQ(log.states[0], x0);
  EXPECT_EQ(log.reason, Termination::kTimeLimit);
  EXPECT_NEAR(log.final_lead(), -15.0, 1e-9);
  EXPECT_THROW(run_race(a, b, game, x0, -1), std::invalid_argument);
}

TEST(Race, ParkedCarsStayPut) {
  const RacingGame game = straight_game();
  const Vec<double> x0 = joint_state_on_track(game.track(), 10.0, 30.0, 1.0, -1.0, 0.0, 0.0);
  ConstantPolicy a, b;
  const RaceLog log = run_race(a, b, game, x0, 50);
  EXPECT_EQ(log.steps(), 50);
  EXPECT_EQ(log.reason, Termination::kTimeLimit);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(log.states.back()[j], x0[j], 1e-12);
  EXPECT_NEAR(log.final_lead(), -30.0, 1e-9);
  const RaceMetrics m = compute_metrics({log});
  EXPECT_EQ(m.safe_rate, 100.0);
  EXPECT_EQ(m.overtake_rate, 0.0);
}

TEST(Race, HeadOnCarsCollide) {
  const RacingGame game = straight_game();
  Vec<double> x0 = joint_state_on_track(game.track(), 50.0, 40.0, 0.0, 0.0, 10.0, 10.0);
  x0[6] += std::numbers::pi;  // rival faces the ego
  ConstantPolicy a, b;
  const RaceLog log = run_race(a, b, game, x0, 100);
  EXPECT_EQ(log.reason, Termination::kCollision);
  EXPECT_FALSE(log.safe());
  // Closing speed 20 m/s from 40 m; contact below twice the disc radius.
  const double contact = 40.0 - 2.0 * game.config().disc_radius();
  EXPECT_EQ(log.steps(), static_cast<int>(std::floor(contact / (20.0 * game.config().dt))) + 1);
}

TEST(Race, SteeringHardLeavesTheTrack) {
  const RacingGame game = straight_game();
  const Vec<double> x0 = joint_state_on_track(game.track(), 10.0, 100.0, 0.0, 0.0, 10.0, 0.0);
  ConstantPolicy ego(0.0, game.config().steer_max), rival;
  const RaceLog log = run_race(ego, rival, game, x0, 200);
  EXPECT_EQ(log.reason, Termination::kOffTrack);
  EXPECT_EQ(compute_metrics({log}).n_safe, 0);
}

TEST(Race, GamePolicyRaceIsDeterministic) {
  const RacingGame game = oval_game();
  const Vec<double> x0 = joint_state_on_track(game.track(), 0.0, 12.0, 0.0, 0.0, 10.0, 9.0);
  RolloutConfig rc;
  rc.adaptive_iterations = 10;
  auto once = [&] {
    GamePolicy ego(0, make_scripted_demonstrator(), game, rc);
    GamePolicy rival(1, make_static_model(rival_weights(RivalSpec{}, 1.0)), game, rc);
    return race_log_csv(run_race(ego, rival, game, x0, 30));
  };
  const std::string a = once();
  EXPECT_EQ(a, once());
  EXPECT_NE(a.find("step,xe,ye"), std::string::npos);
}

TEST(Trials, StreamsAreSeparatedAndWorkerCountIsIrrelevant) {
  const RacingGame game = oval_game();
  RolloutConfig rc;
  rc.adaptive_iterations = 10;
  const PolicyFactory ego = [&] { return std::make_unique<GamePolicy>(0, make_scripted_demonstrator(), game, rc); };
  TrialConfig c;
  c.n = 6;
  c.step_limit = 0;
  c.seed = 11;
  const TrialsResult a = randomized_trials(ego, game, rc, c);
  c.rival.block_range = {4.0, 16.0 / 3.0};
  const TrialsResult b = randomized_trials(ego, game, rc, c);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].x0, b.rows[i].x0);  // rival range does not move the starts
    EXPECT_GE(a.rows[i].block_weight, 0.0);
    EXPECT_LE(a.rows[i].block_weight, 2.0);
    EXPECT_GE(b.rows[i].block_weight, 4.0);
    EXPECT_LE(b.rows[i].block_weight, 16.0 / 3.0);
    EXPECT_GE(a.rows[i].gap0, c.initial.gap_min - 1e-6);
    EXPECT_LE(a.rows[i].gap0, c.initial.gap_max + 1e-6);
  }
  c.seed = 12;
  const TrialsResult other = randomized_trials(ego, game, rc, c);
  EXPECT_NE(other.rows[0].x0, b.rows[0].x0);

  c.seed = 11;
  c.n = 3;
  c.step_limit = 15;
  const std::string serial = trials_csv(randomized_trials(ego, game, rc, c));
  c.workers = 3;
  EXPECT_EQ(trials_csv(randomized_trials(ego, game, rc, c)), serial);
}

TEST(Endurance, NoRivalsMeansNoEvents) {
  const RacingGame game = oval_game();
  RolloutConfig rc;
  rc.adaptive_iterations = 10;
  GamePolicy ego(0, make_scripted_demonstrator(), game, rc);
  EnduranceConfig c;
  c.respawn_gap = 0.0;
  c.step_limit = 600;
  const EnduranceResult r = endurance_race(ego, game, rc, c);
  EXPECT_EQ(r.overtakes, 0);
  EXPECT_EQ(r.collisions, 0);
  EXPECT_TRUE(r.respawn_steps.empty());
  ASSERT_TRUE(r.finished) << to_string(r.log.reason) << " " << r.log.message;
  EXPECT_NEAR(r.lap_time, r.log.steps() * game.config().dt, 1e-12);
  EXPECT_GE(r.log.final_progress[0], game.track().length());
}

TEST(Endurance, ParkedRivalsAreCountedAndRespawned) {
  const RacingGame game = oval_game();
  RolloutConfig rc;
  rc.adaptive_iterations = 10;
  GamePolicy ego(0, make_scripted_demonstrator(), game, rc);
  EnduranceConfig c;
  c.rival_kind = RivalKind::kParked;
  c.step_limit = 150;
  c.seed = 3;
  const EnduranceResult r = endurance_race(ego, game, rc, c);
  EXPECT_EQ(static_cast<int>(r.respawn_steps.size()), r.overtakes + r.collisions);
  EXPECT_GT(r.overtakes + r.collisions, 0);
  for (int s : r.respawn_steps) {
    ASSERT_LT(static_cast<std::size_t>(s), r.log.states.size());
    const Vec<double>& x = r.log.states[static_cast<std::size_t>(s)];
    const double se = game.track().project(x[0], x[1]).s;
    const double sr = game.track().project(x[4], x[5]).s;
    EXPECT_NEAR(game.track().gap(sr, se), c.respawn_gap, 0.5);
    EXPECT_EQ(x[7], 0.0);
  }
  GamePolicy again(0, make_scripted_demonstrator(), game, rc);
  EXPECT_EQ(race_log_csv(endurance_race(again, game, rc, c).log), race_log_csv(r.log));
}

TEST(Endurance, OpenTrackIsRejected) {
  const RacingGame game = straight_game();
  RolloutConfig rc;
  ConstantPolicy ego;
  EXPECT_THROW(endurance_race(ego, game, rc, EnduranceConfig{}), std::invalid_argument);
}

TEST(Output, NumberFormatAndSvg) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(-3.0), "-3");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333");
  const RacingGame game = straight_game();
  ConstantPolicy a, b;
  const RaceLog log = run_race(a, b, game, joint_state_on_track(game.track(), 0.0, 20.0, 0.0, 0.0, 3.0, 2.0), 5);
  const std::string svg = render_svg(game.track(), race_traces(log));
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
