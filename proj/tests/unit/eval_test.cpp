#include <gtest/gtest.h>

#include <random>

#include "mgpms/error.hpp"
#include "mgpms/eval/metrics.hpp"
#include "mgpms/eval/report.hpp"
#include "oracles/pair_auc.hpp"

using namespace mgpms;
using namespace mgpms::eval;

TEST(FitLinear, ExactOnCollinearPoints) {
  const std::vector<double> x{1, 2, 3};
  const auto f = fit_linear(x, std::vector<double>{0.1, 0.2, 0.3});
  EXPECT_NEAR(f.slope, 0.1, 1e-12);
  EXPECT_NEAR(f.intercept, 0.0, 1e-12);
  EXPECT_EQ(fit_linear(x, std::vector<double>{0.4, 0.4, 0.4}).slope, 0.0);
}

TEST(FitLinear, ShiftChangesInterceptOnly) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n;
  std::vector<double> x, s, t;
  for (int i = 0; i < 12; ++i) {
    x.push_back(i * 4.0 + 2.0);
    s.push_back(n(gen));
    t.push_back(s.back() + 5.0);
  }
  const auto a = fit_linear(x, s), b = fit_linear(x, t);
  EXPECT_NEAR(a.slope, b.slope, 1e-12);
  EXPECT_NEAR(b.intercept - a.intercept, 5.0, 1e-12);
}

TEST(FitLinear, RejectsDegenerateInput) {
  EXPECT_THROW(fit_linear(std::vector<double>{1.0}, std::vector<double>{1.0}), DomainError);
  EXPECT_THROW(fit_linear(std::vector<double>{2, 2}, std::vector<double>{0, 1}), DomainError);
  EXPECT_THROW(fit_linear(std::vector<double>{1, 2}, std::vector<double>{0}), ShapeError);
}

TEST(TrajectoryMetrics, HandCases) {
  const std::vector<double> x{1, 2, 3};
  const auto linear = trajectory_metrics(x, std::vector<double>{0.1, 0.2, 0.3});
  EXPECT_NEAR(linear.robustness, 1.0, 1e-12);
  EXPECT_NEAR(linear.consistency, 0.1, 1e-12);
  const auto peak = trajectory_metrics(x, std::vector<double>{0, 1, 0});
  EXPECT_NEAR(peak.slope, 0.0, 1e-12);
  EXPECT_NEAR(peak.mse, 2.0 / 9.0, 1e-12);
  EXPECT_NEAR(peak.robustness, 7.0 / 11.0, 1e-12);
  const auto down = trajectory_metrics(x, std::vector<double>{0.3, 0.2, 0.1});
  EXPECT_NEAR(down.slope, -0.1, 1e-12);
  EXPECT_NEAR(down.consistency, 0.1, 1e-12);
}

TEST(TrajectoryMetrics, NormalizedScoresKeepRobustnessInRange) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u;
  std::vector<double> x;
  for (int j = 0; j < 17; ++j) x.push_back(4.0 * j + 2.0);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> s;
    for (int j = 0; j < 17; ++j) s.push_back(trial % 3 == 0 ? (u(gen) < 0.5 ? 0.0 : 1.0) : u(gen));
    const auto m = trajectory_metrics(x, s);
    EXPECT_LE(m.mse, 0.25);
    EXPECT_GE(m.robustness, 0.6 - 1e-15);
    EXPECT_LE(m.robustness, 1.0);
    EXPECT_GE(m.consistency, 0.0);
  }
}

TEST(MinMax, GlobalNormalizationKeepsSlopeSign) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n;
  std::vector<double> x;
  for (int j = 0; j < 8; ++j) x.push_back(j);
  std::vector<std::vector<double>> set;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> t;
    for (int j = 0; j < 8; ++j) t.push_back(3.0 * n(gen) + 0.5 * j * n(gen));
    set.push_back(t);
  }
  const auto mm = MinMax::fit(set);
  for (const auto& t : set) {
    const auto v = mm.apply(t);
    for (double e : v) {
      EXPECT_GE(e, 0.0);
      EXPECT_LE(e, 1.0);
    }
    const double before = fit_linear(x, t).slope, after = fit_linear(x, v).slope;
    EXPECT_EQ(before > 0, after > 0);
    EXPECT_NEAR(after, before / (mm.hi - mm.lo), 1e-12);
  }
  EXPECT_EQ((MinMax{2.0, 2.0}.apply(2.0)), 0.0);
}

TEST(Auc, SimpleCases) {
  EXPECT_EQ(auc(std::vector<int>{1, 0}, std::vector<double>{0.9, 0.1}), 1.0);
  EXPECT_EQ(auc(std::vector<int>{1, 0, 1, 0}, std::vector<double>{0.5, 0.5, 0.5, 0.5}), 0.5);
  EXPECT_EQ(auc(std::vector<int>{1, 0}, std::vector<double>{0.1, 0.9}), 0.0);
  EXPECT_THROW(auc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.9}), DomainError);
  EXPECT_THROW(auc(std::vector<int>{1, 2}, std::vector<double>{0.1, 0.9}), DomainError);
}

TEST(Auc, MatchesPairCountingOracleExactly) {
  std::mt19937_64 gen(4);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen() % 49;
    std::vector<int> labels(n);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(gen() % 2);
      // Coarse scores give plenty of ties.
      scores[i] = trial % 2 ? static_cast<double>(gen() % 5) / 4.0 : std::uniform_real_distribution<double>()(gen);
    }
    labels[0] = 1;
    labels[1] = 0;
    EXPECT_EQ(auc(labels, scores), oracle::pair_auc(labels, scores)) << trial;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(Auprc, PerfectAndHandComputed) {
  EXPECT_EQ(auprc(std::vector<int>{1, 1, 0, 0}, std::vector<double>{0.9, 0.8, 0.2, 0.1}), 1.0);
  const std::vector<int> labels{1, 0, 1, 1, 0, 0, 1, 0, 0, 0};
  std::vector<double> scores;
  for (int i = 0; i < 10; ++i) scores.push_back(1.0 - 0.1 * i);
  EXPECT_NEAR(auprc(labels, scores), (1.0 + 2.0 / 3.0 + 3.0 / 4.0 + 4.0 / 7.0) / 4.0, 1e-15);
  // Tied pair at the top: precision 1/2 over a recall step of 1/2, then 2/3.
  EXPECT_NEAR(auprc(std::vector<int>{1, 0, 1}, std::vector<double>{0.9, 0.9, 0.5}), 0.5 * 0.5 + 0.5 * 2.0 / 3.0,
              1e-15);
  EXPECT_THROW(auprc(std::vector<int>{0, 0}, std::vector<double>{0.1, 0.2}), DomainError);
}

TEST(Auprc, RandomScoresApproachPrevalence) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u;
  const std::size_t n = 40000;
  std::vector<int> labels(n);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = u(gen) < 0.1558;
    scores[i] = u(gen);
  }
  const double p = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / n;
  EXPECT_NEAR(auprc(labels, scores), p, 0.01);
}

namespace {

std::vector<Trajectory> ramp_set() {
  // Positives rise, negatives fall, with per-patient offsets.
  std::vector<Trajectory> set;
  for (int i = 0; i < 20; ++i) {
    Trajectory t{"P" + std::to_string(i), i % 4 == 0, {}};
    for (int j = 0; j < 17; ++j) {
      const double drift = (t.label ? 1.0 : -1.0) * 0.02 * j;
      t.scores.push_back(0.3 + 0.01 * i + drift);
    }
    if (i == 1) t.scores[0] = 0.7;  // a negative that outranks positives at admission
    set.push_back(t);
  }
  return set;
}

}  // namespace

TEST(Timepoints, WindowsAndTableShape) {
  const auto set = ramp_set();
  const auto r = evaluate_timepoints(set, data::CohortConfig{});
  ASSERT_EQ(r.size(), 5u);
  const std::vector<std::size_t> windows{1, 4, 7, 13, 17};
  const std::vector<std::string> names{"admission", "0.5d", "1d", "2d", "3d"};
  std::vector<int> labels;
  for (const auto& t : set) labels.push_back(t.label);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(r[k].window, windows[k]);
    EXPECT_EQ(r[k].name, names[k]);
    std::vector<double> s;
    for (const auto& t : set) s.push_back(t.scores[windows[k] - 1]);
    EXPECT_EQ(r[k].auc, auc(labels, s));
    EXPECT_EQ(r[k].auprc, auprc(labels, s));
  }
  EXPECT_LT(r[0].auc, r[4].auc);
  const auto csv = timepoints_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "metric,admission,0.5d,1d,2d,3d");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Summary, ClassCurvesMetricsAndHistogram) {
  const auto set = ramp_set();
  const auto grid = data::CohortConfig{}.grid();
  const auto s = trajectory_summary(set, grid);
  EXPECT_EQ(s.positive.mean.size(), 17u);
  EXPECT_EQ(s.positive.patients, 5u);
  EXPECT_EQ(s.negative.patients, 15u);
  EXPECT_GT(s.positive.mean_slope, 0.0);
  EXPECT_LT(s.negative.mean_slope, 0.0);
  std::size_t total = 0;
  for (std::size_t b = 0; b < s.bins; ++b) total += s.histogram_negative[b] + s.histogram_positive[b];
  EXPECT_EQ(total, set.size());
  const auto hist = histogram_csv(s);
  EXPECT_NE(hist.find("\n0,0.1,"), std::string::npos);
  EXPECT_NE(hist.find("0.9,1,"), std::string::npos);
  const auto curves = class_curves_csv(s);
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 1 + 2 * 17);
  const auto patients = patient_metrics_csv(s);
  EXPECT_EQ(patients.substr(0, patients.find('\n')), "patient_id,label,slope,consistency,mse,robustness");
  const auto summary = summary_json(s, evaluate_timepoints(set, data::CohortConfig{}));
  EXPECT_EQ(summary["auprc_estimator"], "average_precision");
  EXPECT_NE(class_curves_svg(s).find("<polyline"), std::string::npos);
}

TEST(ExternalTrajectories, RoundTripAndErrors) {
  std::vector<data::WindowedPatient> cohort(2);
  cohort[0].id = "a";
  cohort[0].label = 1;
  cohort[1].id = "b";
  std::string text = "patient_id,window,score\n";
  for (const char* id : {"b", "a"})
    for (int j = 1; j <= 3; ++j) text += std::string(id) + "," + std::to_string(j) + "," + std::to_string(0.1 * j) + "\n";
  const auto t = read_trajectories_csv(text, cohort, 3);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].id, "b");
  EXPECT_EQ(t[1].label, 1);
  EXPECT_EQ(t[1].scores, (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_THROW(read_trajectories_csv("patient_id,window,score\na,1,0.1\n", cohort, 3), DataError);
  EXPECT_THROW(read_trajectories_csv("patient_id,window,score\nzz,1,0.1\n", cohort, 1), DataError);
  EXPECT_THROW(read_trajectories_csv("id,window,score\na,1,0.1\n", cohort, 1), DataError);
  EXPECT_THROW(read_trajectories_csv("patient_id,window,score\na,4,0.1\n", cohort, 3), DataError);
}

TEST(Format, NumbersRoundTrip) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> n;
  for (int i = 0; i < 1000; ++i) {
    const double v = n(gen) * std::pow(10.0, static_cast<int>(gen() % 20) - 10);
    EXPECT_EQ(std::stod(format_number(v)), v);
  }
  EXPECT_EQ(format_number(0.5), "0.5");
}
