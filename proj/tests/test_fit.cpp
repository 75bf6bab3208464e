// Copyright 2026 The routescale Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "routescale/fit.hpp"
#include "routescale/fixtures.hpp"
#include "routescale/random.hpp"

namespace rs = routescale;

namespace {

std::vector<std::int64_t> sizes() { return rs::standard_grid_sizes(); }
std::vector<std::int64_t> experts() { return rs::standard_grid_experts(); }

rs::FitOptions quick(int starts = 8, std::uint64_t seed = 0) {
  rs::FitOptions o;
  o.starts = starts;
  o.seed = seed;
  return o;
}

}  // namespace

TEST(Rmsle, PerfectPredictionsAreZero) {
  const std::vector<double> obs = {2.5, 3.0, 4.1};
  std::vector<double> pred;
  for (double v : obs) pred.push_back(std::log10(v));
  EXPECT_EQ(rs::rmsle(pred, obs), 0.0);
}

TEST(Rmsle, SinglePair) {
  const std::vector<double> pred = {0.5};
  const std::vector<double> obs = {std::pow(10.0, 0.44)};
  EXPECT_NEAR(rs::rmsle(pred, obs), 0.06, 1e-12);
}

TEST(Rmsle, MatchesBruteForce) {
  rs::Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> pred(n);
    std::vector<double> obs(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform(-1, 1);
      obs[i] = rng.uniform(0.1, 10);
      sum += (pred[i] - std::log10(obs[i])) * (pred[i] - std::log10(obs[i]));
    }
    EXPECT_NEAR(rs::rmsle(pred, obs), std::sqrt(sum / n), 1e-12);
  }
}

TEST(Rmsle, Errors) {
  const std::vector<double> p = {0.1, 0.2};
  const std::vector<double> one = {1.0};
  const std::vector<double> neg = {1.0, -1.0};
  EXPECT_THROW(rs::rmsle(p, one), rs::DataError);
  EXPECT_THROW(rs::rmsle(p, neg), rs::DataError);
}

TEST(FitLaw, ZeroNoiseBilinearRecovery) {
  const auto truth = rs::LawCoefficients::bilinear(-0.079, -0.088, 0.007, 1.072);
  const auto recs = rs::synthetic_records(truth, sizes(), experts(), 0.0, 1);
  const auto fit = rs::fit_law(recs, rs::LawForm::Bilinear, quick());
  EXPECT_NEAR(fit.coefficients.a / truth.a, 1.0, 1e-6);
  EXPECT_NEAR(fit.coefficients.b / truth.b, 1.0, 1e-6);
  EXPECT_NEAR(fit.coefficients.c / truth.c, 1.0, 1e-6);
  EXPECT_NEAR(fit.coefficients.d / truth.d, 1.0, 1e-6);
  EXPECT_LT(fit.rmsle, 1e-9);
  EXPECT_EQ(fit.starts_tried, 8);
}

TEST(FitLaw, ZeroNoiseDenseRecoversTable2) {
  const rs::DenseLaw law{0.078, 3.568e13};
  std::vector<rs::RunRecord> recs;
  for (auto n : sizes()) {
    rs::RunRecord r;
    r.n = n;
    r.loss = law.loss(static_cast<double>(n));
    recs.push_back(r);
  }
  const auto fit = rs::fit_law(recs, rs::LawForm::Dense, quick());
  const auto back = rs::DenseLaw::from_coefficients(fit.coefficients);
  EXPECT_NEAR(back.alpha_n / 0.078, 1.0, 1e-6);
  EXPECT_NEAR(back.n_c / 3.568e13, 1.0, 1e-6);
}

TEST(FitLaw, DenseFitUsesOnlySingleExpertRecords) {
  const auto recs = rs::synthetic_records(rs::table3()[0].coefficients, sizes(), experts(), 0.0, 1);
  const auto fit = rs::fit_law(recs, rs::LawForm::Dense, quick());
  EXPECT_EQ(fit.residuals.size(), sizes().size());
}

TEST(FitLaw, ReturnsBestOfStarts) {
  const auto recs = rs::synthetic_records(rs::table3()[0].coefficients, sizes(), experts(), 0.004, 3);
  const auto fit = rs::fit_law(recs, rs::LawForm::Saturated, quick(12, 3));
  // Each start alone can do no better than the multi-start result.
  for (int s = 1; s <= 3; ++s) {
    const auto single = rs::fit_law(recs, rs::LawForm::Saturated, quick(1, static_cast<std::uint64_t>(s)));
    EXPECT_LE(fit.objective, single.objective + 1e-15);
  }
  double sum = 0.0;
  for (double r : fit.residuals) sum += r * r;
  EXPECT_NEAR(fit.objective, sum, 1e-15);
  EXPECT_NEAR(fit.rmsle, std::sqrt(sum / recs.size()), 1e-15);
}

TEST(FitLaw, RefitFromOptimumDoesNotImprove) {
  const auto recs = rs::synthetic_records(rs::table3()[0].coefficients, sizes(), experts(), 0.004, 4);
  const auto fit = rs::fit_law(recs, rs::LawForm::Saturated, quick(12, 4));
  auto opts = quick(1, 4);
  opts.warm_starts = {fit.coefficients};
  const auto again = rs::fit_law(recs, rs::LawForm::Saturated, opts);
  EXPECT_GE(again.objective, fit.objective - 1e-10);
}

TEST(FitLaw, DeterministicForSeed) {
  const auto recs = rs::synthetic_records(rs::table3()[1].coefficients, sizes(), experts(), 0.004, 5);
  auto o1 = quick(10, 42);
  auto o2 = o1;
  o2.threads = 1;
  o1.threads = 4;
  const auto f1 = rs::fit_law(recs, rs::LawForm::Saturated, o1);
  const auto f2 = rs::fit_law(recs, rs::LawForm::Saturated, o2);
  EXPECT_EQ(f1.coefficients, f2.coefficients);
  EXPECT_EQ(f1.residuals, f2.residuals);
  EXPECT_EQ(f1.objective, f2.objective);
}

TEST(FitLaw, NestedModelClassesOrdered) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto recs = rs::synthetic_records(rs::table3()[0].coefficients, sizes(), experts(), 0.004, seed);
    const auto sep = rs::fit_law(recs, rs::LawForm::Separable, quick(8, seed));
    const auto bil = rs::fit_law(recs, rs::LawForm::Bilinear, quick(8, seed));
    auto sat_opts = quick(16, seed);
    // Saturated contains bilinear up to bound clipping; start it there too.
    auto k = bil.coefficients;
    k.form = rs::LawForm::Saturated;
    k.e_start = 1.0;
    k.e_max = 1e5;
    sat_opts.warm_starts = {k};
    const auto sat = rs::fit_law(recs, rs::LawForm::Saturated, sat_opts);
    EXPECT_LE(bil.objective, sep.objective);
    EXPECT_LE(sat.objective, bil.objective + 1e-9);
  }
}

TEST(FitLaw, Infeasible) {
  const auto truth = rs::LawCoefficients::bilinear(-0.079, -0.088, 0.007, 1.072);
  const std::vector<std::int64_t> one_n = {16527360};
  const auto recs = rs::synthetic_records(truth, one_n, experts(), 0.0, 1);
  EXPECT_THROW(rs::fit_law(recs, rs::LawForm::Bilinear, quick()), rs::FitInfeasible);
  const std::vector<std::int64_t> one_e = {1};
  const auto dense_only = rs::synthetic_records(truth, sizes(), one_e, 0.0, 1);
  EXPECT_THROW(rs::fit_law(dense_only, rs::LawForm::Bilinear, quick()), rs::FitInfeasible);
  const std::vector<rs::RunRecord> few(recs.begin(), recs.begin() + 3);
  EXPECT_THROW(rs::fit_law(few, rs::LawForm::Saturated, quick()), rs::FitInfeasible);
}

TEST(FitLaw, BadLossIsDataError) {
  const auto truth = rs::LawCoefficients::bilinear(-0.079, -0.088, 0.007, 1.072);
  auto recs = rs::synthetic_records(truth, sizes(), experts(), 0.0, 1);
  recs[5].loss = -1.0;
  EXPECT_THROW(rs::fit_law(recs, rs::LawForm::Bilinear, quick()), rs::DataError);
  recs[5].loss = std::nan("");
  EXPECT_THROW(rs::fit_law(recs, rs::LawForm::Bilinear, quick()), rs::DataError);
}

TEST(FitLaw, FlopParamFitRuns) {
  const auto truth = rs::LawCoefficients::flop_param(-0.08, -0.1, 0.008, 0.2, 2.0, 400.0);
  const auto recs = rs::synthetic_records(truth, sizes(), experts(), 0.0, 1);
  const auto fit = rs::fit_law(recs, rs::LawForm::FlopParam, quick(16));
  EXPECT_LT(fit.rmsle, 1e-3);
}

TEST(Loo, ZeroNoiseBilinearIsExact) {
  const auto truth = rs::LawCoefficients::bilinear(-0.079, -0.088, 0.007, 1.072);
  const auto recs = rs::synthetic_records(truth, sizes(), experts(), 0.0, 1);
  EXPECT_LE(rs::loo_rmsle(recs, rs::LawForm::Bilinear, quick(2)), 1e-6);
}

TEST(Loo, NotBelowInSampleOnNoisyData) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto truth = rs::table6()[0].coefficients;
    const auto recs = rs::synthetic_records(truth, sizes(), experts(), 0.004, 100 + seed);
    const auto fit = rs::fit_law(recs, rs::LawForm::Bilinear, quick(2, seed));
    const double loo = rs::loo_rmsle(recs, rs::LawForm::Bilinear, quick(2, seed));
    if (loo >= fit.rmsle) ++wins;
  }
  EXPECT_EQ(wins, 10);
}

TEST(Slices, PerNSlopesMatchIdentity) {
  const auto truth = rs::LawCoefficients::bilinear(-0.079, -0.088, 0.007, 1.072);
  const auto recs = rs::synthetic_records(truth, sizes(), experts(), 0.0, 1);
  const auto table = rs::per_slice_fits(recs, rs::SliceBy::N);
  ASSERT_EQ(table.fits.size(), sizes().size());
  double prev = -1.0;
  for (const auto& f : table.fits) {
    EXPECT_NEAR(f.slope, truth.b + truth.c * std::log10(f.slice_value), 1e-9);
    EXPECT_GT(f.slope, prev);
    prev = f.slope;
  }
}

TEST(Slices, PerESlopesMatchIdentity) {
  const auto truth = rs::LawCoefficients::bilinear(-0.079, -0.088, 0.007, 1.072);
  const auto recs = rs::synthetic_records(truth, sizes(), experts(), 0.0, 1);
  const auto table = rs::per_slice_fits(recs, rs::SliceBy::E);
  ASSERT_EQ(table.fits.size(), experts().size());
  for (const auto& f : table.fits) {
    EXPECT_NEAR(f.slope, truth.a + truth.c * std::log10(f.slice_value), 1e-9);
  }
}

TEST(Slices, NoisyBilinearAt15M) {
  const auto truth = rs::table6()[0].coefficients;
  const std::vector<std::int64_t> n15 = {15'000'000};
  const auto recs = rs::synthetic_records(truth, n15, experts(), 0.004, 21);
  const auto table = rs::per_slice_fits(recs, rs::SliceBy::N);
  ASSERT_EQ(table.fits.size(), 1u);
  EXPECT_NEAR(std::abs(table.fits[0].slope), 0.035, 0.005);
}

TEST(Slices, SmallSlicesSkipped) {
  const auto truth = rs::table6()[0].coefficients;
  const std::vector<std::int64_t> es = {1, 8};
  const auto recs = rs::synthetic_records(truth, sizes(), es, 0.0, 1);
  const auto table = rs::per_slice_fits(recs, rs::SliceBy::N);
  EXPECT_TRUE(table.fits.empty());
  EXPECT_EQ(table.skipped.size(), sizes().size());
  EXPECT_NE(table.skipped[0].reason.find("needs 3"), std::string::npos);
}
