#include <qent/analysis.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace qent;

TEST(Mse, Basics) {
  const std::vector<double> a = {0.1, -2.0, 3.5};
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(mse(std::vector<double>{1, 1}, std::vector<double>{0, 2}), 1.0);
  EXPECT_THROW(mse(std::vector<double>{1}, std::vector<double>{1, 2}), DataError);
  EXPECT_THROW(mse(std::vector<double>{}, std::vector<double>{}), DataError);
}

TEST(Mse, InvariantUnderPairedPermutation) {
  Rng rng(1);
  std::vector<double> p(100), l(100);
  for (std::size_t i = 0; i < 100; ++i) p[i] = rng.normal(), l[i] = rng.normal();
  const double before = mse(p, l);
  std::vector<std::size_t> idx(100);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  std::vector<double> p2, l2;
  for (auto i : idx) p2.push_back(p[i]), l2.push_back(l[i]);
  EXPECT_NEAR(mse(p2, l2), before, 1e-14);
}

TEST(FiveNumber, MedianOfHalves) {
  const auto f = five_number({1, 2, 3, 4, 5});
  EXPECT_DOUBLE_EQ(f.min, 1);
  EXPECT_DOUBLE_EQ(f.q1, 1.5);
  EXPECT_DOUBLE_EQ(f.median, 3);
  EXPECT_DOUBLE_EQ(f.q3, 4.5);
  EXPECT_DOUBLE_EQ(f.max, 5);
  EXPECT_EQ(f.outliers, 0u);
  const auto even = five_number({4, 1, 3, 2});
  EXPECT_DOUBLE_EQ(even.q1, 1.5);
  EXPECT_DOUBLE_EQ(even.median, 2.5);
  EXPECT_DOUBLE_EQ(even.q3, 3.5);
}

TEST(FiveNumber, AllEqual) {
  const auto f = five_number({2, 2, 2, 2, 2, 2});
  for (double v : {f.min, f.q1, f.median, f.q3, f.max}) EXPECT_EQ(v, 2.0);
  const auto one = five_number({7});
  EXPECT_EQ(one.min, 7.0);
  EXPECT_EQ(one.max, 7.0);
  EXPECT_THROW(five_number({}), DataError);
}

TEST(FiveNumber, FenceExcludesOutliers) {
  // halves [1,2,3] and [5,6,100]: q1 = 2, q3 = 6, upper fence 6 + 1.5 * 4 = 12
  const auto f = five_number({1, 2, 3, 4, 5, 6, 100});
  EXPECT_DOUBLE_EQ(f.q1, 2);
  EXPECT_DOUBLE_EQ(f.q3, 6);
  EXPECT_DOUBLE_EQ(f.max, 6);
  EXPECT_EQ(f.outliers, 1u);
  // with only five points the fence (52 + 75.75) keeps 100
  EXPECT_DOUBLE_EQ(five_number({1, 2, 3, 4, 100}).max, 100);
  const auto low = five_number({-100, 1, 2, 3, 4, 5, 6});
  EXPECT_DOUBLE_EQ(low.min, 1);
  EXPECT_EQ(low.outliers, 1u);
}

TEST(FiveNumber, PermutationInvariant) {
  Rng rng(2);
  std::vector<double> v(51);
  for (auto& x : v) x = rng.normal();
  v.push_back(40.0);
  const auto a = five_number(v);
  std::shuffle(v.begin(), v.end(), rng.engine());
  const auto b = five_number(v);
  EXPECT_EQ(a.min, b.min);
  EXPECT_EQ(a.q1, b.q1);
  EXPECT_EQ(a.median, b.median);
  EXPECT_EQ(a.q3, b.q3);
  EXPECT_EQ(a.max, b.max);
  EXPECT_EQ(a.outliers, b.outliers);
}

TEST(Pcc, LinearRelations) {
  const std::vector<double> x = {0.1, 0.7, 1.3, 2.0, 5.5};
  std::vector<double> y, z;
  for (double v : x) y.push_back(2 * v + 1), z.push_back(-v);
  EXPECT_NEAR(pcc(x, y), 1.0, 1e-12);
  EXPECT_NEAR(pcc(x, z), -1.0, 1e-12);
  EXPECT_THROW(pcc(x, std::vector<double>(5, 3.0)), DataError);
  EXPECT_THROW(pcc(std::vector<double>{1}, std::vector<double>{2}), DataError);
}

TEST(Pcc, MatchesTwoPassOracleAndAffineInvariance) {
  Rng rng(3);
  std::vector<double> x(200), y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    x[i] = rng.normal();
    y[i] = 0.3 * x[i] + rng.normal();
  }
  // oracle: correlation of standardized scores
  auto stdz = [](std::vector<double> v) {
    double m = 0, s = 0;
    for (double a : v) m += a;
    m /= double(v.size());
    for (double a : v) s += (a - m) * (a - m);
    s = std::sqrt(s / double(v.size()));
    for (double& a : v) a = (a - m) / s;
    return v;
  };
  const auto zx = stdz(x), zy = stdz(y);
  double r = 0;
  for (std::size_t i = 0; i < 200; ++i) r += zx[i] * zy[i];
  r /= 200.0;
  EXPECT_NEAR(pcc(x, y), r, 1e-12);
  std::vector<double> ax, nx;
  for (double v : x) ax.push_back(3.7 * v - 2.0), nx.push_back(-0.5 * v + 9.0);
  EXPECT_NEAR(pcc(ax, y), pcc(x, y), 1e-12);
  EXPECT_NEAR(pcc(nx, y), -pcc(x, y), 1e-12);
}

TEST(RelativeError, Thresholds) {
  const std::vector<double> labels = {0.2, 0.8, 1.5, -2.0};
  const std::vector<double> preds = {0.0, 1.0, 1.2, -1.0};
  const auto r05 = mean_relative_error(preds, labels, 0.5);
  EXPECT_EQ(r05.count, 3u);
  EXPECT_NEAR(r05.mean, (0.25 + 0.2 + 0.5) / 3.0, 1e-15);
  const auto r1 = mean_relative_error(preds, labels, 1.0);
  EXPECT_EQ(r1.count, 2u);
  EXPECT_TRUE(std::isnan(mean_relative_error(preds, labels, 5.0).mean));
  const auto rep = evaluate_predictions(preds, labels);
  EXPECT_EQ(rep.n, 4u);
  ASSERT_EQ(rep.relative.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.mse, mse(preds, labels));
}

TEST(Nonlocality, GridsAndFamily) {
  const auto gs = default_gamma_grid();
  EXPECT_DOUBLE_EQ(gs.front(), 0.6);
  EXPECT_DOUBLE_EQ(gs.back(), std::numbers::sqrt2 / 2);
  EXPECT_EQ(default_p_grid().size(), 101u);
  EXPECT_NEAR(coherent_information(rho_p_gamma(1.0, std::numbers::sqrt2 / 2)), 1.0, 1e-9);
}

TEST(Nonlocality, StudyRecordsAndBounds) {
  const auto model = nn::build_mlp(36, {6}, 4);
  const auto study = nonlocality_study(model, default_p_grid(), default_gamma_grid());
  // largest violation over the family: p = 1 at the best gamma (gamma = 0.6 end of the range),
  // value frozen from the independent numpy evaluation
  const double bound = 2.834557128137001;
  std::size_t expected_rows = 0;
  for (double g : default_gamma_grid())
    for (double p : default_p_grid())
      if (coherent_information(rho_p_gamma(p, g)) > 0) ++expected_rows;
  EXPECT_EQ(study.records.size(), expected_rows);
  for (const auto& r : study.records) {
    EXPECT_GT(r.coherent_info, 0.0);
    EXPECT_LE(r.violation, bound + 1e-9);
    EXPECT_NEAR(r.violation, r.p * cglmp_violation(phi_gamma(r.gamma)), 1e-10);
    EXPECT_DOUBLE_EQ(r.squared_error, (r.prediction - r.coherent_info) * (r.prediction - r.coherent_info));
  }
  EXPECT_NEAR(cglmp_violation(phi_gamma(0.6)), bound, 1e-9);
  for (double g : default_gamma_grid()) EXPECT_LE(cglmp_violation(phi_gamma(g)), bound + 1e-12);
  const auto top = std::find_if(study.records.begin(), study.records.end(), [](const NonlocalityRecord& r) {
    return r.p == 1.0 && r.gamma == std::numbers::sqrt2 / 2;
  });
  ASSERT_NE(top, study.records.end());
  EXPECT_NEAR(top->coherent_info, 1.0, 1e-9);
  EXPECT_GE(study.pcc_error_ci, -1.0);
  EXPECT_LE(study.pcc_error_violation, 1.0);
}

TEST(Nonlocality, DegenerateGrids) {
  const auto model = nn::build_mlp(36, {6}, 4);
  EXPECT_THROW(nonlocality_study(model, std::vector<double>{0.9}, std::vector<double>{0.65}), DataError);
  EXPECT_THROW(nonlocality_study(model, std::vector<double>{0.1}, std::vector<double>{0.65}), DataError);
  EXPECT_THROW(nonlocality_study(nn::build_mlp(64, {6}, 4), default_p_grid(), default_gamma_grid()), ConfigError);
}
