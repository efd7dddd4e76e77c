#include <gtest/gtest.h>

#include <random>

#include "dcissim/covariance.hpp"

using namespace dcissim;

namespace {

StateSpaceModel mimo_plant() {
    Matrix a(2, 2), b(2, 1), c(2, 2);
    a << 0.8, 0.0, 0.0, 0.2;
    b << 1.0, 1.0;
    c << 1.0, 0.0, 1.0, 1.0;
    return {a, b, c, Matrix::Zero(2, 1)};
}

CovarianceTriple mimo_noise() {
    CovarianceTriple t;
    t.sigma_ww = Eigen::Vector2d(2.30e-3, 0.16e-3).asDiagonal();
    t.sigma_vv = Eigen::Vector2d(2.30e-3, 3.64e-3).asDiagonal();
    t.sigma_tt = Matrix::Constant(1, 1, 0.11e-3);
    return t;
}

SampleSet periodic_run(const StateSpaceModel& g, const CovarianceTriple& noise, int t, int periods,
                       std::uint64_t seed) {
    const Matrix period = random_period(t, g.m(), seed);
    Matrix u(static_cast<Eigen::Index>(t) * (periods + 1), g.m());
    for (Eigen::Index k = 0; k < u.rows(); ++k) u.row(k) = period.row(k % t);
    return simulate(g, noise, u, Vector::Zero(g.n()), seed + 1).slice(t, static_cast<Eigen::Index>(t) * periods);
}

}  // namespace

TEST(Covariance, LagCountRule) {
    EXPECT_EQ(choose_lag_count(27000, 2, 2), 30);
    EXPECT_EQ(choose_lag_count(1000, 10, 1), 101);
    EXPECT_EQ(choose_lag_count(1000000, 2, 2), 100);
    EXPECT_THROW(choose_lag_count(999, 2, 2), DimensionError);
}

TEST(Covariance, TimeAndFrequencyPathsAgree) {
    for (int t : {30, 31}) {
        const auto g = random_sut(3, 2, 2, 0.9, 11 + t);
        CovarianceTriple noise{0.05 * Matrix::Identity(3, 3), 0.02 * Matrix::Identity(2, 2),
                               0.01 * Matrix::Identity(2, 2)};
        const auto s = periodic_run(g, noise, t, 40, 3 + t);
        const auto spec = averaged_period_spectrum(s, t);
        const auto isp = isp_from_spectrum(spec);
        const auto res = residual_sequences(s, isp);
        const auto a = correlations_time(res.r, res.tau, 12);
        const auto b = correlations_fft(s, spec, 12);
        for (int l = 0; l < 12; ++l) EXPECT_LT((a.xi_rr[l] - b.xi_rr[l]).cwiseAbs().maxCoeff(), 1e-8) << l;
        EXPECT_LT((a.xi_tt - b.xi_tt).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Covariance, ConstantResidualGivesOuterProduct) {
    Eigen::Vector2d c(0.5, -2.0);
    const Matrix r = Matrix::Ones(100, 1) * c.transpose();
    const auto corr = correlations_time(r, Matrix::Zero(100, 1), 5);
    for (const auto& x : corr.xi_rr) EXPECT_LT((x - c * c.transpose()).norm(), 1e-12);
}

TEST(Covariance, ResidualsOfPeriodicSignalVanish) {
    const auto g = mimo_plant();
    // one discarded period of 200 samples leaves a 0.8^200 transient
    const auto s = periodic_run(g, CovarianceTriple::zero(2, 1, 2), 200, 4, 5);
    const auto res = residual_sequences(s, isp_offline_fft(s, 200));
    EXPECT_LT(res.r.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(res.tau.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Covariance, ExactCorrelationsRecoverTruth) {
    const auto g = mimo_plant();
    const auto noise = mimo_noise();
    const auto corr = analytic_correlations(g, noise, 10);
    for (auto mode : {CovarianceMode::ls, CovarianceMode::psd}) {
        const auto rep = solve_xi_zz(corr, g.a, g.c, mode);
        const Matrix xi = solve_discrete_lyapunov(g.a, noise.sigma_ww);
        EXPECT_LT((rep.xi_zz - xi).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_FALSE(rep.nominal);
        EXPECT_TRUE(rep.strongly_detectable);
        const auto rec = recover_covariances(rep.xi_zz, corr, g.a, g.c);
        EXPECT_LT((rec.triple.sigma_ww - noise.sigma_ww).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((rec.triple.sigma_vv - noise.sigma_vv).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((rec.triple.sigma_tt - noise.sigma_tt).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Covariance, ZeroCorrelationsGiveZero) {
    const auto g = mimo_plant();
    CorrelationSet corr;
    corr.xi_rr.assign(6, Matrix::Zero(2, 2));
    corr.xi_tt = Matrix::Zero(1, 1);
    const auto rep = solve_xi_zz(corr, g.a, g.c, CovarianceMode::psd);
    EXPECT_LT(rep.xi_zz.norm(), 1e-12);
}

TEST(Covariance, TooFewLagsRejected) {
    const auto g = mimo_plant();
    const auto corr = analytic_correlations(g, mimo_noise(), 1);
    EXPECT_THROW(solve_xi_zz(corr, g.a, g.c, CovarianceMode::ls), ExcitationError);
}

TEST(Covariance, WideOutputMapIsFlagged) {
    // p < n: not strongly detectable; the regression loses rank
    Matrix a(3, 3), c(1, 3);
    a << 0.5, 0.0, 0.0, 0.0, -0.4, 0.0, 0.0, 0.0, 0.3;
    c << 1.0, 1.0, 1.0;
    const StateSpaceModel g(a, Matrix::Ones(3, 1), c, Matrix::Zero(1, 1));
    CovarianceTriple noise{0.1 * Matrix::Identity(3, 3), 0.1 * Matrix::Identity(1, 1), 0.1 * Matrix::Identity(1, 1)};
    const auto corr = analytic_correlations(g, noise, 12);
    const auto rep = solve_xi_zz(corr, a, c, CovarianceMode::ls);
    EXPECT_FALSE(rep.strongly_detectable);
    EXPECT_TRUE(rep.nominal);
}

TEST(Covariance, PsdSolutionNeedsNoClipping) {
    const auto g = mimo_plant();
    const auto noise = mimo_noise();
    for (int seed = 0; seed < 4; ++seed) {
        const auto s = periodic_run(g, noise, 50, 40, 100 + seed);
        const auto spec = averaged_period_spectrum(s, 50);
        const auto corr = correlations_fft(s, spec, 12);
        const auto rep = solve_xi_zz(corr, g.a, g.c, CovarianceMode::psd);
        for (double v : rep.violations) EXPECT_LT(v, 1e-9);
        const auto rec = recover_covariances(rep.xi_zz, corr, g.a, g.c);
        for (double v : rec.clipped) EXPECT_LT(v, 1e-9);
    }
}

TEST(Covariance, PsdRepairsInfeasibleLeastSquares) {
    // Correlations inconsistent with any PSD noise: lag-0 too small.
    const auto g = mimo_plant();
    auto corr = analytic_correlations(g, mimo_noise(), 8);
    corr.xi_rr[0] *= 0.2;
    const auto ls = solve_xi_zz(corr, g.a, g.c, CovarianceMode::ls);
    EXPECT_GT(*std::max_element(ls.violations.begin(), ls.violations.end()), 1e-6);
    const auto psd = solve_xi_zz(corr, g.a, g.c, CovarianceMode::psd);
    for (double v : psd.violations) EXPECT_LT(v, 1e-9);
    EXPECT_GE(psd.objective, ls.objective - 1e-12);
}

TEST(Covariance, WhiteResidualsAreUncorrelated) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    Matrix r(20000, 2);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = nd(rng);
    const auto corr = correlations_time(r, Matrix::Zero(20000, 1), 10);
    const double ref = corr.xi_rr[0].norm();
    for (int l = 1; l < 10; ++l) EXPECT_LT(corr.xi_rr[l].norm(), 0.05 * ref);
}
