#include <gtest/gtest.h>

#include "dcissim/isp.hpp"
#include "dcissim/metrics.hpp"
#include "dcissim/sim_id.hpp"

using namespace dcissim;

namespace {

StateSpaceModel mimo_plant() {
    Matrix a(2, 2), b(2, 1), c(2, 2);
    a << 0.8, 0.0, 0.0, 0.2;
    b << 1.0, 1.0;
    c << 1.0, 0.0, 1.0, 1.0;
    return {a, b, c, Matrix::Zero(2, 1)};
}

// Noise-free full-selection coefficients computed straight from the
// frequency response: no simulation involved.
IspResult exact_isp(const StateSpaceModel& g, const ExcitationSystem& ex) {
    const auto& sel = ex.selection;
    IspResult isp;
    isp.selection = sel;
    isp.phases = ex.phases;
    isp.u_coeffs = ex.u_matrix;
    isp.y_coeffs = Matrix(g.p(), sel.state_dim());
    for (std::size_t i = 0; i < sel.count(); ++i) {
        const Eigen::Index o = sel.offset(i);
        const int r = sel.indices[i];
        const double th = 2.0 * kPi * r / sel.period;
        const CMatrix h = frequency_response(g, std::polar(1.0, th));
        if (r == 0) {
            isp.y_coeffs.col(o) = h.real() * ex.u_matrix.col(o);
            continue;
        }
        // u = a sin + b cos = Re((b - i a) e^{i th k}); y = Re(H (b - i a) e^{i th k})
        const CVector uc = ex.u_matrix.col(o + 1).cast<Complex>() - Complex(0, 1) * ex.u_matrix.col(o).cast<Complex>();
        const CVector yc = h * uc;
        isp.y_coeffs.col(o) = -yc.imag();
        isp.y_coeffs.col(o + 1) = yc.real();
    }
    return isp;
}

ExcitationSystem random_full_excitation(int t, int m, std::uint64_t seed) {
    return fit_periodic(random_period(t, m, seed), t);
}

IspResult drop_nyquist(const IspResult& in) {
    const auto sel = FrequencySelection::full(in.selection.period);
    IspResult out = in;
    out.selection = sel;
    out.phases.assign(sel.count(), 0.0);
    out.y_coeffs = in.y_coeffs.leftCols(sel.state_dim());
    out.u_coeffs = in.u_coeffs.leftCols(sel.state_dim());
    return out;
}

}  // namespace

TEST(SimId, ExactCoefficientsGiveExactModel) {
    const auto g = mimo_plant();
    const auto ex = random_full_excitation(64, 1, 3);
    const auto isp = drop_nyquist(exact_isp(g, ex));
    const auto acn = estimate_acn(isp, 4, OrderSelectionPolicy::tolerance(1e-8));
    EXPECT_EQ(acn.order, 2);
    Eigen::EigenSolver<Matrix> eig(acn.a);
    std::vector<double> ev{eig.eigenvalues()(0).real(), eig.eigenvalues()(1).real()};
    std::sort(ev.begin(), ev.end());
    EXPECT_NEAR(ev[0], 0.2, 1e-6);
    EXPECT_NEAR(ev[1], 0.8, 1e-6);
    for (Eigen::Index i = 2; i < acn.singular_values.size(); ++i)
        EXPECT_LT(acn.singular_values(i), 1e-8 * acn.singular_values(0));
    const auto id = identify(isp, 4, OrderSelectionPolicy::tolerance(1e-8));
    EXPECT_LT(relative_h_errors(g, id.model).delta_inf, 1e-8);
}

TEST(SimId, TrueAcGivesExactBd) {
    const auto g = mimo_plant();
    const auto isp = drop_nyquist(exact_isp(g, random_full_excitation(40, 1, 8)));
    const auto bd = estimate_bd(isp, g.a, g.c);
    EXPECT_LT((bd.b - g.b).norm(), 1e-10);
    EXPECT_LT((bd.d - g.d).norm(), 1e-10);
    EXPECT_LT(bd.imag_ratio, 1e-8);
}

TEST(SimId, StaticGainOnly) {
    StateSpaceModel g(Matrix::Zero(0, 0), Matrix::Zero(0, 2), Matrix::Zero(2, 0), Matrix::Random(2, 2));
    const auto isp = drop_nyquist(exact_isp(g, random_full_excitation(30, 2, 4)));
    const auto id = identify(isp, 2, OrderSelectionPolicy::tolerance(1e-8));
    EXPECT_EQ(id.order, 0);
    EXPECT_LT((id.model.d - g.d).norm(), 1e-10);
}

TEST(SimId, SimulatedNoiseFreeRecovery) {
    for (int seed = 0; seed < 5; ++seed) {
        const auto g = random_sut(3, 2, 2, 0.9, 50 + seed);
        const int t = 256;
        const Matrix period = random_period(t, 2, 70 + seed);
        Matrix u(5 * t, 2);
        for (Eigen::Index k = 0; k < u.rows(); ++k) u.row(k) = period.row(k % t);
        const auto x0 = periodic_steady_state(g, period).x.row(0).transpose();
        const auto s = simulate(g, CovarianceTriple::zero(3, 2, 2), u, x0, 1);
        const auto id = identify(isp_offline_fft(s, t), 6, OrderSelectionPolicy::tolerance(1e-8));
        EXPECT_EQ(id.order, 3);
        EXPECT_LT(relative_h_errors(g, id.model).delta_inf, 1e-6);
    }
}

TEST(SimId, InsufficientExcitationIsReported) {
    const auto g = mimo_plant();
    const FrequencySelection sel(64, {5});
    const auto ex = build_excitation(sel, Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    const auto isp = exact_isp(g, ex);
    EXPECT_THROW(identify(isp, 4, OrderSelectionPolicy::fixed(2)), Error);
}

TEST(SimId, PeCheckRank) {
    const FrequencySelection sel(100, {3, 7, 11, 15, 19, 23, 27, 31});
    Matrix a = Matrix::Random(1, 8), b = Matrix::Random(1, 8);
    const auto ex = build_excitation(sel, a, b);
    const auto rep = pe_check(ex.u_matrix, sel, 4, 4);
    EXPECT_EQ(rep.rank, 8);
    EXPECT_TRUE(rep.satisfied);
    const FrequencySelection few(100, {3, 7, 11});
    const auto ex2 = build_excitation(few, Matrix::Random(1, 3), Matrix::Random(1, 3));
    EXPECT_FALSE(pe_check(ex2.u_matrix, few, 4, 4).satisfied);
}

TEST(SimId, PolicyValidation) {
    EXPECT_THROW(OrderSelectionPolicy::tolerance(0.0), DimensionError);
    EXPECT_THROW(OrderSelectionPolicy::tolerance(1.5), DimensionError);
    EXPECT_EQ(OrderSelectionPolicy::fixed(3).order, 3);
}
