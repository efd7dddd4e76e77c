#include <gtest/gtest.h>

#include <random>

#include "dcissim/fft.hpp"
#include "dcissim/lti.hpp"

using namespace dcissim;

namespace {

std::vector<Complex> direct_dft(const std::vector<Complex>& x) {
    const std::size_t n = x.size();
    std::vector<Complex> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        Complex acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const long double ang = -2.0L * 3.14159265358979323846264338327950288L * ((r * k) % n) / n;
            acc += x[k] * Complex(std::cos(static_cast<double>(ang)), std::sin(static_cast<double>(ang)));
        }
        out[r] = acc;
    }
    return out;
}

std::vector<Complex> random_signal(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<Complex> x(n);
    for (auto& z : x) z = {g(rng), g(rng)};
    return x;
}

double rel_gap(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return std::sqrt(num / den);
}

StateSpaceModel scalar(double a, double b, double c, double d) {
    return {Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b), Matrix::Constant(1, 1, c), Matrix::Constant(1, 1, d)};
}

}  // namespace

TEST(Fft, MatchesDirectTransformOnAwkwardLengths) {
    for (std::size_t n : {1u, 2u, 3u, 7u, 12u, 97u, 600u, 601u, 1024u, 1000u, 169u, 2 * 101u}) {
        const auto x = random_signal(n, n);
        EXPECT_LT(rel_gap(dft_forward(x), direct_dft(x)), 1e-12) << "length " << n;
    }
}

TEST(Fft, InverseRoundTrip) {
    for (std::size_t n : {5u, 64u, 601u, 1031u}) {
        const auto x = random_signal(n, 3 * n);
        EXPECT_LT(rel_gap(dft_inverse(dft_forward(x)), x), 1e-13);
    }
}

TEST(Fft, ImpulseAndConstant) {
    std::vector<Complex> delta(16, 0.0);
    delta[0] = 1.0;
    for (const auto& z : dft_forward(delta)) EXPECT_NEAR(std::abs(z - Complex(1.0)), 0.0, 1e-15);
    std::vector<double> ones(9, 1.0);
    const auto spec = dft_forward(std::span<const double>(ones));
    EXPECT_NEAR(spec[0].real(), 9.0, 1e-13);
    for (std::size_t r = 1; r < 9; ++r) EXPECT_LT(std::abs(spec[r]), 1e-13);
}

TEST(Fft, PrimeLengthsUseChirpZ) {
    EXPECT_TRUE(FftPlan(601).uses_bluestein());
    EXPECT_FALSE(FftPlan(600).uses_bluestein());
    EXPECT_THROW(dft_forward(std::vector<Complex>{}), DimensionError);
    EXPECT_EQ(next_fast_length(1001), 1024u);
    EXPECT_EQ(next_fast_length(121), 125u);
}

TEST(Lti, ValidateRejectsBadShapes) {
    EXPECT_THROW(StateSpaceModel(Matrix::Zero(2, 2), Matrix::Zero(2, 1), Matrix::Zero(1, 3), Matrix::Zero(1, 1)),
                 DimensionError);
}

TEST(Lti, SimulateNoiseFreeMatchesRecursion) {
    const auto g = random_sut(3, 2, 2, 0.9, 11);
    Matrix u = Matrix::Random(50, 2);
    const Vector x0 = Vector::Ones(3);
    const auto s = simulate(g, CovarianceTriple::zero(3, 2, 2), u, x0, 5);
    Vector x = x0;
    for (Eigen::Index k = 0; k < 50; ++k) {
        const Vector y = g.c * x + g.d * u.row(k).transpose();
        EXPECT_EQ((s.y.row(k).transpose() - y).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ((s.u.row(k) - u.row(k)).cwiseAbs().maxCoeff(), 0.0);
        x = g.a * x + g.b * u.row(k).transpose();
    }
}

TEST(Lti, SimulateIsSeedDeterministic) {
    const auto g = random_sut(2, 1, 1, 0.9, 3);
    CovarianceTriple noise{Matrix::Identity(2, 2) * 0.1, Matrix::Identity(1, 1) * 0.2, Matrix::Identity(1, 1) * 0.3};
    const Matrix u = Matrix::Ones(100, 1);
    const auto a = simulate(g, noise, u, Vector::Zero(2), 9);
    const auto b = simulate(g, noise, u, Vector::Zero(2), 9);
    const auto c = simulate(g, noise, u, Vector::Zero(2), 10);
    EXPECT_EQ(a.y, b.y);
    EXPECT_NE(a.y, c.y);
}

TEST(Lti, SamplerCovarianceConverges) {
    Matrix cov(2, 2);
    cov << 2.0, 0.5, 0.5, 1.0;
    const GaussianSampler s(cov);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    Matrix acc = Matrix::Zero(2, 2);
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const Vector w = s.draw(rng, normal);
        acc += w * w.transpose();
    }
    EXPECT_LT((acc / n - cov).norm() / cov.norm(), 0.01);
}

TEST(Lti, SamplerRejectsIndefinite) {
    Matrix cov(2, 2);
    cov << 1.0, 0.0, 0.0, -1.0;
    EXPECT_THROW(GaussianSampler{cov}, NumericalError);
    Matrix sing(2, 2);
    sing << 1.0, 1.0, 1.0, 1.0;
    EXPECT_NO_THROW(GaussianSampler{sing});
}

TEST(Lti, LyapunovResidualSmall) {
    for (int seed = 0; seed < 100; ++seed) {
        const int n = 1 + seed % 8;
        const auto g = random_sut(n, 1, 1, 0.95, 100 + seed);
        const Matrix q = Matrix::Identity(n, n) + g.b * g.b.transpose();
        const Matrix p = solve_discrete_lyapunov(g.a, q);
        EXPECT_LE((p - g.a * p * g.a.transpose() - q).norm() / q.norm(), 1e-10);
    }
}

TEST(Lti, LyapunovScalarAndLargeAgree) {
    const Matrix p = solve_discrete_lyapunov(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0));
    EXPECT_NEAR(p(0, 0), 1.0 / 0.75, 1e-14);
    std::srand(8);
    Matrix a = Matrix::Random(40, 40);
    a *= 0.9 / spectral_radius(a);
    const Matrix q = Matrix::Identity(40, 40);
    const Matrix big = solve_discrete_lyapunov(a, q);
    EXPECT_LE((big - a * big * a.transpose() - q).norm() / big.norm(), 1e-10);
    EXPECT_THROW(solve_discrete_lyapunov(Matrix::Constant(1, 1, 1.0), q.topLeftCorner(1, 1)), StabilityError);
}

TEST(Lti, NormsOfScalarSystems) {
    const auto g = scalar(0.5, 1, 1, 0);
    EXPECT_NEAR(h2_norm(g), std::sqrt(1.0 / 0.75), 1e-12);
    EXPECT_NEAR(hinf_norm(g), 2.0, 1e-9);
    EXPECT_NEAR(hinf_norm(scalar(-0.5, 1, 1, 0)), 2.0, 1e-9);
    StateSpaceModel stat(Matrix::Zero(1, 1), Matrix::Zero(1, 2), Matrix::Zero(2, 1), Matrix(2, 2));
    stat.d << 3.0, 0.0, 0.0, 1.0;
    EXPECT_NEAR(hinf_norm(stat), 3.0, 1e-12);
    EXPECT_THROW(hinf_norm(scalar(1.2, 1, 1, 0)), StabilityError);
}

TEST(Lti, NormsInvariantUnderSimilarity) {
    for (int seed = 0; seed < 10; ++seed) {
        const auto g = random_sut(4, 2, 2, 0.9, 200 + seed);
        Matrix t = Matrix::Random(4, 4) + 3.0 * Matrix::Identity(4, 4);
        const Matrix ti = t.inverse();
        const StateSpaceModel h(t * g.a * ti, t * g.b, g.c * ti, g.d);
        EXPECT_NEAR(h2_norm(h) / h2_norm(g), 1.0, 1e-8);
        EXPECT_NEAR(hinf_norm(h) / hinf_norm(g), 1.0, 1e-8);
    }
}

TEST(Lti, RandomSutProperties) {
    for (int seed = 0; seed < 100; ++seed) {
        const auto g = random_sut(4, 1, 1, 0.95, seed);
        EXPECT_LT(spectral_radius(g.a), 0.95 * (1 + 1e-12));
        EXPECT_TRUE(is_minimal(g));
    }
    const auto a = random_sut(4, 1, 1, 0.95, 42), b = random_sut(4, 1, 1, 0.95, 42);
    EXPECT_EQ(a.a, b.a);
    EXPECT_EQ(a.c, b.c);
    const auto one = random_sut(1, 1, 1, 0.95, 5);
    EXPECT_LE(std::abs(one.a(0, 0)), 0.95);
    EXPECT_THROW(random_sut(0, 1, 1, 0.9, 1), DimensionError);
    EXPECT_THROW(random_sut(2, 1, 1, 1.0, 1), DimensionError);
}

TEST(Lti, PeriodicSteadyStateIsAFixedPoint) {
    const auto g = random_sut(3, 1, 2, 0.9, 17);
    const Matrix u = Matrix::Random(40, 1);
    const auto resp = periodic_steady_state(g, u);
    Vector x = resp.x.row(0).transpose();
    for (int k = 0; k < 40; ++k) {
        EXPECT_LT((resp.y.row(k).transpose() - g.c * x - g.d * u.row(k).transpose()).norm(), 1e-12);
        x = g.a * x + g.b * u.row(k).transpose();
    }
    EXPECT_LT((x - resp.x.row(0).transpose()).norm(), 1e-12);
}

TEST(Lti, SampleSetRecordsRoundTrip) {
    SampleSet s{Matrix::Random(6, 2), Matrix::Random(6, 1)};
    const auto recs = s.records();
    const auto back = SampleSet::from_records(recs);
    EXPECT_EQ(back.u, s.u);
    EXPECT_EQ(back.y, s.y);
    auto broken = recs;
    broken[3].k = 7;
    EXPECT_THROW(SampleSet::from_records(broken), DimensionError);
    EXPECT_EQ(s.slice(2, 3).u, s.u.middleRows(2, 3));
}
