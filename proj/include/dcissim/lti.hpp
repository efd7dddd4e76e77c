#pragma once

// Discrete-time LTI plant: representation, noisy simulation, Lyapunov and
// H2/Hinf utilities, and random test-system generation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dcissim/fft.hpp"
#include "dcissim/types.hpp"

namespace dcissim {

struct StateSpaceModel {
    Matrix a;  // n x n
    Matrix b;  // n x m
    Matrix c;  // p x n
    Matrix d;  // p x m

    StateSpaceModel() = default;
    StateSpaceModel(Matrix a_, Matrix b_, Matrix c_, Matrix d_)
        : a(std::move(a_)), b(std::move(b_)), c(std::move(c_)), d(std::move(d_)) {
        validate();
    }

    [[nodiscard]] Eigen::Index n() const { return a.rows(); }
    [[nodiscard]] Eigen::Index m() const { return d.cols(); }
    [[nodiscard]] Eigen::Index p() const { return d.rows(); }

    void validate() const {
        detail::require(a.rows() == a.cols(), "StateSpaceModel: A must be square");
        detail::require(b.rows() == a.rows(), "StateSpaceModel: B rows must equal n");
        detail::require(c.cols() == a.rows(), "StateSpaceModel: C cols must equal n");
        detail::require(c.rows() == d.rows(), "StateSpaceModel: C and D row counts differ");
        detail::require(b.cols() == d.cols(), "StateSpaceModel: B and D column counts differ");
    }
};

struct CovarianceTriple {
    Matrix sigma_ww;  // process noise, n x n
    Matrix sigma_vv;  // output measurement noise, p x p
    Matrix sigma_tt;  // input measurement noise, m x m

    static CovarianceTriple zero(Eigen::Index n, Eigen::Index m, Eigen::Index p) {
        return {Matrix::Zero(n, n), Matrix::Zero(p, p), Matrix::Zero(m, m)};
    }
};

struct SampleRecord {
    std::size_t k = 0;
    Vector u_measured;
    Vector y_measured;
};

// Columnar storage of a contiguous record sequence: row k of `u`/`y` is the
// record with index k.
struct SampleSet {
    Matrix u;  // N x m
    Matrix y;  // N x p

    [[nodiscard]] Eigen::Index size() const { return u.rows(); }
    [[nodiscard]] Eigen::Index m() const { return u.cols(); }
    [[nodiscard]] Eigen::Index p() const { return y.cols(); }

    [[nodiscard]] SampleRecord record(Eigen::Index k) const {
        return {static_cast<std::size_t>(k), u.row(k).transpose(), y.row(k).transpose()};
    }

    [[nodiscard]] std::vector<SampleRecord> records() const {
        std::vector<SampleRecord> out;
        out.reserve(static_cast<std::size_t>(size()));
        for (Eigen::Index k = 0; k < size(); ++k) out.push_back(record(k));
        return out;
    }

    // Rows [first, first + count), re-indexed from zero.
    [[nodiscard]] SampleSet slice(Eigen::Index first, Eigen::Index count) const {
        detail::require(first >= 0 && count >= 0 && first + count <= size(),
                        "SampleSet::slice: range out of bounds");
        return {u.middleRows(first, count), y.middleRows(first, count)};
    }

    static SampleSet from_records(std::span<const SampleRecord> records) {
        if (records.empty()) return {};
        const auto m = records.front().u_measured.size();
        const auto p = records.front().y_measured.size();
        SampleSet s{Matrix(records.size(), m), Matrix(records.size(), p)};
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            if (r.k != i)
                throw DimensionError("SampleSet: record indices must be contiguous from 0");
            detail::require(r.u_measured.size() == m && r.y_measured.size() == p,
                            "SampleSet: inconsistent record widths");
            s.u.row(i) = r.u_measured.transpose();
            s.y.row(i) = r.y_measured.transpose();
        }
        return s;
    }
};

inline double spectral_radius(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    return Eigen::EigenSolver<Matrix>(a, false).eigenvalues().cwiseAbs().maxCoeff();
}

inline bool is_schur_stable(const Matrix& a) { return spectral_radius(a) < 1.0; }

// Zero-mean Gaussian vectors with a given (possibly singular) covariance.
// The square-root factor comes from a symmetric eigendecomposition with
// eigenvalues above -tol * scale clipped to zero.
class GaussianSampler {
public:
    explicit GaussianSampler(const Matrix& covariance, double tol = 1e-10) {
        detail::require(covariance.rows() == covariance.cols(),
                        "GaussianSampler: covariance must be square");
        const Eigen::Index dim = covariance.rows();
        if (dim == 0) {
            factor_ = Matrix(0, 0);
            return;
        }
        if (covariance.isZero(0.0)) {
            factor_ = Matrix::Zero(dim, dim);
            return;
        }
        const Matrix sym = detail::symmetrize(covariance);
        if ((covariance - sym).norm() > 1e-12 * std::max(1.0, covariance.norm()))
            throw NumericalError("GaussianSampler: covariance is not symmetric");
        Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
        Vector values = eig.eigenvalues();
        const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < dim; ++i) {
            if (values(i) < -tol * scale)
                throw NumericalError("GaussianSampler: covariance is not positive semidefinite");
            values(i) = std::sqrt(std::max(values(i), 0.0));
        }
        factor_ = eig.eigenvectors() * values.asDiagonal();
    }

    [[nodiscard]] Eigen::Index dim() const { return factor_.rows(); }
    [[nodiscard]] const Matrix& factor() const { return factor_; }

    template <typename Rng>
    Vector draw(Rng& rng, std::normal_distribution<double>& normal) const {
        Vector xi(dim());
        for (Eigen::Index i = 0; i < dim(); ++i) xi(i) = normal(rng);
        return factor_ * xi;
    }

private:
    Matrix factor_;
};

// x_{k+1} = A x_k + B u_k + w_k,  y_k = C x_k + D u_k + v_k,  um_k = u_k + t_k.
// Noise draws per step are taken in the order w, v, t from one mt19937_64
// stream seeded with `seed`.
inline SampleSet simulate(const StateSpaceModel& model, const CovarianceTriple& noise,
                          const Matrix& inputs, const Vector& x0, std::uint64_t seed) {
    model.validate();
    const auto n = model.n(), m = model.m(), p = model.p();
    detail::require(inputs.cols() == m, "simulate: input width must equal m");
    detail::require(x0.size() == n, "simulate: x0 length must equal n");
    detail::require(noise.sigma_ww.rows() == n && noise.sigma_ww.cols() == n,
                    "simulate: sigma_ww must be n x n");
    detail::require(noise.sigma_vv.rows() == p && noise.sigma_vv.cols() == p,
                    "simulate: sigma_vv must be p x p");
    detail::require(noise.sigma_tt.rows() == m && noise.sigma_tt.cols() == m,
                    "simulate: sigma_tt must be m x m");

    const GaussianSampler w(noise.sigma_ww), v(noise.sigma_vv), t(noise.sigma_tt);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const Eigen::Index count = inputs.rows();
    SampleSet out{Matrix(count, m), Matrix(count, p)};
    Vector x = x0;
    for (Eigen::Index k = 0; k < count; ++k) {
        const Vector u = inputs.row(k).transpose();
        const Vector wk = w.draw(rng, normal);
        const Vector vk = v.draw(rng, normal);
        const Vector tk = t.draw(rng, normal);
        out.y.row(k) = (model.c * x + model.d * u + vk).transpose();
        out.u.row(k) = (u + tk).transpose();
        x = model.a * x + model.b * u + wk;
    }
    return out;
}

inline SampleSet simulate(const StateSpaceModel& model, const CovarianceTriple& noise,
                          std::span<const Vector> inputs, const Vector& x0, std::uint64_t seed) {
    Matrix u(inputs.size(), model.m());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        detail::require(inputs[k].size() == model.m(), "simulate: input width must equal m");
        u.row(k) = inputs[k].transpose();
    }
    return simulate(model, noise, u, x0, seed);
}

// Solves P = A P A^T + Q for Schur-stable A. Kronecker vectorisation for
// n <= 32, squared Smith iteration above.
inline Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& q) {
    detail::require(a.rows() == a.cols(), "solve_discrete_lyapunov: A must be square");
    detail::require(q.rows() == a.rows() && q.cols() == a.cols(),
                    "solve_discrete_lyapunov: Q must match A");
    const Eigen::Index n = a.rows();
    if (n == 0) return Matrix(0, 0);
    if (!is_schur_stable(a))
        throw StabilityError("solve_discrete_lyapunov: A is not Schur stable");

    Matrix p;
    if (n <= 32) {
        const Eigen::Index nn = n * n;
        Matrix lhs = Matrix::Identity(nn, nn);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                lhs.block(i * n, j * n, n, n) -= a(i, j) * a;
        const Matrix qs = detail::symmetrize(q);
        const Vector rhs = Eigen::Map<const Vector>(qs.data(), nn);
        const Vector sol = lhs.partialPivLu().solve(rhs);
        p = Eigen::Map<const Matrix>(sol.data(), n, n);
    } else {
        p = detail::symmetrize(q);
        Matrix ak = a;
        for (int iter = 0; iter < 200; ++iter) {
            const Matrix step = ak * p * ak.transpose();
            p += step;
            ak = ak * ak;
            if (step.norm() <= 1e-17 * p.norm() || ak.norm() < 1e-300) break;
        }
    }
    return detail::symmetrize(p);
}

inline double h2_norm(const StateSpaceModel& model) {
    model.validate();
    if (!is_schur_stable(model.a)) throw StabilityError("h2_norm: model is not Schur stable");
    // Squared Markov parameters are summed directly while A^k B decays, and
    // only the small tail goes through the observability Gramian. A single
    // Gramian trace loses about half the digits when the system is a
    // difference of two close models (cancellation under the square root).
    double sq = model.d.squaredNorm();
    if (model.n() == 0) return std::sqrt(sq);
    const Matrix obs = solve_discrete_lyapunov(model.a.transpose(), model.c.transpose() * model.c);
    Matrix x = model.b;
    const double start = x.norm();
    for (int k = 0; k < 100000 && x.norm() > 1e-4 * start; ++k) {
        sq += (model.c * x).squaredNorm();
        x = model.a * x;
    }
    sq += (x.transpose() * obs * x).trace();
    return std::sqrt(std::max(sq, 0.0));
}

// G(z) = C (zI - A)^{-1} B + D.
inline CMatrix frequency_response(const StateSpaceModel& model, Complex z) {
    const auto n = model.n();
    if (n == 0) return model.d.cast<Complex>();
    const CMatrix shifted = z * CMatrix::Identity(n, n) - model.a.cast<Complex>();
    Eigen::PartialPivLU<CMatrix> lu(shifted);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-13))
        throw NumericalError("frequency_response: zI - A is numerically singular");
    return model.c.cast<Complex>() * lu.solve(model.b.cast<Complex>()) + model.d.cast<Complex>();
}

inline double max_singular_value(const CMatrix& g) {
    if (g.size() == 0) return 0.0;
    return Eigen::JacobiSVD<CMatrix>(g).singularValues()(0);
}

// Largest singular value of G(e^{i theta}) over theta in [0, pi]: dense grid,
// then golden-section refinement around the strongest grid peaks.
inline double hinf_norm(const StateSpaceModel& model, std::size_t grid_size = 1024) {
    model.validate();
    if (grid_size < 64) throw DimensionError("hinf_norm: grid_size must be >= 64");
    if (!is_schur_stable(model.a)) throw StabilityError("hinf_norm: model is not Schur stable");

    auto gain = [&](double theta) {
        return max_singular_value(frequency_response(model, std::polar(1.0, theta)));
    };
    const double step = kPi / static_cast<double>(grid_size - 1);
    std::vector<double> values(grid_size);
    for (std::size_t i = 0; i < grid_size; ++i) values[i] = gain(step * static_cast<double>(i));

    std::vector<std::size_t> peaks;
    for (std::size_t i = 0; i < grid_size; ++i) {
        const bool left = i == 0 || values[i] >= values[i - 1];
        const bool right = i + 1 == grid_size || values[i] >= values[i + 1];
        if (left && right) peaks.push_back(i);
    }
    std::sort(peaks.begin(), peaks.end(),
              [&](std::size_t x, std::size_t y) { return values[x] > values[y] || (values[x] == values[y] && x < y); });
    if (peaks.size() > 4) peaks.resize(4);

    double best = *std::max_element(values.begin(), values.end());
    constexpr double inv_phi = 0.61803398874989484820;
    for (std::size_t idx : peaks) {
        double lo = step * static_cast<double>(idx == 0 ? 0 : idx - 1);
        double hi = step * static_cast<double>(std::min(idx + 1, grid_size - 1));
        double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
        double f1 = gain(x1), f2 = gain(x2);
        for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
            if (f1 < f2) {
                lo = x1; x1 = x2; f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = gain(x2);
            } else {
                hi = x2; x2 = x1; f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = gain(x1);
            }
        }
        best = std::max({best, f1, f2});
    }
    return best;
}

// [B, AB, ..., A^{n-1}B]
inline Matrix controllability_matrix(const Matrix& a, const Matrix& b) {
    const auto n = a.rows();
    Matrix k(n, n * b.cols());
    Matrix block = b;
    for (Eigen::Index i = 0; i < n; ++i) {
        k.middleCols(i * b.cols(), b.cols()) = block;
        block = a * block;
    }
    return k;
}

inline Matrix observability_matrix(const Matrix& a, const Matrix& c) {
    return controllability_matrix(a.transpose(), c.transpose()).transpose();
}

// Ratio sigma_max / sigma_n of a matrix with n rows; infinity when rank < n.
inline double rank_condition(const Matrix& k) {
    const auto n = std::min(k.rows(), k.cols());
    if (n == 0) return std::numeric_limits<double>::infinity();
    const Vector sv = Eigen::JacobiSVD<Matrix>(k).singularValues();
    if (k.rows() > k.cols() || sv(n - 1) <= 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / sv(n - 1);
}

inline bool is_minimal(const StateSpaceModel& model, double max_condition = 1e8) {
    return rank_condition(controllability_matrix(model.a, model.b)) <= max_condition &&
           rank_condition(observability_matrix(model.a, model.c).transpose()) <= max_condition;
}

// Random stable, minimal plant: eigenvalues drawn uniformly from the disc of
// radius `max_radius` (real or conjugate pairs), rotated by a random
// orthogonal similarity; B, C, D entries standard normal.
inline StateSpaceModel random_sut(int n, int m, int p, double max_radius, std::uint64_t seed,
                                  int max_attempts = 200) {
    if (n < 1 || m < 1 || p < 1) throw DimensionError("random_sut: n, m, p must be >= 1");
    if (!(max_radius > 0.0 && max_radius < 1.0))
        throw DimensionError("random_sut: max_radius must lie in (0, 1)");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix g(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = normal(rng);
        return g;
    };

    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Matrix blocks = Matrix::Zero(n, n);
        int i = 0;
        while (i < n) {
            const bool pair = (n - i >= 2) && unit(rng) < 0.5;
            if (pair) {
                const double r = max_radius * std::sqrt(unit(rng));
                const double th = kPi * unit(rng);
                blocks(i, i) = r * std::cos(th);
                blocks(i, i + 1) = r * std::sin(th);
                blocks(i + 1, i) = -r * std::sin(th);
                blocks(i + 1, i + 1) = r * std::cos(th);
                i += 2;
            } else {
                blocks(i, i) = max_radius * (2.0 * unit(rng) - 1.0);
                i += 1;
            }
        }
        Eigen::HouseholderQR<Matrix> qr(gaussian(n, n));
        Matrix q = qr.householderQ();
        const Matrix r = qr.matrixQR();
        for (int j = 0; j < n; ++j)
            if (r(j, j) < 0) q.col(j) = -q.col(j);

        StateSpaceModel model(q * blocks * q.transpose(), gaussian(n, m), gaussian(p, n),
                              gaussian(p, m));
        if (spectral_radius(model.a) <= max_radius * (1.0 + 1e-12) && is_minimal(model))
            return model;
    }
    throw NumericalError("random_sut: retry budget exhausted");
}

// Steady-state periodic response to one period of input (rows = samples).
struct PeriodicResponse {
    Matrix x;  // T x n, state at k = 0..T-1
    Matrix y;  // T x p, noise-free output
};

inline PeriodicResponse periodic_steady_state(const StateSpaceModel& model, const Matrix& period) {
    detail::require(period.cols() == model.m(), "periodic_steady_state: input width must equal m");
    const auto t = period.rows();
    detail::require(t >= 1, "periodic_steady_state: empty period");
    const FftPlan plan(static_cast<std::size_t>(t));
    const CMatrix u_spec = dft_columns(period, plan);
    CMatrix x_spec(t, model.n()), y_spec(t, model.p());
    for (Eigen::Index r = 0; r < t; ++r) {
        const Complex z = std::polar(1.0, 2.0 * kPi * static_cast<double>(r) / static_cast<double>(t));
        const CVector ur = u_spec.row(r).transpose();
        CVector xr = CVector::Zero(model.n());
        if (model.n() > 0) {
            const CMatrix shifted = z * CMatrix::Identity(model.n(), model.n()) - model.a.cast<Complex>();
            xr = shifted.partialPivLu().solve(model.b.cast<Complex>() * ur);
        }
        x_spec.row(r) = xr.transpose();
        y_spec.row(r) = (model.c.cast<Complex>() * xr + model.d.cast<Complex>() * ur).transpose();
    }
    return {idft_columns(x_spec, plan).real(), idft_columns(y_spec, plan).real()};
}

}  // namespace dcissim
