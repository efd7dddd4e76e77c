#pragma once

// Evaluation metrics: relative H2/Hinf errors of the identified transfer
// function, similarity-compensated process noise error and relative errors
// of the measurement noise and output correlations.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

#include "dcissim/covariance.hpp"
#include "dcissim/lti.hpp"

namespace dcissim {

struct TrialMetrics {
    double delta2 = 0.0;
    double delta_inf = 0.0;
    double eta_w = 0.0;
    double eta_v = 0.0;
    double eta_t = 0.0;
    double eta_r = 0.0;
    double wall_time = 0.0;
};

struct HErrors {
    double delta2 = 0.0;
    double delta_inf = 0.0;
    bool stable = true;  // false: estimate unstable, both deltas are +inf
};

struct MetricValue {
    double value = 0.0;
    bool available = true;
};

// G_hat - G as one system: block-diagonal states, outputs C_hat x_hat - C x.
inline StateSpaceModel error_system(const StateSpaceModel& truth, const StateSpaceModel& estimate) {
    truth.validate();
    estimate.validate();
    detail::require(truth.m() == estimate.m() && truth.p() == estimate.p(),
                    "error_system: input/output dimensions differ");
    const Eigen::Index n1 = estimate.n(), n2 = truth.n();
    StateSpaceModel e;
    e.a = Matrix::Zero(n1 + n2, n1 + n2);
    e.a.topLeftCorner(n1, n1) = estimate.a;
    e.a.bottomRightCorner(n2, n2) = truth.a;
    e.b.resize(n1 + n2, truth.m());
    e.b << estimate.b, truth.b;
    e.c.resize(truth.p(), n1 + n2);
    e.c << estimate.c, -truth.c;
    e.d = estimate.d - truth.d;
    return e;
}

inline HErrors relative_h_errors(const StateSpaceModel& truth, const StateSpaceModel& estimate) {
    const StateSpaceModel err = error_system(truth, estimate);
    HErrors out;
    if (!is_schur_stable(estimate.a)) {
        out.stable = false;
        out.delta2 = out.delta_inf = std::numeric_limits<double>::infinity();
        return out;
    }
    out.delta2 = h2_norm(err) / h2_norm(truth);
    out.delta_inf = hinf_norm(err) / hinf_norm(truth);
    return out;
}

namespace detail {

struct ModalBasis {
    CMatrix v;        // eigenvectors as columns, unit norm, first significant entry real positive
    CMatrix v_inv;    // T = V^{-1}
    CVector lambda;
    bool ok = true;
};

inline ModalBasis modal_basis(const Matrix& a, double gap = 1e-8) {
    ModalBasis out;
    const Eigen::Index n = a.rows();
    Eigen::EigenSolver<Matrix> eig(a, true);
    if (eig.info() != Eigen::Success) {
        out.ok = false;
        return out;
    }
    const CVector vals = eig.eigenvalues();
    const CMatrix vecs = eig.eigenvectors();
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
        if (vals(x).real() != vals(y).real()) return vals(x).real() < vals(y).real();
        return vals(x).imag() < vals(y).imag();
    });
    out.v.resize(n, n);
    out.lambda.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        CVector col = vecs.col(order[i]);
        col /= col.norm();
        const double big = col.cwiseAbs().maxCoeff();
        for (Eigen::Index r = 0; r < n; ++r) {
            if (std::abs(col(r)) > 1e-8 * big) {
                col *= std::conj(col(r)) / std::abs(col(r));
                break;
            }
        }
        out.v.col(i) = col;
        out.lambda(i) = vals(order[i]);
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (std::abs(out.lambda(i) - out.lambda(j)) < gap) out.ok = false;
    Eigen::PartialPivLU<CMatrix> lu(out.v);
    if (!(lu.rcond() > 1e-12)) out.ok = false;
    if (out.ok) out.v_inv = lu.inverse();
    return out;
}

// Real roots of a^2 r^3 + b r - g = 0 that are >= 0 (a != 0).
inline std::vector<double> nonnegative_cubic_roots(double a2, double b, double g) {
    const double p = b / a2, q = -g / a2;
    std::vector<double> roots;
    const double disc = 0.25 * q * q + p * p * p / 27.0;
    if (disc >= 0.0) {
        const double s = std::sqrt(disc);
        roots.push_back(std::cbrt(-0.5 * q + s) + std::cbrt(-0.5 * q - s));
    } else {
        const double r = 2.0 * std::sqrt(-p / 3.0);
        const double phi = std::acos(std::clamp(3.0 * q / (p * r), -1.0, 1.0));
        for (int k = 0; k < 3; ++k) roots.push_back(r * std::cos((phi - 2.0 * kPi * k) / 3.0));
    }
    std::vector<double> out;
    for (double x : roots) {
        // one Newton polish
        const double f = a2 * x * x * x + b * x - g, df = 3.0 * a2 * x * x + b;
        if (df != 0.0) x -= f / df;
        if (x >= 0.0) out.push_back(x);
    }
    return out;
}

// min over diagonal K of ||K M_hat K^H - M||_F by cyclic coordinate descent
// on (|k_i|, arg k_i); real modes keep a real k_i.
inline CVector fit_diagonal_scaling(const CMatrix& m_hat, const CMatrix& m, const std::vector<bool>& real_mode,
                                    int sweeps = 20, double tol = 1e-10) {
    const Eigen::Index n = m.rows();
    CVector k(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = m_hat(i, i).real(), d = m(i, i).real();
        k(i) = (a > 0.0 && d > 0.0) ? std::sqrt(d / a) : 1.0;
    }
    auto objective = [&](const CVector& kk) {
        return (kk.asDiagonal() * m_hat * kk.conjugate().asDiagonal() - m).squaredNorm();
    };
    double prev = objective(k);
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (Eigen::Index i = 0; i < n; ++i) {
            Complex g = 0.0;
            double s = 0.0;
            for (Eigen::Index b = 0; b < n; ++b) {
                if (b == i) continue;
                const Complex c = m_hat(i, b) * std::conj(k(b));
                g += c * std::conj(m(i, b));
                s += std::norm(c);
            }
            // phase maximising Re(e^{j theta} g)
            Complex unit = 1.0;
            double gmag = 0.0;
            if (real_mode[i]) {
                unit = g.real() >= 0.0 ? 1.0 : -1.0;
                gmag = std::abs(g.real());
            } else if (std::abs(g) > 0.0) {
                unit = std::conj(g) / std::abs(g);
                gmag = std::abs(g);
            } else {
                unit = k(i) / std::max(std::abs(k(i)), 1e-300);
            }
            const double a = m_hat(i, i).real(), d = m(i, i).real();
            auto f = [&](double rho) {
                const double diag = rho * rho * a - d;
                return diag * diag + 2.0 * (rho * rho * s - 2.0 * rho * gmag);
            };
            std::vector<double> cand{0.0, std::abs(k(i))};
            if (a != 0.0) {
                for (double r : nonnegative_cubic_roots(a * a, s - a * d, gmag)) cand.push_back(r);
            } else if (s > 0.0) {
                cand.push_back(gmag / s);
            }
            double best = cand[0], fbest = f(cand[0]);
            for (double r : cand) {
                const double fr = f(r);
                if (fr < fbest) {
                    fbest = fr;
                    best = r;
                }
            }
            k(i) = best * unit;
        }
        const double cur = objective(k);
        if (prev - cur <= tol * std::max(prev, 1e-300)) break;
        prev = cur;
    }
    return k;
}

}  // namespace detail

// Relative Frobenius error of the process noise covariance after mapping the
// estimate into the modal basis of the truth and compensating the free
// per-mode scaling with a diagonal K.
inline MetricValue sigma_w_error(const Matrix& sigma_ww, const Matrix& a, const Matrix& sigma_ww_hat,
                                 const Matrix& a_hat) {
    detail::require(a.rows() == a_hat.rows() && sigma_ww.rows() == a.rows() && sigma_ww_hat.rows() == a.rows(),
                    "sigma_w_error: dimension mismatch");
    const double ref = sigma_ww.norm();
    if (ref == 0.0) return {0.0, false};
    const auto truth = detail::modal_basis(a);
    const auto est = detail::modal_basis(a_hat);
    if (!truth.ok || !est.ok) return {std::numeric_limits<double>::quiet_NaN(), false};

    const CMatrix m = truth.v_inv * sigma_ww.cast<Complex>() * truth.v_inv.adjoint();
    const CMatrix m_hat = est.v_inv * sigma_ww_hat.cast<Complex>() * est.v_inv.adjoint();
    std::vector<bool> real_mode(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        real_mode[i] = std::abs(est.lambda(i).imag()) <= 1e-12 && std::abs(truth.lambda(i).imag()) <= 1e-12;
    const CVector k = detail::fit_diagonal_scaling(m_hat, m, real_mode);
    const CMatrix mapped = truth.v * k.asDiagonal() * m_hat * k.conjugate().asDiagonal() * truth.v.adjoint();
    const Matrix back = detail::symmetrize(mapped.real());
    return {(back - sigma_ww).norm() / ref, true};
}

// sum_{l=0}^{r} ||Xi_hat^l - Xi^l||_F / ||Xi^l||_F; lags with zero truth are
// skipped and reported.
struct CorrelationErrorResult {
    double value = 0.0;
    std::vector<int> skipped;
};

inline CorrelationErrorResult correlation_error(const CorrelationSet& truth, const CorrelationSet& estimate, int r) {
    if (r < 0 || r >= truth.lag_count() || r >= estimate.lag_count())
        throw DimensionError("correlation_error: r must be below both lag counts");
    CorrelationErrorResult out;
    for (int l = 0; l <= r; ++l) {
        detail::require(truth.xi_rr[l].rows() == estimate.xi_rr[l].rows() &&
                            truth.xi_rr[l].cols() == estimate.xi_rr[l].cols(),
                        "correlation_error: lag shapes differ");
        const double ref = truth.xi_rr[l].norm();
        if (ref == 0.0) {
            out.skipped.push_back(l);
            continue;
        }
        out.value += (estimate.xi_rr[l] - truth.xi_rr[l]).norm() / ref;
    }
    return out;
}

// Output correlations implied by an identified (A, C) and Xi_zz, Sigma_vv.
inline CorrelationSet model_correlations(const Matrix& a, const Matrix& c, const Matrix& xi_zz,
                                         const Matrix& sigma_vv, int lag_count) {
    CorrelationSet out;
    Matrix ak = Matrix::Identity(a.rows(), a.cols());
    for (int l = 0; l < lag_count; ++l) {
        Matrix lag = c * ak * xi_zz * c.transpose();
        if (l == 0) lag = detail::symmetrize(lag + sigma_vv);
        out.xi_rr.push_back(std::move(lag));
        ak = a * ak;
    }
    out.xi_tt = Matrix::Zero(0, 0);
    return out;
}

inline double relative_frobenius(const Matrix& estimate, const Matrix& truth) {
    const double ref = truth.norm();
    if (ref == 0.0) return estimate.norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return (estimate - truth).norm() / ref;
}

}  // namespace dcissim
