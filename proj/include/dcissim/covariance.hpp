#pragma once

// Noise covariance recovery from lagged residual correlations.
//
// With the full frequency set the residuals r_k = y_k - Y v_k and
// t_k = u_k - U v_k follow the disturbance system z_{k+1} = A z_k + w_k,
// r_k = C z_k + v_k, whose stationary correlations obey
//   Xi_zz = A Xi_zz A^T + S_ww,
//   Xi_rr^0 = C Xi_zz C^T + S_vv,   Xi_rr^l = C A^l Xi_zz C^T  (l >= 1).
// Xi_zz is regressed from the lags l >= 1, optionally under the three
// semidefinite constraints that keep all recovered covariances PSD.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "dcissim/excitation.hpp"
#include "dcissim/fft.hpp"
#include "dcissim/isp.hpp"
#include "dcissim/lti.hpp"

namespace dcissim {

struct Residuals {
    Matrix r;    // N x p output residuals
    Matrix tau;  // N x m input residuals
};

struct CorrelationSet {
    std::vector<Matrix> xi_rr;  // lags 0..M-1, each p x p
    Matrix xi_tt;               // m x m
    Eigen::Index samples_used = 0;

    [[nodiscard]] int lag_count() const { return static_cast<int>(xi_rr.size()); }
};

enum class CovarianceMode { ls, psd };

struct CovarianceSolveReport {
    Matrix xi_zz;
    double objective = 0.0;                // ||M vec(Xi) - p||_2
    std::array<double, 3> violations{};    // -lambda_min of Xi, Xi - A Xi A^T, Xi_rr^0 - C Xi C^T (clipped at 0)
    int iterations = 0;
    bool nominal = false;                  // regression was rank deficient
    bool strongly_detectable = true;       // A nonsingular and C full column rank
    bool converged = true;
};

struct RecoveredCovariances {
    CovarianceTriple triple;
    std::array<double, 3> clipped{};  // largest negative eigenvalue removed per matrix
};

inline int choose_lag_count(Eigen::Index n_samples, int n, int p) {
    if (n_samples < 1000) throw DimensionError("choose_lag_count: need N >= 1000");
    if (n < 1 || p < 1) throw DimensionError("choose_lag_count: n and p must be >= 1");
    const int lower = (n * n + p * p - 1) / (p * p) + 1;
    const auto cube = static_cast<int>(std::llround(std::cbrt(static_cast<double>(n_samples))));
    const auto cap = static_cast<int>(n_samples / 10);
    return std::max(lower, std::min(cube, cap));
}

// r_k = y_k - Y v_k and t_k = u_k - U v_k over the full selection; for even
// T the (-1)^k component is removed as well.
inline Residuals residual_sequences(const SampleSet& samples, const IspResult& isp) {
    const auto& sel = isp.selection;
    if (!sel.is_full())
        throw ExcitationError("residual_sequences: the full frequency set is required");
    detail::whole_periods(samples.size(), sel.period, "residual_sequences");
    detail::require(samples.p() == isp.p() && samples.m() == isp.m(),
                    "residual_sequences: sample widths do not match coefficients");
    Vector nyq = Vector::Zero(isp.p() + isp.m());
    if (sel.period % 2 == 0) nyq = isp.nyquist ? *isp.nyquist : nyquist_coefficients(samples, sel.period);

    const Eigen::Index n = samples.size(), p = isp.p(), m = isp.m();
    Residuals out{Matrix(n, p), Matrix(n, m)};
    for (Eigen::Index k = 0; k < n; ++k) {
        const Vector v = regressor(sel, isp.phases, k);
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        out.r.row(k) = samples.y.row(k) - (isp.y_coeffs * v).transpose() - sign * nyq.head(p).transpose();
        out.tau.row(k) = samples.u.row(k) - (isp.u_coeffs * v).transpose() - sign * nyq.tail(m).transpose();
    }
    return out;
}

inline Residuals residual_sequences(const SampleSet& samples, const IspResult& isp,
                                    const ExcitationSystem& system) {
    if (system.selection.period != isp.selection.period)
        throw DimensionError("residual_sequences: excitation period does not match coefficients");
    return residual_sequences(samples, isp);
}

// Xi_rr^l = sum_{k} r_{k+l} r_k^T / (N - l), Xi_tt = sum_k t_k t_k^T / N.
inline CorrelationSet correlations_time(const Matrix& r, const Matrix& tau, int lag_count) {
    const Eigen::Index n = r.rows();
    detail::require(tau.rows() == n, "correlations_time: residual lengths differ");
    if (lag_count < 1 || static_cast<Eigen::Index>(lag_count) * 10 > n)
        throw DimensionError("correlations_time: need 1 <= M <= N/10");
    CorrelationSet out;
    out.samples_used = n;
    for (int l = 0; l < lag_count; ++l) {
        const Eigen::Index len = n - l;
        Matrix acc = r.bottomRows(len).transpose() * r.topRows(len);
        out.xi_rr.push_back(acc / static_cast<double>(len));
    }
    out.xi_rr[0] = detail::symmetrize(out.xi_rr[0]);
    out.xi_tt = detail::symmetrize(tau.transpose() * tau / static_cast<double>(n));
    return out;
}

// Same statistics via the frequency domain: the periodic part is removed by
// subtracting the averaged period spectrum placed on every (N/T)-th bin of
// the length-N DFT, and lag products come from cross-power spectra of the
// zero-padded residuals.
inline CorrelationSet correlations_fft(const SampleSet& samples, const PeriodSpectrum& spectrum, int lag_count) {
    const int t = spectrum.period;
    const Eigen::Index periods = detail::whole_periods(samples.size(), t, "correlations_fft");
    const Eigen::Index n = samples.size(), p = samples.p(), m = samples.m();
    detail::require(spectrum.w.rows() == t && spectrum.w.cols() == p + m,
                    "correlations_fft: spectrum shape does not match samples");
    if (lag_count < 1 || static_cast<Eigen::Index>(lag_count) * 10 > n)
        throw DimensionError("correlations_fft: need 1 <= M <= N/10");

    const FftPlan full(static_cast<std::size_t>(n));
    CMatrix resid_spec = dft_columns(detail::stack_z(samples), full);
    const double scale = static_cast<double>(n);
    for (Eigen::Index r = 0; r < t; ++r) resid_spec.row(r * periods) -= scale * spectrum.w.row(r);

    CorrelationSet out;
    out.samples_used = n;

    // Parseval: sum_k t_k t_k^T = (1/N) sum_f T_f T_f^H
    const CMatrix tspec = resid_spec.rightCols(m);
    out.xi_tt = detail::symmetrize((tspec.adjoint() * tspec).real().transpose() / (scale * scale));

    // Linear (non-circular) correlation up to lag M-1 needs padding to N + M - 1.
    const Matrix r_time = idft_columns(CMatrix(resid_spec.leftCols(p)), full).real();
    const auto padded_len = next_fast_length(static_cast<std::size_t>(n + lag_count - 1));
    const FftPlan padded(padded_len);
    CMatrix r_pad = CMatrix::Zero(static_cast<Eigen::Index>(padded_len), p);
    r_pad.topRows(n) = r_time.cast<Complex>();
    const CMatrix r_spec = dft_columns(r_pad, padded);

    out.xi_rr.assign(lag_count, Matrix::Zero(p, p));
    const auto len = static_cast<Eigen::Index>(padded_len);
    std::vector<Complex> prod(padded_len), corr(padded_len);
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i; j < p; ++j) {
            for (Eigen::Index f = 0; f < len; ++f) prod[f] = r_spec(f, i) * std::conj(r_spec(f, j));
            padded.inverse(prod, corr);
            // corr[l] = sum_k r_i[k+l] r_j[k]; corr[L-l] = sum_k r_j[k+l] r_i[k]
            for (int l = 0; l < lag_count; ++l) {
                const double denom = static_cast<double>(n - l);
                out.xi_rr[l](i, j) = corr[l].real() / denom;
                if (i != j) out.xi_rr[l](j, i) = corr[(len - l) % len].real() / denom;
            }
        }
    }
    out.xi_rr[0] = detail::symmetrize(out.xi_rr[0]);
    return out;
}

// Analytic stationary correlations of the disturbance system.
inline CorrelationSet analytic_correlations(const StateSpaceModel& model, const CovarianceTriple& noise,
                                            int lag_count) {
    const Matrix xi_zz = solve_discrete_lyapunov(model.a, noise.sigma_ww);
    CorrelationSet out;
    Matrix ak = Matrix::Identity(model.n(), model.n());
    for (int l = 0; l < lag_count; ++l) {
        Matrix lag = model.c * ak * xi_zz * model.c.transpose();
        if (l == 0) lag = detail::symmetrize(lag + noise.sigma_vv);
        out.xi_rr.push_back(lag);
        ak = model.a * ak;
    }
    out.xi_tt = noise.sigma_tt;
    return out;
}

namespace detail {

// Duplication matrix: vec(X) = D vech(X) for symmetric X (column-major vech).
inline Matrix duplication_matrix(Eigen::Index n) {
    const Eigen::Index h = n * (n + 1) / 2;
    Matrix d = Matrix::Zero(n * n, h);
    Eigen::Index col = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
            d(i + j * n, col) = 1.0;
            d(j + i * n, col) = 1.0;
            ++col;
        }
    }
    return d;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Matrix unvec(const Vector& v, Eigen::Index n) { return Eigen::Map<const Matrix>(v.data(), n, n); }

inline Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline double min_eigenvalue(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    return Eigen::SelfAdjointEigenSolver<Matrix>(symmetrize(m), Eigen::EigenvaluesOnly).eigenvalues()(0);
}

inline Matrix project_psd(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(m));
    const Vector vals = eig.eigenvalues().cwiseMax(0.0);
    return symmetrize(eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose());
}

inline std::array<double, 3> constraint_violations(const Matrix& xi, const Matrix& a, const Matrix& c,
                                                   const Matrix& xi0) {
    return {std::max(0.0, -min_eigenvalue(xi)), std::max(0.0, -min_eigenvalue(xi - a * xi * a.transpose())),
            std::max(0.0, -min_eigenvalue(xi0 - c * xi * c.transpose()))};
}

}  // namespace detail

// Regression M vech(Xi_zz) = p from lags 1..M-1, in least squares (ls) or
// under the PSD constraints Xi >= 0, Xi - A Xi A^T >= 0, Xi_rr^0 - C Xi C^T >= 0
// (psd, ADMM over the three cones followed by an exact feasibility repair).
inline CovarianceSolveReport solve_xi_zz(const CorrelationSet& corr, const Matrix& a_hat, const Matrix& c_hat,
                                         CovarianceMode mode, double tol = 1e-8, int max_iterations = 5000) {
    const Eigen::Index n = a_hat.rows(), p = c_hat.rows();
    detail::require(a_hat.cols() == n && c_hat.cols() == n, "solve_xi_zz: A/C shapes inconsistent");
    const int lags = corr.lag_count();
    detail::require(lags >= 1 && corr.xi_rr[0].rows() == p, "solve_xi_zz: correlation set does not match C");
    const int required = static_cast<int>((n * n + p * p - 1) / (p * p)) + 1;
    if (n > 0 && lags < required)
        throw ExcitationError("solve_xi_zz: need M >= ceil(n^2/p^2) + 1 = " + std::to_string(required));

    CovarianceSolveReport rep;
    if (n == 0) {
        rep.xi_zz = Matrix(0, 0);
        return rep;
    }
    {
        const Vector sa = Eigen::JacobiSVD<Matrix>(a_hat).singularValues();
        const Vector sc = Eigen::JacobiSVD<Matrix>(c_hat).singularValues();
        const bool a_ok = sa(sa.size() - 1) > 1e-10 * std::max(sa(0), 1e-300);
        const bool c_ok = p >= n && sc(sc.size() - 1) > 1e-10 * std::max(sc(0), 1e-300);
        rep.strongly_detectable = a_ok && c_ok;
    }

    const Eigen::Index h = n * (n + 1) / 2;
    const Matrix dup = detail::duplication_matrix(n);
    Matrix reg((lags - 1) * p * p, h);
    Vector rhs((lags - 1) * p * p);
    Matrix ak = a_hat;
    for (int l = 1; l < lags; ++l) {
        reg.middleRows((l - 1) * p * p, p * p) = detail::kron(c_hat, c_hat * ak) * dup;
        rhs.segment((l - 1) * p * p, p * p) = detail::vec(corr.xi_rr[l]);
        ak = a_hat * ak;
    }
    const Matrix& xi0 = corr.xi_rr[0];

    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(reg);
    cod.setThreshold(1e-10);
    const Vector ls = reg.rows() > 0 ? Vector(cod.solve(rhs)) : Vector(Vector::Zero(h));
    rep.nominal = reg.rows() == 0 || cod.rank() < h;
    Matrix xi = detail::symmetrize(detail::unvec(dup * ls, n));

    // vech of a symmetric matrix from its vec: (D^T D)^{-1} D^T
    const Matrix vech_of = (dup.transpose() * dup).inverse() * dup.transpose();
    auto objective_of = [&](const Matrix& x) { return (reg * (vech_of * detail::vec(x)) - rhs).norm(); };

    auto report = [&](const Matrix& x) {
        rep.xi_zz = detail::symmetrize(x);
        rep.objective = objective_of(rep.xi_zz);
        rep.violations = detail::constraint_violations(rep.xi_zz, a_hat, c_hat, xi0);
        return rep;
    };

    if (mode == CovarianceMode::ls) return report(xi);

    // An unconstrained minimiser that is already feasible is optimal.
    const double scale = std::max(xi0.norm(), 1e-300);
    {
        const auto v = detail::constraint_violations(xi, a_hat, c_hat, xi0);
        if (!rep.nominal && std::max({v[0], v[1], v[2]}) <= tol * 1e-2 * std::min(1.0, scale)) return report(xi);
    }

    // Scaled ADMM on vech(Xi) with slack matrices W1 = Xi, W2 = Xi - A Xi A^T,
    // W3 = Xi_rr^0 - C Xi C^T, each projected onto the PSD cone.
    const Matrix g1 = dup;
    const Matrix g2 = (Matrix::Identity(n * n, n * n) - detail::kron(a_hat, a_hat)) * dup;
    const Matrix g3 = -detail::kron(c_hat, c_hat) * dup;
    const Vector h3 = detail::vec(xi0) / scale;
    const Vector target = rhs / scale;
    const std::array<const Matrix*, 3> g{&g1, &g2, &g3};
    const std::array<Vector, 3> offset{Vector::Zero(n * n), Vector::Zero(n * n), h3};
    const std::array<Eigen::Index, 3> dims{n, n, p};

    const Matrix mtm = reg.transpose() * reg;
    const Vector mtp = reg.transpose() * target;
    Matrix gtg = Matrix::Zero(h, h);
    for (const auto* gi : g) gtg += gi->transpose() * *gi;
    double rho = std::max(mtm.trace(), 1e-12) / gtg.trace();

    Vector x = vech_of * detail::vec(xi) / scale;
    std::array<Vector, 3> w, u;
    for (int i = 0; i < 3; ++i) {
        const Vector gx = *g[i] * x + offset[i];
        w[i] = detail::vec(detail::project_psd(detail::unvec(gx, dims[i])));
        u[i] = Vector::Zero(gx.size());
    }
    Eigen::LDLT<Matrix> solver(mtm + rho * gtg);
    rep.converged = false;
    int it = 0;
    for (; it < max_iterations; ++it) {
        Vector b = mtp;
        for (int i = 0; i < 3; ++i) b += rho * g[i]->transpose() * (w[i] - u[i] - offset[i]);
        x = solver.solve(b);
        double primal = 0.0, dual = 0.0, norm_w = 0.0, norm_gx = 0.0, norm_u = 0.0;
        for (int i = 0; i < 3; ++i) {
            const Vector gx = *g[i] * x + offset[i];
            const Vector w_old = w[i];
            w[i] = detail::vec(detail::project_psd(detail::unvec(gx + u[i], dims[i])));
            u[i] += gx - w[i];
            primal += (gx - w[i]).squaredNorm();
            dual += (rho * g[i]->transpose() * (w[i] - w_old)).squaredNorm();
            norm_w += w[i].squaredNorm();
            norm_gx += gx.squaredNorm();
            norm_u += (rho * g[i]->transpose() * u[i]).squaredNorm();
        }
        primal = std::sqrt(primal);
        dual = std::sqrt(dual);
        const double eps_p = 1e-12 * std::sqrt(static_cast<double>(3 * n * n)) + 1e-10 * std::sqrt(std::max(norm_w, norm_gx));
        const double eps_d = 1e-12 * std::sqrt(static_cast<double>(h)) + 1e-10 * std::sqrt(norm_u);
        if (primal <= eps_p && dual <= eps_d) {
            rep.converged = true;
            ++it;
            break;
        }
        // residual balancing
        if (it % 10 == 9) {
            double factor = 1.0;
            if (primal > 10.0 * dual) factor = 2.0;
            else if (dual > 10.0 * primal) factor = 0.5;
            if (factor != 1.0) {
                rho *= factor;
                for (auto& ui : u) ui /= factor;
                solver.compute(mtm + rho * gtg);
            }
        }
    }
    rep.iterations = it;

    // Feasibility repair: project Xi - A Xi A^T onto the PSD cone and map back
    // (this also makes Xi PSD), then shrink towards zero until
    // Xi_rr^0 - C Xi C^T is PSD.
    Matrix sol = detail::symmetrize(detail::unvec(dup * x, n)) * scale;
    const Matrix sw = detail::project_psd(sol - a_hat * sol * a_hat.transpose());
    sol = solve_discrete_lyapunov(a_hat, sw);
    const Matrix xi0_psd = xi0;
    auto third_ok = [&](double alpha) {
        return detail::min_eigenvalue(xi0_psd - alpha * c_hat * sol * c_hat.transpose()) >= -tol * 1e-3;
    };
    if (!third_ok(1.0)) {
        double lo = 0.0, hi = 1.0;
        for (int k = 0; k < 60; ++k) {
            const double mid = 0.5 * (lo + hi);
            if (third_ok(mid)) lo = mid;
            else hi = mid;
        }
        sol *= lo;
    }
    return report(sol);
}

inline RecoveredCovariances recover_covariances(const Matrix& xi_zz, const CorrelationSet& corr, const Matrix& a_hat,
                                                const Matrix& c_hat) {
    const Eigen::Index n = a_hat.rows();
    detail::require(xi_zz.rows() == n && xi_zz.cols() == n, "recover_covariances: Xi_zz must be n x n");
    detail::require(c_hat.cols() == n && corr.lag_count() >= 1 && corr.xi_rr[0].rows() == c_hat.rows(),
                    "recover_covariances: dimension mismatch");
    RecoveredCovariances out;
    auto clip = [](const Matrix& m, double& clipped) -> Matrix {
        if (m.size() == 0) {
            clipped = 0.0;
            return m;
        }
        Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::symmetrize(m));
        const Vector vals = eig.eigenvalues();
        clipped = std::max(0.0, -vals.minCoeff());
        if (clipped == 0.0) return detail::symmetrize(m);
        return detail::symmetrize(eig.eigenvectors() * vals.cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose());
    };
    out.triple.sigma_ww = clip(xi_zz - a_hat * xi_zz * a_hat.transpose(), out.clipped[0]);
    out.triple.sigma_vv = clip(corr.xi_rr[0] - c_hat * xi_zz * c_hat.transpose(), out.clipped[1]);
    out.triple.sigma_tt = clip(corr.xi_tt, out.clipped[2]);
    return out;
}

}  // namespace dcissim
