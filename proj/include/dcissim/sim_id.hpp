#pragma once

// Frequency-domain subspace identification from projection coefficients.
//
// The coefficients satisfy X S = A X + B U, Y = C X + D U, so the shifted
// stack [Y; Y S; ...; Y S^{nbar-1}] equals O X + Gamma [U; U S; ...] with O the
// extended observability matrix. Removing the input row space by QR leaves
// the column space of O, from which C and A follow by shift invariance.
// B and D then solve a linear regression on the diagonalised coefficients
// y_r = G(e^{i w k_r}) u_r.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "dcissim/excitation.hpp"
#include "dcissim/isp.hpp"
#include "dcissim/lti.hpp"

namespace dcissim {

struct OrderSelectionPolicy {
    enum class Mode { fixed, tolerance };
    Mode mode = Mode::tolerance;
    int order = 0;       // used when mode == fixed
    double ratio = 1e-6;  // used when mode == tolerance

    static OrderSelectionPolicy fixed(int n) { return {Mode::fixed, n, 1e-6}; }

    static OrderSelectionPolicy tolerance(double ratio) {
        if (!(ratio > 0.0 && ratio < 1.0))
            throw DimensionError("OrderSelectionPolicy: ratio must lie in (0, 1)");
        return {Mode::tolerance, 0, ratio};
    }
};

struct AcnEstimate {
    Matrix a;                // n_hat x n_hat
    Matrix c;                // p x n_hat
    int order = 0;
    Vector singular_values;  // descending, length nbar * p
    double shift_condition = 1.0;
};

struct BdEstimate {
    Matrix b;
    Matrix d;
    double imag_ratio = 0.0;  // ||Im|| / ||Re|| of the complex LS solution
    Eigen::Index rank = 0;
    std::vector<std::string> warnings;
};

struct IdentifiedSystem {
    StateSpaceModel model;
    Vector singular_values;
    int order = 0;
    bool stable = true;
    std::vector<std::string> warnings;
};

namespace detail {

// Left singular vectors with each column's largest-magnitude entry positive.
inline void fix_signs(Matrix& u) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        Eigen::Index arg = 0;
        u.col(j).cwiseAbs().maxCoeff(&arg);
        if (u(arg, j) < 0.0) u.col(j) = -u.col(j);
    }
}

inline Matrix pseudo_inverse(const Matrix& m, double* condition = nullptr) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    if (condition) {
        *condition = (sv.size() == 0 || sv(sv.size() - 1) == 0.0)
                         ? std::numeric_limits<double>::infinity()
                         : sv(0) / sv(sv.size() - 1);
    }
    const double cut = sv.size() == 0 ? 0.0 : sv(0) * 1e-14 * static_cast<double>(std::max(m.rows(), m.cols()));
    Vector inv = Vector::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cut) inv(i) = 1.0 / sv(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// [M; M S; ...; M S^{count-1}]
inline Matrix shifted_stack(const Matrix& m, const Matrix& s, int count) {
    Matrix out(m.rows() * count, m.cols());
    Matrix block = m;
    for (int i = 0; i < count; ++i) {
        out.middleRows(i * m.rows(), m.rows()) = block;
        block = block * s;
    }
    return out;
}

// Diagonalised coefficient columns of a coefficient matrix (rows x s):
// DC column unchanged, then per index r the pair (i x_sin + x_cos,
// -i x_sin + x_cos) with eigenvalues (e^{-i w r}, e^{+i w r}).
struct DiagonalColumns {
    CMatrix values;               // rows x s
    std::vector<Complex> lambda;  // eigenvalue per column
};

inline DiagonalColumns diagonalise(const Matrix& coeffs, const FrequencySelection& sel) {
    DiagonalColumns out{CMatrix(coeffs.rows(), coeffs.cols()), {}};
    Eigen::Index pos = 0;
    const Complex j{0.0, 1.0};
    for (int r : sel.indices) {
        if (r == 0) {
            out.values.col(pos) = coeffs.col(pos).cast<Complex>();
            out.lambda.emplace_back(1.0, 0.0);
            pos += 1;
            continue;
        }
        const double th = 2.0 * kPi * static_cast<double>(r) / static_cast<double>(sel.period);
        const CVector xs = coeffs.col(pos).cast<Complex>();
        const CVector xc = coeffs.col(pos + 1).cast<Complex>();
        out.values.col(pos) = j * xs + xc;
        out.values.col(pos + 1) = -j * xs + xc;
        out.lambda.push_back(std::polar(1.0, -th));
        out.lambda.push_back(std::polar(1.0, th));
        pos += 2;
    }
    return out;
}

}  // namespace detail

inline AcnEstimate estimate_acn(const IspResult& isp, int n_bar, const OrderSelectionPolicy& policy) {
    if (n_bar < 1) throw DimensionError("estimate_acn: n_bar must be >= 1");
    const Eigen::Index p = isp.p(), m = isp.m();
    const Eigen::Index s = isp.selection.state_dim();
    detail::require(isp.y_coeffs.cols() == s && isp.u_coeffs.cols() == s,
                    "estimate_acn: coefficient width does not match selection");
    const Eigen::Index cols = n_bar * (m + p);
    if (s < cols)
        throw ExcitationError("estimate_acn: selection too small, need state dimension >= n_bar*(m+p) = " +
                              std::to_string(cols) + ", have " + std::to_string(s));

    const Matrix rot = rotation_matrix(isp.selection);
    const Matrix ys = detail::shifted_stack(isp.y_coeffs, rot, n_bar);
    const Matrix us = detail::shifted_stack(isp.u_coeffs, rot, n_bar);
    Matrix h(s, cols);
    h << us.transpose(), ys.transpose();

    Eigen::HouseholderQR<Matrix> qr(h);
    const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    const Eigen::Index np = n_bar * p;
    const Matrix r22 = r.bottomRightCorner(np, np);

    Eigen::JacobiSVD<Matrix> svd(r22.transpose(), Eigen::ComputeFullU);
    Matrix w = svd.matrixU();
    detail::fix_signs(w);
    const Vector sv = svd.singularValues();

    int order = 0;
    if (policy.mode == OrderSelectionPolicy::Mode::fixed) {
        order = policy.order;
        if (order < 0 || order > n_bar)
            throw DimensionError("estimate_acn: fixed order must lie in [0, n_bar]");
    } else {
        const double floor = 1e-10 * h.norm();
        const double cut = std::max(policy.ratio * (sv.size() ? sv(0) : 0.0), floor);
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(i) > cut) ++order;
        order = std::min(order, n_bar);
    }

    AcnEstimate out;
    out.order = order;
    out.singular_values = sv;
    if (order == 0) {
        out.a = Matrix(0, 0);
        out.c = Matrix(p, 0);
        return out;
    }
    if (p * (n_bar - 1) < order)
        throw ExcitationError("estimate_acn: n_bar too small for shift invariance at this order");

    const Matrix obs = w.leftCols(order) * sv.head(order).cwiseSqrt().asDiagonal();
    out.c = obs.topRows(p);
    const Eigen::Index rows = p * (n_bar - 1);
    double cond = 0.0;
    const Matrix pinv = detail::pseudo_inverse(obs.topRows(rows), &cond);
    out.shift_condition = cond;
    if (!(cond <= 1e12))
        throw ExcitationError("estimate_acn: shift-invariance system is rank deficient (insufficient excitation)");
    out.a = pinv * obs.bottomRows(rows);
    return out;
}

inline BdEstimate estimate_bd(const IspResult& isp, const Matrix& a_hat, const Matrix& c_hat) {
    const Eigen::Index p = isp.p(), m = isp.m(), n = a_hat.rows();
    detail::require(a_hat.cols() == n && c_hat.rows() == p && c_hat.cols() == n,
                    "estimate_bd: A/C shapes inconsistent with coefficients");
    const auto ydiag = detail::diagonalise(isp.y_coeffs, isp.selection);
    const auto udiag = detail::diagonalise(isp.u_coeffs, isp.selection);

    BdEstimate out;
    const Eigen::Index unknowns = n * m + p * m;
    std::vector<CMatrix> row_blocks;
    std::vector<CVector> rhs_blocks;
    const CMatrix a_c = a_hat.cast<Complex>();
    const CMatrix c_c = c_hat.cast<Complex>();
    const CMatrix eye_p = CMatrix::Identity(p, p);
    for (std::size_t col = 0; col < ydiag.lambda.size(); ++col) {
        const Complex lambda = ydiag.lambda[col];
        CMatrix k_mat(p, n);
        if (n > 0) {
            Eigen::PartialPivLU<CMatrix> lu(lambda * CMatrix::Identity(n, n) - a_c);
            if (!(lu.rcond() > 1e-12)) {
                out.warnings.push_back("estimate_bd: skipped frequency column " + std::to_string(col) +
                                       " (excitation frequency is an eigenvalue of A)");
                continue;
            }
            k_mat = c_c * lu.inverse();
        }
        const CVector u = udiag.values.col(static_cast<Eigen::Index>(col));
        CMatrix block(p, unknowns);
        // vec(K B u) = (u^T kron K) vec(B); vec(D u) = (u^T kron I_p) vec(D)
        for (Eigen::Index j = 0; j < m; ++j) {
            if (n > 0) block.middleCols(j * n, n) = u(j) * k_mat;
            block.middleCols(n * m + j * p, p) = u(j) * eye_p;
        }
        row_blocks.push_back(std::move(block));
        rhs_blocks.push_back(ydiag.values.col(static_cast<Eigen::Index>(col)));
    }

    CMatrix lhs(static_cast<Eigen::Index>(row_blocks.size()) * p, unknowns);
    CVector rhs(lhs.rows());
    for (std::size_t i = 0; i < row_blocks.size(); ++i) {
        lhs.middleRows(static_cast<Eigen::Index>(i) * p, p) = row_blocks[i];
        rhs.segment(static_cast<Eigen::Index>(i) * p, p) = rhs_blocks[i];
    }

    Eigen::ColPivHouseholderQR<CMatrix> qr(lhs);
    qr.setThreshold(1e-10);
    out.rank = qr.rank();
    if (out.rank < unknowns)
        throw ExcitationError("estimate_bd: regressor rank " + std::to_string(out.rank) + " < " +
                              std::to_string(unknowns) + " (persistent-excitation condition fails)");
    const CVector sol = qr.solve(rhs);
    const double re = sol.real().norm();
    out.imag_ratio = re > 0.0 ? sol.imag().norm() / re : sol.imag().norm();
    const Vector real_sol = sol.real();
    out.b = Eigen::Map<const Matrix>(real_sol.data(), n, m);
    out.d = Eigen::Map<const Matrix>(real_sol.data() + n * m, p, m);
    return out;
}

inline IdentifiedSystem identify(const IspResult& isp, int n_bar, const OrderSelectionPolicy& policy) {
    const AcnEstimate acn = estimate_acn(isp, n_bar, policy);
    BdEstimate bd = estimate_bd(isp, acn.a, acn.c);
    IdentifiedSystem out;
    out.model = StateSpaceModel(acn.a, bd.b, acn.c, bd.d);
    out.singular_values = acn.singular_values;
    out.order = acn.order;
    out.stable = is_schur_stable(acn.a);
    out.warnings = std::move(bd.warnings);
    return out;
}

struct PeReport {
    Eigen::Index rank = 0;
    Eigen::Index required = 0;
    bool satisfied = false;
};

// Numerical rank of the Khatri-Rao product of the complex input coefficients
// (one column per selected frequency) with the Vandermonde block
// [e^{i l w k_r}], l = 0..n+nbar-1.
inline PeReport pe_check(const Matrix& u_coeffs, const FrequencySelection& sel, int n, int n_bar) {
    detail::require(u_coeffs.cols() == sel.state_dim(), "pe_check: coefficient width does not match selection");
    const Eigen::Index m = u_coeffs.rows();
    const int depth = n + n_bar;
    const Eigen::Index q = static_cast<Eigen::Index>(sel.count());
    CMatrix kr(m * depth, q);
    Eigen::Index pos = 0;
    for (Eigen::Index i = 0; i < q; ++i) {
        const int r = sel.indices[i];
        CVector ur(m);
        if (r == 0) {
            ur = u_coeffs.col(pos).cast<Complex>();
            pos += 1;
        } else {
            ur = u_coeffs.col(pos + 1).cast<Complex>() - Complex(0.0, 1.0) * u_coeffs.col(pos).cast<Complex>();
            pos += 2;
        }
        const double th = 2.0 * kPi * static_cast<double>(r) / static_cast<double>(sel.period);
        for (Eigen::Index j = 0; j < m; ++j)
            for (int l = 0; l < depth; ++l) kr(j * depth + l, i) = ur(j) * std::polar(1.0, th * l);
    }
    PeReport out;
    out.required = m * depth;
    if (kr.size() > 0) {
        const Vector sv = Eigen::JacobiSVD<CMatrix>(kr).singularValues();
        const double cut = sv.size() ? 1e-10 * sv(0) : 0.0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(i) > cut && sv(i) > 0.0) ++out.rank;
    }
    out.satisfied = out.rank == out.required;
    return out;
}

inline PeReport pe_check(const IspResult& isp, int n, int n_bar) {
    return pe_check(isp.u_coeffs, isp.selection, n, n_bar);
}

}  // namespace dcissim
