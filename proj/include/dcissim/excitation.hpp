#pragma once

// Virtual excitation system generating discrete periodic signals.
//
// A selection of harmonic indices r of w = 2*pi/T defines the regressor
//   v_k = [1/sqrt(2) (r = 0), sin(k w r + phi_r), cos(k w r + phi_r) (r > 0), ...]
// which is the trajectory of v_{k+1} = S v_k through a block-diagonal
// rotation S; any period-T signal is u_k = U v_k for some coefficient
// matrix U whose columns are b_0, then (a_r, b_r) per nonzero index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dcissim/fft.hpp"
#include "dcissim/types.hpp"

namespace dcissim {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

struct FrequencySelection {
    int period = 0;
    std::vector<int> indices;  // strictly increasing, each in [0, period/2]

    FrequencySelection() = default;
    FrequencySelection(int period_, std::vector<int> indices_)
        : period(period_), indices(std::move(indices_)) {
        validate();
    }

    void validate() const {
        if (period < 1) throw DimensionError("FrequencySelection: period must be >= 1");
        for (std::size_t i = 0; i < indices.size(); ++i) {
            if (indices[i] < 0 || indices[i] > period / 2)
                throw DimensionError("FrequencySelection: index out of range [0, T/2]");
            if (i > 0 && indices[i] <= indices[i - 1])
                throw DimensionError("FrequencySelection: indices must be strictly increasing");
        }
    }

    [[nodiscard]] bool has_dc() const { return !indices.empty() && indices.front() == 0; }

    [[nodiscard]] bool has_nyquist() const {
        return period % 2 == 0 && !indices.empty() && indices.back() == period / 2;
    }

    // Selections without the T/2 bin give an orthogonal regressor over whole periods.
    [[nodiscard]] bool orthogonal() const { return !has_nyquist(); }

    [[nodiscard]] std::size_t count() const { return indices.size(); }

    [[nodiscard]] Eigen::Index state_dim() const {
        Eigen::Index s = 0;
        for (int r : indices) s += (r == 0) ? 1 : 2;
        return s;
    }

    // Offset of index position i inside the regressor vector.
    [[nodiscard]] Eigen::Index offset(std::size_t i) const {
        Eigen::Index s = 0;
        for (std::size_t j = 0; j < i; ++j) s += (indices[j] == 0) ? 1 : 2;
        return s;
    }

    // Every index in [0, floor((T-1)/2)]: the full set without the T/2 bin.
    [[nodiscard]] bool is_full() const {
        const int top = (period - 1) / 2;
        if (static_cast<int>(indices.size()) != top + 1) return false;
        for (int r = 0; r <= top; ++r)
            if (indices[r] != r) return false;
        return true;
    }

    static FrequencySelection full(int period, bool include_nyquist = false) {
        std::vector<int> idx;
        const int top = include_nyquist ? period / 2 : (period - 1) / 2;
        for (int r = 0; r <= top; ++r) idx.push_back(r);
        return {period, std::move(idx)};
    }

    // Indices of [0, T/2] not in this selection.
    [[nodiscard]] FrequencySelection complement() const {
        std::vector<int> idx;
        std::size_t j = 0;
        for (int r = 0; r <= period / 2; ++r) {
            if (j < indices.size() && indices[j] == r) {
                ++j;
            } else {
                idx.push_back(r);
            }
        }
        return {period, std::move(idx)};
    }

    bool operator==(const FrequencySelection&) const = default;
};

// Regressor v_k for a selection and per-index phases (empty = all zero).
// Angles are reduced with integer arithmetic so v_{k+T} == v_k bitwise.
inline Vector regressor(const FrequencySelection& sel, std::span<const double> phases,
                        std::int64_t k) {
    if (!phases.empty() && phases.size() != sel.count())
        throw DimensionError("regressor: phase count must equal index count");
    const std::int64_t t = sel.period;
    const std::int64_t kk = ((k % t) + t) % t;
    Vector v(sel.state_dim());
    Eigen::Index pos = 0;
    for (std::size_t i = 0; i < sel.count(); ++i) {
        const int r = sel.indices[i];
        if (r == 0) {
            v(pos++) = kInvSqrt2;
            continue;
        }
        const double phi = phases.empty() ? 0.0 : phases[i];
        const double angle = 2.0 * kPi * static_cast<double>((kk * r) % t) / static_cast<double>(t) + phi;
        v(pos++) = std::sin(angle);
        v(pos++) = std::cos(angle);
    }
    return v;
}

// One period of regressors, row k = v_k^T for k = 0..T-1.
inline Matrix regressor_table(const FrequencySelection& sel, std::span<const double> phases) {
    Matrix f(sel.period, sel.state_dim());
    for (int k = 0; k < sel.period; ++k) f.row(k) = regressor(sel, phases, k).transpose();
    return f;
}

// Block-diagonal rotation with v_{k+1} = S v_k.
inline Matrix rotation_matrix(const FrequencySelection& sel) {
    const Eigen::Index s = sel.state_dim();
    Matrix rot = Matrix::Zero(s, s);
    Eigen::Index pos = 0;
    for (int r : sel.indices) {
        if (r == 0) {
            rot(pos, pos) = 1.0;
            pos += 1;
            continue;
        }
        const double th = 2.0 * kPi * static_cast<double>(r) / static_cast<double>(sel.period);
        rot(pos, pos) = std::cos(th);
        rot(pos, pos + 1) = std::sin(th);
        rot(pos + 1, pos) = -std::sin(th);
        rot(pos + 1, pos + 1) = std::cos(th);
        pos += 2;
    }
    return rot;
}

struct ExcitationSystem {
    FrequencySelection selection;
    Matrix u_matrix;             // m x s, columns b_0 | (a_r, b_r) ...
    std::vector<double> phases;  // one per selected index

    [[nodiscard]] Eigen::Index m() const { return u_matrix.rows(); }
    [[nodiscard]] Eigen::Index state_dim() const { return selection.state_dim(); }
    [[nodiscard]] Matrix rotation() const { return rotation_matrix(selection); }
    [[nodiscard]] Vector initial_state() const { return regressor(selection, phases, 0); }

    // a_r for every nonzero index (m x #nonzero)
    [[nodiscard]] Matrix a_coeffs() const {
        std::vector<Eigen::Index> cols;
        Eigen::Index pos = 0;
        for (int r : selection.indices) {
            if (r == 0) {
                pos += 1;
            } else {
                cols.push_back(pos);
                pos += 2;
            }
        }
        Matrix a(m(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) a.col(j) = u_matrix.col(cols[j]);
        return a;
    }

    // b_r for every selected index (m x #indices)
    [[nodiscard]] Matrix b_coeffs() const {
        Matrix b(m(), static_cast<Eigen::Index>(selection.count()));
        Eigen::Index pos = 0;
        for (std::size_t i = 0; i < selection.count(); ++i) {
            if (selection.indices[i] == 0) {
                b.col(i) = u_matrix.col(pos);
                pos += 1;
            } else {
                b.col(i) = u_matrix.col(pos + 1);
                pos += 2;
            }
        }
        return b;
    }
};

// a_coeffs: m x (#nonzero indices); b_coeffs: m x (#indices); phases empty or
// one per index.
inline ExcitationSystem build_excitation(const FrequencySelection& selection, const Matrix& a_coeffs,
                                         const Matrix& b_coeffs, std::vector<double> phases = {}) {
    selection.validate();
    const auto q = static_cast<Eigen::Index>(selection.count());
    const Eigen::Index nonzero = q - (selection.has_dc() ? 1 : 0);
    detail::require(b_coeffs.cols() == q, "build_excitation: b_coeffs needs one column per index");
    detail::require(a_coeffs.cols() == nonzero,
                    "build_excitation: a_coeffs needs one column per nonzero index");
    detail::require(a_coeffs.rows() == b_coeffs.rows() || nonzero == 0,
                    "build_excitation: a/b row counts differ");
    if (phases.empty()) phases.assign(selection.count(), 0.0);
    detail::require(phases.size() == selection.count(), "build_excitation: one phase per index");

    const Eigen::Index m = b_coeffs.rows();
    Matrix u(m, selection.state_dim());
    Eigen::Index pos = 0, ai = 0;
    for (Eigen::Index i = 0; i < q; ++i) {
        if (selection.indices[i] == 0) {
            u.col(pos++) = b_coeffs.col(i);
        } else {
            u.col(pos++) = a_coeffs.col(ai++);
            u.col(pos++) = b_coeffs.col(i);
        }
    }
    return {selection, std::move(u), std::move(phases)};
}

inline Vector regressor(const ExcitationSystem& sys, std::int64_t k) {
    return regressor(sys.selection, sys.phases, k);
}

// u_k = U v_k for k = 0..count-1 (rows = samples).
inline Matrix generate_signal(const ExcitationSystem& sys, Eigen::Index count) {
    if (count < 1) throw DimensionError("generate_signal: count must be >= 1");
    const Matrix one_period = regressor_table(sys.selection, sys.phases) * sys.u_matrix.transpose();
    const Eigen::Index t = sys.selection.period;
    Matrix out(count, sys.m());
    for (Eigen::Index k = 0; k < count; ++k) out.row(k) = one_period.row(k % t);
    return out;
}

// Full-frequency excitation system reproducing one period of `signal`
// (rows = samples). Coefficients come from the DFT:
//   b_0 = sqrt(2) X_0 / T,  a_r = -2 Im X_r / T,  b_r = 2 Re X_r / T,
// and, for even T, the T/2 cosine coefficient X_{T/2} / T.
inline ExcitationSystem fit_periodic(const Matrix& signal, int period) {
    if (signal.rows() != period) throw DimensionError("fit_periodic: signal length must equal T");
    const FftPlan plan(static_cast<std::size_t>(period));
    const CMatrix spec = dft_columns(signal, plan);
    const auto sel = FrequencySelection::full(period, true);
    const double t = static_cast<double>(period);
    Matrix u(signal.cols(), sel.state_dim());
    Eigen::Index pos = 0;
    for (int r : sel.indices) {
        const CVector x = spec.row(r).transpose();
        if (r == 0) {
            u.col(pos++) = std::sqrt(2.0) * x.real() / t;
        } else if (2 * r == period) {
            u.col(pos++) = Vector::Zero(signal.cols());
            u.col(pos++) = x.real() / t;
        } else {
            u.col(pos++) = -2.0 * x.imag() / t;
            u.col(pos++) = 2.0 * x.real() / t;
        }
    }
    return {sel, std::move(u), std::vector<double>(sel.count(), 0.0)};
}

// Sum_{k=0}^{kT-1} v_k v_k^T by direct summation.
inline Matrix gram_matrix(const FrequencySelection& sel, std::span<const double> phases, int k_periods) {
    if (k_periods < 1) throw DimensionError("gram_matrix: k_periods must be >= 1");
    const Eigen::Index s = sel.state_dim();
    Matrix g = Matrix::Zero(s, s);
    const std::int64_t total = static_cast<std::int64_t>(k_periods) * sel.period;
    for (std::int64_t k = 0; k < total; ++k) {
        const Vector v = regressor(sel, phases, k);
        g.noalias() += v * v.transpose();
    }
    return g;
}

// Sum_k v^a_k (v^b_k)^T for two selections over the same period.
inline Matrix cross_gram_matrix(const FrequencySelection& a, std::span<const double> phases_a,
                                const FrequencySelection& b, std::span<const double> phases_b,
                                int k_periods) {
    detail::require(a.period == b.period, "cross_gram_matrix: periods differ");
    Matrix g = Matrix::Zero(a.state_dim(), b.state_dim());
    const std::int64_t total = static_cast<std::int64_t>(k_periods) * a.period;
    for (std::int64_t k = 0; k < total; ++k)
        g.noalias() += regressor(a, phases_a, k) * regressor(b, phases_b, k).transpose();
    return g;
}

// ---------------------------------------------------------------------------
// Period synthesis

// Linear chirp over one period: instantaneous angular frequency moves from
// w_start to w_end (rad/sample). Channel j is circularly shifted by j*T/m.
inline Matrix chirp_period(int period, int channels, double w_start, double w_end,
                           double amplitude = 1.0) {
    if (period < 1 || channels < 1) throw DimensionError("chirp_period: bad dimensions");
    Vector base(period);
    const double t = static_cast<double>(period);
    for (int k = 0; k < period; ++k) {
        const double kd = static_cast<double>(k);
        base(k) = amplitude * std::sin(w_start * kd + 0.5 * (w_end - w_start) * kd * kd / t);
    }
    Matrix out(period, channels);
    for (int j = 0; j < channels; ++j) {
        const int shift = static_cast<int>((static_cast<long long>(j) * period) / channels);
        for (int k = 0; k < period; ++k) out(k, j) = base((k + shift) % period);
    }
    return out;
}

// i.i.d. standard-normal samples scaled by `amplitude`, one period.
inline Matrix random_period(int period, int channels, std::uint64_t seed, double amplitude = 1.0) {
    if (period < 1 || channels < 1) throw DimensionError("random_period: bad dimensions");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(period, channels);
    for (int k = 0; k < period; ++k)
        for (int j = 0; j < channels; ++j) out(k, j) = amplitude * normal(rng);
    return out;
}

// Reduced interested set: indices (excluding T/2) whose largest per-channel
// Fourier magnitude reaches `fraction` of the peak, thinned uniformly to q.
// Candidates can be limited to a nominal band [w_lo, w_hi] (rad/sample);
// a swept sine leaks far outside its band through the wrap at the period end.
inline FrequencySelection select_band(const ExcitationSystem& full_system, std::size_t q,
                                      double fraction = 1e-3, double w_lo = 0.0, double w_hi = kPi) {
    const auto& sel = full_system.selection;
    std::vector<double> mag(sel.count(), 0.0);
    const Matrix& u = full_system.u_matrix;
    for (std::size_t i = 0; i < sel.count(); ++i) {
        const Eigen::Index pos = sel.offset(i);
        const int r = sel.indices[i];
        if (r == 0) {
            mag[i] = u.col(pos).cwiseAbs().maxCoeff() * kInvSqrt2;
        } else {
            mag[i] = (u.col(pos).array().square() + u.col(pos + 1).array().square()).sqrt().maxCoeff();
        }
    }
    const double peak = *std::max_element(mag.begin(), mag.end());
    std::vector<int> candidates;
    for (std::size_t i = 0; i < sel.count(); ++i) {
        const int r = sel.indices[i];
        if (sel.period % 2 == 0 && 2 * r == sel.period) continue;
        const double w = 2.0 * kPi * r / sel.period;
        if (w < w_lo - 1e-12 || w > w_hi + 1e-12) continue;
        if (peak > 0.0 && mag[i] >= fraction * peak) candidates.push_back(r);
    }
    if (q == 0 || candidates.size() <= q) return {sel.period, candidates};
    std::vector<int> picked;
    const double span = static_cast<double>(candidates.size() - 1);
    for (std::size_t i = 0; i < q; ++i) {
        const auto pos = static_cast<std::size_t>(
            std::llround(span * static_cast<double>(i) / static_cast<double>(q - 1 == 0 ? 1 : q - 1)));
        if (picked.empty() || candidates[pos] != picked.back()) picked.push_back(candidates[pos]);
    }
    return {sel.period, picked};
}

// Restrict a full system to a sub-selection of its indices.
inline ExcitationSystem restrict_to(const ExcitationSystem& sys, const FrequencySelection& sub) {
    detail::require(sub.period == sys.selection.period, "restrict_to: periods differ");
    Matrix u(sys.m(), sub.state_dim());
    std::vector<double> phases;
    Eigen::Index pos = 0;
    for (int r : sub.indices) {
        const auto it = std::find(sys.selection.indices.begin(), sys.selection.indices.end(), r);
        if (it == sys.selection.indices.end())
            throw DimensionError("restrict_to: index not present in source system");
        const auto i = static_cast<std::size_t>(it - sys.selection.indices.begin());
        const Eigen::Index src = sys.selection.offset(i);
        const Eigen::Index width = (r == 0) ? 1 : 2;
        u.middleCols(pos, width) = sys.u_matrix.middleCols(src, width);
        pos += width;
        phases.push_back(sys.phases[i]);
    }
    return {sub, std::move(u), std::move(phases)};
}

}  // namespace dcissim
