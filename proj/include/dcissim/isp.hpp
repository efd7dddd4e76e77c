#pragma once

// Invariant-subspace projection: estimate the coefficient matrices Y^i, U^i
// of the measured output/input on the excitation regressor v_k.
//
// Over whole periods the regressor columns of an orthogonal selection are
// mutually orthogonal with squared norm kT/2, so the least-squares solution
// reduces to R = (2/(kT)) sum_k v_k z_k^T, z_k = [y_k; u_k]. Three
// evaluations are provided: period-partitioned products, a streaming
// accumulator emitting at period boundaries, and a per-period FFT for the
// full selection.

#include <cmath>
#include <optional>
#include <vector>

#include "dcissim/excitation.hpp"
#include "dcissim/fft.hpp"
#include "dcissim/lti.hpp"

namespace dcissim {

struct IspResult {
    Matrix y_coeffs;  // p x s
    Matrix u_coeffs;  // m x s
    FrequencySelection selection;
    std::vector<double> phases;
    Eigen::Index samples_used = 0;
    // Coefficient of (-1)^k per channel [y; u] for even T when estimated.
    std::optional<Vector> nyquist;

    [[nodiscard]] Eigen::Index p() const { return y_coeffs.rows(); }
    [[nodiscard]] Eigen::Index m() const { return u_coeffs.rows(); }
};

// Per-period averaged spectrum (1/(kT)) sum_j fft(Z_j), T x (p + m) with
// columns [y | u].
struct PeriodSpectrum {
    CMatrix w;
    int period = 0;
    Eigen::Index samples_used = 0;
    Eigen::Index p = 0;
    Eigen::Index m = 0;
};

namespace detail {

inline Eigen::Index whole_periods(Eigen::Index n, int period, const char* who) {
    if (period < 1) throw DimensionError(std::string(who) + ": period must be >= 1");
    if (n < period || n % period != 0)
        throw ExcitationError(std::string(who) + ": sample count must be a positive multiple of T");
    return n / period;
}

inline Matrix stack_z(const SampleSet& samples) {
    Matrix z(samples.size(), samples.p() + samples.m());
    z << samples.y, samples.u;
    return z;
}

inline IspResult split_coefficients(const Matrix& r, const FrequencySelection& sel,
                                    std::vector<double> phases, Eigen::Index p, Eigen::Index n_used) {
    IspResult out;
    out.y_coeffs = r.leftCols(p).transpose();
    out.u_coeffs = r.rightCols(r.cols() - p).transpose();
    out.selection = sel;
    out.phases = std::move(phases);
    out.samples_used = n_used;
    return out;
}

// Neumaier-compensated matrix accumulator.
class CompensatedSum {
public:
    CompensatedSum(Eigen::Index rows, Eigen::Index cols)
        : sum_(Matrix::Zero(rows, cols)), comp_(Matrix::Zero(rows, cols)) {}

    void add(const Matrix& term) {
        for (Eigen::Index j = 0; j < sum_.cols(); ++j) {
            for (Eigen::Index i = 0; i < sum_.rows(); ++i) {
                const double s = sum_(i, j), x = term(i, j);
                const double t = s + x;
                comp_(i, j) += (std::abs(s) >= std::abs(x)) ? (s - t) + x : (x - t) + s;
                sum_(i, j) = t;
            }
        }
    }

    [[nodiscard]] Matrix value() const { return sum_ + comp_; }

private:
    Matrix sum_;
    Matrix comp_;
};

}  // namespace detail

inline Vector nyquist_coefficients(const SampleSet& samples, int period) {
    detail::require(period % 2 == 0, "nyquist_coefficients: T must be even");
    const Matrix z = detail::stack_z(samples);
    Vector acc = Vector::Zero(z.cols());
    for (Eigen::Index k = 0; k < z.rows(); ++k) {
        if (k % 2 == 0) {
            acc += z.row(k).transpose();
        } else {
            acc -= z.row(k).transpose();
        }
    }
    return acc / static_cast<double>(z.rows());
}

// Offline projection by period-partitioned products F_T^T Z_j.
// `f` is the T x s regressor table of `system`, which depends only on the
// selection and can be built once for many datasets.
inline IspResult isp_offline_matmul(const SampleSet& samples, const ExcitationSystem& system, const Matrix& f) {
    const auto& sel = system.selection;
    const Eigen::Index periods = detail::whole_periods(samples.size(), sel.period, "isp_offline_matmul");
    if (!sel.orthogonal())
        throw ExcitationError("isp_offline_matmul: selection must exclude the T/2 index");
    detail::require(f.rows() == sel.period && f.cols() == sel.state_dim(),
                    "isp_offline_matmul: regressor table does not match selection");
    const Matrix z = detail::stack_z(samples);
    const Eigen::Index t = sel.period;
    detail::CompensatedSum acc(f.cols(), z.cols());
    for (Eigen::Index j = 0; j < periods; ++j) {
        Matrix block(f.cols(), z.cols());
        block.noalias() = f.transpose() * z.middleRows(j * t, t);
        acc.add(block);
    }
    const double scale = 2.0 / static_cast<double>(periods * t);
    IspResult out = detail::split_coefficients(scale * acc.value(), sel, system.phases, samples.p(),
                                               samples.size());
    if (t % 2 == 0 && sel.is_full()) out.nyquist = nyquist_coefficients(samples, sel.period);
    return out;
}

inline IspResult isp_offline_matmul(const SampleSet& samples, const ExcitationSystem& system) {
    return isp_offline_matmul(samples, system, regressor_table(system.selection, system.phases));
}

// Streaming projection: accumulate v_k z_k^T and emit the running average
// of per-period estimates whenever a period completes.
class OnlineIsp {
public:
    OnlineIsp(ExcitationSystem system, Eigen::Index p)
        : system_(std::move(system)), p_(p),
          table_(regressor_table(system_.selection, system_.phases)),
          period_acc_(Matrix::Zero(system_.state_dim(), p + system_.m())),
          estimate_(Matrix::Zero(system_.state_dim(), p + system_.m())) {
        if (!system_.selection.orthogonal())
            throw ExcitationError("OnlineIsp: selection must exclude the T/2 index");
    }

    // Returns a snapshot at period boundaries, nothing otherwise.
    std::optional<IspResult> push(const SampleRecord& record) {
        if (record.k != next_k_)
            throw ExcitationError("OnlineIsp: records must arrive in index order without gaps");
        detail::require(record.y_measured.size() == p_ && record.u_measured.size() == system_.m(),
                        "OnlineIsp: record width mismatch");
        Vector z(p_ + system_.m());
        z << record.y_measured, record.u_measured;
        const int t = system_.selection.period;
        period_acc_.noalias() += table_.row(static_cast<Eigen::Index>(next_k_ % t)).transpose() * z.transpose();
        ++next_k_;
        if (next_k_ % t != 0) return std::nullopt;

        ++periods_;
        const double td = static_cast<double>(periods_);
        const Matrix w = (2.0 / static_cast<double>(t)) * period_acc_;
        estimate_ = ((td - 1.0) / td) * estimate_ + (1.0 / td) * w;
        period_acc_.setZero();
        return detail::split_coefficients(estimate_, system_.selection, system_.phases, p_,
                                          static_cast<Eigen::Index>(next_k_));
    }

    [[nodiscard]] std::size_t periods() const { return periods_; }

private:
    ExcitationSystem system_;
    Eigen::Index p_;
    Matrix table_;
    Matrix period_acc_;
    Matrix estimate_;
    std::size_t next_k_ = 0;
    std::size_t periods_ = 0;
};

inline PeriodSpectrum averaged_period_spectrum(const SampleSet& samples, int period) {
    const Eigen::Index periods = detail::whole_periods(samples.size(), period, "averaged_period_spectrum");
    const Matrix z = detail::stack_z(samples);
    const FftPlan plan(static_cast<std::size_t>(period));
    CMatrix acc = CMatrix::Zero(period, z.cols());
    for (Eigen::Index j = 0; j < periods; ++j)
        acc += dft_columns(Matrix(z.middleRows(j * period, period)), plan);
    acc /= static_cast<double>(periods * period);
    return {std::move(acc), period, samples.size(), samples.p(), samples.m()};
}

// Coefficients over the full selection (T/2 excluded) from an averaged
// spectrum: DC row sqrt(2) W_0, then (-2 Im W_r, 2 Re W_r) per index r so
// that rows follow the (sin, cos) regressor layout.
inline IspResult isp_from_spectrum(const PeriodSpectrum& spectrum) {
    const int t = spectrum.period;
    const auto sel = FrequencySelection::full(t);
    Matrix r(sel.state_dim(), spectrum.w.cols());
    Eigen::Index pos = 0;
    for (int idx : sel.indices) {
        if (idx == 0) {
            r.row(pos++) = std::sqrt(2.0) * spectrum.w.row(0).real();
        } else {
            r.row(pos++) = -2.0 * spectrum.w.row(idx).imag();
            r.row(pos++) = 2.0 * spectrum.w.row(idx).real();
        }
    }
    IspResult out = detail::split_coefficients(r, sel, std::vector<double>(sel.count(), 0.0), spectrum.p,
                                               spectrum.samples_used);
    if (t % 2 == 0) out.nyquist = spectrum.w.row(t / 2).real().transpose();
    return out;
}

inline IspResult isp_offline_fft(const SampleSet& samples, int period) {
    return isp_from_spectrum(averaged_period_spectrum(samples, period));
}

}  // namespace dcissim
