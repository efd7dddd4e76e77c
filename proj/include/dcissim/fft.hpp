#pragma once

// Discrete Fourier transform of arbitrary length.
//
// Smooth lengths (all prime factors <= 13) run through a recursive
// mixed-radix decimation-in-time kernel with specialised radix-2/3/4/5
// butterflies. Any other length is mapped onto a power-of-two convolution
// (Bluestein's chirp-z), so every length costs O(L log L).
//
// Convention: X[r] = sum_k x[k] exp(-2 pi i r k / L); the inverse carries 1/L.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dcissim/types.hpp"

namespace dcissim {

class FftPlan {
public:
    explicit FftPlan(std::size_t length) : length_(length) {
        if (length == 0) throw DimensionError("FftPlan: length must be >= 1");
        twiddles_.resize(length);
        for (std::size_t j = 0; j < length; ++j) twiddles_[j] = unit_root(j, length);

        std::size_t rest = length;
        while (rest % 4 == 0) { radices_.push_back(4); rest /= 4; }
        if (rest % 2 == 0) { radices_.push_back(2); rest /= 2; }
        for (std::size_t p = 3; p <= kMaxRadix && rest > 1; p += 2) {
            while (rest % p == 0) { radices_.push_back(p); rest /= p; }
        }
        if (rest != 1) setup_bluestein();
    }

    [[nodiscard]] std::size_t size() const { return length_; }
    [[nodiscard]] bool uses_bluestein() const { return bluestein_ != nullptr; }

    void forward(std::span<const Complex> in, std::span<Complex> out) const {
        check(in, out);
        if (bluestein_) {
            run_bluestein(in, out);
        } else {
            run_mixed(in.data(), 1, out.data(), length_, 0, 1);
        }
    }

    void inverse(std::span<const Complex> in, std::span<Complex> out) const {
        check(in, out);
        std::vector<Complex> tmp(in.begin(), in.end());
        for (auto& z : tmp) z = std::conj(z);
        forward(tmp, out);
        const double scale = 1.0 / static_cast<double>(length_);
        for (auto& z : out) z = std::conj(z) * scale;
    }

    [[nodiscard]] std::vector<Complex> forward(std::span<const Complex> in) const {
        std::vector<Complex> out(length_);
        forward(in, out);
        return out;
    }

    [[nodiscard]] std::vector<Complex> inverse(std::span<const Complex> in) const {
        std::vector<Complex> out(length_);
        inverse(in, out);
        return out;
    }

private:
    static constexpr std::size_t kMaxRadix = 13;

    struct Bluestein {
        std::size_t conv_length = 0;
        std::unique_ptr<FftPlan> inner;
        std::vector<Complex> chirp;          // exp(-i pi k^2 / L)
        std::vector<Complex> kernel_spectrum;  // FFT of conj(chirp), wrapped
    };

    // exp(-2 pi i j / n), evaluated from a reduced angle.
    static Complex unit_root(std::uint64_t j, std::uint64_t n) {
        j %= n;
        const long double angle = -2.0L * static_cast<long double>(kPi) *
                                  static_cast<long double>(j) / static_cast<long double>(n);
        return {static_cast<double>(std::cos(angle)), static_cast<double>(std::sin(angle))};
    }

    void check(std::span<const Complex> in, std::span<Complex> out) const {
        if (in.size() != length_ || out.size() != length_)
            throw DimensionError("FftPlan: buffer length does not match plan length");
    }

    void setup_bluestein() {
        radices_.clear();
        auto b = std::make_unique<Bluestein>();
        std::size_t m = 1;
        while (m < 2 * length_ - 1) m <<= 1;
        b->conv_length = m;
        b->inner = std::make_unique<FftPlan>(m);
        b->chirp.resize(length_);
        const std::uint64_t two_l = 2 * static_cast<std::uint64_t>(length_);
        for (std::size_t k = 0; k < length_; ++k) {
            // exp(-i pi k^2 / L) = exp(-2 pi i (k^2 mod 2L) / 2L)
            const std::uint64_t kk = (static_cast<std::uint64_t>(k) * k) % two_l;
            b->chirp[k] = unit_root(kk, two_l);
        }
        std::vector<Complex> kernel(m, Complex{0.0, 0.0});
        kernel[0] = std::conj(b->chirp[0]);
        for (std::size_t k = 1; k < length_; ++k) {
            kernel[k] = std::conj(b->chirp[k]);
            kernel[m - k] = kernel[k];
        }
        b->kernel_spectrum = b->inner->forward(kernel);
        bluestein_ = std::move(b);
    }

    void run_bluestein(std::span<const Complex> in, std::span<Complex> out) const {
        const auto& b = *bluestein_;
        std::vector<Complex> a(b.conv_length, Complex{0.0, 0.0});
        for (std::size_t k = 0; k < length_; ++k) a[k] = in[k] * b.chirp[k];
        std::vector<Complex> spec = b.inner->forward(a);
        for (std::size_t j = 0; j < b.conv_length; ++j) spec[j] *= b.kernel_spectrum[j];
        std::vector<Complex> conv = b.inner->inverse(spec);
        for (std::size_t k = 0; k < length_; ++k) out[k] = conv[k] * b.chirp[k];
    }

    // Transform `len` elements read from `in` with stride `stride` into the
    // contiguous block `out`. `tw_step` maps sub-length twiddles onto the
    // top-level table: W_len^j == twiddles_[j * tw_step].
    void run_mixed(const Complex* in, std::size_t stride, Complex* out, std::size_t len,
                   std::size_t level, std::size_t tw_step) const {
        if (len == 1) {
            out[0] = in[0];
            return;
        }
        const std::size_t p = radices_[level];
        const std::size_t m = len / p;
        for (std::size_t q = 0; q < p; ++q)
            run_mixed(in + q * stride, stride * p, out + q * m, m, level + 1, tw_step * p);

        Complex scratch[kMaxRadix];
        for (std::size_t k = 0; k < m; ++k) {
            scratch[0] = out[k];
            for (std::size_t q = 1; q < p; ++q)
                scratch[q] = out[q * m + k] * twiddles_[(q * k * tw_step) % length_];
            butterfly(scratch, p, tw_step * m);
            for (std::size_t r = 0; r < p; ++r) out[r * m + k] = scratch[r];
        }
    }

    // In-place length-p DFT of `x`; `root_step` indexes W_p in the table.
    void butterfly(Complex* x, std::size_t p, std::size_t root_step) const {
        switch (p) {
        case 2: {
            const Complex a = x[0], b = x[1];
            x[0] = a + b;
            x[1] = a - b;
            return;
        }
        case 3: {
            constexpr double s3 = 0.86602540378443864676;
            const Complex t1 = x[1] + x[2];
            const Complex t2 = x[0] - 0.5 * t1;
            const Complex d = x[1] - x[2];
            const Complex t3{s3 * d.imag(), -s3 * d.real()};  // -i*sin(pi/3)*d
            x[0] = x[0] + t1;
            x[1] = t2 + t3;
            x[2] = t2 - t3;
            return;
        }
        case 4: {
            const Complex a = x[0] + x[2], b = x[0] - x[2];
            const Complex c = x[1] + x[3], d = x[1] - x[3];
            const Complex mid{d.imag(), -d.real()};  // -i*d
            x[0] = a + c;
            x[1] = b + mid;
            x[2] = a - c;
            x[3] = b - mid;
            return;
        }
        case 5: {
            const Complex w1 = twiddles_[root_step % length_];
            const Complex w2 = twiddles_[(2 * root_step) % length_];
            const Complex a1 = x[1] + x[4], b1 = x[1] - x[4];
            const Complex a2 = x[2] + x[3], b2 = x[2] - x[3];
            const Complex x0 = x[0];
            x[0] = x0 + a1 + a2;
            const Complex c1 = x0 + w1.real() * a1 + w2.real() * a2;
            const Complex c2 = x0 + w2.real() * a1 + w1.real() * a2;
            const Complex s1 = w1.imag() * b1 + w2.imag() * b2;
            const Complex s2 = w2.imag() * b1 - w1.imag() * b2;
            const Complex is1{-s1.imag(), s1.real()};
            const Complex is2{-s2.imag(), s2.real()};
            x[1] = c1 + is1;
            x[4] = c1 - is1;
            x[2] = c2 + is2;
            x[3] = c2 - is2;
            return;
        }
        default: {
            Complex result[kMaxRadix];
            for (std::size_t r = 0; r < p; ++r) {
                Complex acc = x[0];
                for (std::size_t q = 1; q < p; ++q)
                    acc += x[q] * twiddles_[((q * r) % p) * root_step % length_];
                result[r] = acc;
            }
            for (std::size_t r = 0; r < p; ++r) x[r] = result[r];
        }
        }
    }

    std::size_t length_;
    std::vector<Complex> twiddles_;
    std::vector<std::size_t> radices_;
    std::unique_ptr<Bluestein> bluestein_;
};

inline std::vector<Complex> dft_forward(std::span<const Complex> signal) {
    if (signal.empty()) throw DimensionError("dft_forward: empty input");
    return FftPlan(signal.size()).forward(signal);
}

inline std::vector<Complex> dft_inverse(std::span<const Complex> spectrum) {
    if (spectrum.empty()) throw DimensionError("dft_inverse: empty input");
    return FftPlan(spectrum.size()).inverse(spectrum);
}

inline std::vector<Complex> dft_forward(std::span<const double> signal) {
    std::vector<Complex> z(signal.begin(), signal.end());
    return dft_forward(std::span<const Complex>(z));
}

// Column-wise transform: each column of `x` (rows = samples) is one signal.
inline CMatrix dft_columns(const Eigen::Ref<const CMatrix>& x, const FftPlan& plan) {
    if (static_cast<std::size_t>(x.rows()) != plan.size())
        throw DimensionError("dft_columns: row count does not match plan length");
    CMatrix out(x.rows(), x.cols());
    std::vector<Complex> in(x.rows()), res(x.rows());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        for (Eigen::Index r = 0; r < x.rows(); ++r) in[r] = x(r, c);
        plan.forward(in, res);
        for (Eigen::Index r = 0; r < x.rows(); ++r) out(r, c) = res[r];
    }
    return out;
}

inline CMatrix dft_columns(const Eigen::Ref<const Matrix>& x, const FftPlan& plan) {
    return dft_columns(CMatrix(x.cast<Complex>()), plan);
}

inline CMatrix idft_columns(const Eigen::Ref<const CMatrix>& x, const FftPlan& plan) {
    if (static_cast<std::size_t>(x.rows()) != plan.size())
        throw DimensionError("idft_columns: row count does not match plan length");
    CMatrix out(x.rows(), x.cols());
    std::vector<Complex> in(x.rows()), res(x.rows());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        for (Eigen::Index r = 0; r < x.rows(); ++r) in[r] = x(r, c);
        plan.inverse(in, res);
        for (Eigen::Index r = 0; r < x.rows(); ++r) out(r, c) = res[r];
    }
    return out;
}

// Smallest length >= n whose prime factors are all in {2, 3, 5}.
inline std::size_t next_fast_length(std::size_t n) {
    for (std::size_t len = std::max<std::size_t>(n, 1);; ++len) {
        std::size_t r = len;
        for (std::size_t p : {2u, 3u, 5u})
            while (r % p == 0) r /= p;
        if (r == 1) return len;
    }
}

}  // namespace dcissim
