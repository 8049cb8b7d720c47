#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cellmix {

// Iterative radix-2 complex FFT, enough for the power-of-two rasters the
// spectral mix-norm uses.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse = false) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft size must be 2^k");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        for (auto& z : a) z /= static_cast<double>(n);
    }
}

// 2D FFT over a row-major grid (ny rows of nx), in place.
inline void fft2_inplace(std::vector<std::complex<double>>& a, std::size_t nx, std::size_t ny) {
    if (a.size() != nx * ny) throw std::invalid_argument("fft2 size mismatch");
    std::vector<std::complex<double>> buf;
    for (std::size_t j = 0; j < ny; ++j) {
        buf.assign(a.begin() + static_cast<std::ptrdiff_t>(j * nx),
                   a.begin() + static_cast<std::ptrdiff_t>((j + 1) * nx));
        fft_inplace(buf);
        std::copy(buf.begin(), buf.end(), a.begin() + static_cast<std::ptrdiff_t>(j * nx));
    }
    buf.resize(ny);
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) buf[j] = a[j * nx + i];
        fft_inplace(buf);
        for (std::size_t j = 0; j < ny; ++j) a[j * nx + i] = buf[j];
    }
}

} // namespace cellmix
