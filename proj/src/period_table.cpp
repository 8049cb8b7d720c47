#include "cellmix/period_table.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cellmix {

std::vector<std::array<double, 4>> spline_coeffs(const std::vector<double>& x,
                                                 const std::vector<double>& y,
                                                 const double* left_slope) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw std::invalid_argument("spline needs >= 2 nodes");
    std::vector<double> h(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x[i + 1] - x[i];
        if (!(h[i] > 0.0)) throw std::invalid_argument("spline nodes must increase");
    }
    // Tridiagonal solve for second derivatives; natural right end, natural
    // or clamped (given first derivative) left end.
    std::vector<double> m(n, 0.0);
    std::vector<double> diag(n), rhs(n), upper(n, 0.0), lower(n, 0.0);
    std::size_t lo = 1; // first unknown index
    if (left_slope != nullptr) {
        lo = 0;
        diag[0] = 2.0 * h[0];
        upper[0] = h[0];
        rhs[0] = 6.0 * ((y[1] - y[0]) / h[0] - *left_slope);
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
        lower[i] = h[i - 1];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        upper[i] = h[i];
        rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    // Unknowns m[lo .. n-2]; m[n-1] = 0 (natural right).  When the left end
    // is natural, m[0] = 0 and the first equation drops its lower term.
    if (n > lo + 1) {
        for (std::size_t i = lo + 1; i + 1 < n; ++i) {
            const double w = lower[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for (std::size_t i = n - 1; i-- > lo;) {
            const double up = i + 2 < n ? upper[i] * m[i + 1] : 0.0;
            m[i] = (rhs[i] - up) / diag[i];
        }
    }
    std::vector<std::array<double, 4>> coef(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double a = y[i];
        const double c = m[i] / 2.0;
        const double d = (m[i + 1] - m[i]) / (6.0 * h[i]);
        const double b = (y[i + 1] - y[i]) / h[i] - h[i] * (m[i + 1] + 2.0 * m[i]) / 6.0;
        coef[i] = {a, b, c, d};
    }
    return coef;
}

std::vector<std::array<double, 4>> natural_spline_coeffs(const std::vector<double>& x,
                                                         const std::vector<double>& y) {
    return spline_coeffs(x, y, nullptr);
}

PeriodTable PeriodTable::from_spline(std::vector<double> s_in, std::vector<double> t_in) {
    PeriodTable t;
    t.s = std::move(s_in);
    t.T = std::move(t_in);
    t.coef = natural_spline_coeffs(t.s, t.T);
    t.finalize();
    return t;
}

void PeriodTable::finalize() {
    if (coef.size() + 1 != s.size() || T.size() != s.size())
        throw std::logic_error("period table segment mismatch");
    F.assign(s.size(), 0.0);
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const double u = s[i + 1] - s[i];
        const auto& c = coef[i];
        F[i + 1] = F[i] + u * (c[0] + u * (c[1] / 2 + u * (c[2] / 3 + u * c[3] / 4)));
        // Positivity scan: F must stay strictly increasing.
        for (int k = 0; k <= 8; ++k) {
            const double uu = u * k / 8.0;
            const double val = c[0] + uu * (c[1] + uu * (c[2] + uu * c[3]));
            if (!(val > 0.0)) throw std::logic_error("period interpolant dipped below zero");
        }
    }
    if (s_max == 0.0) s_max = s.back();
}

std::size_t PeriodTable::interval(double level) const {
    const auto it = std::upper_bound(s.begin(), s.end(), level);
    std::size_t i = static_cast<std::size_t>(it - s.begin());
    if (i == 0) return 0;
    if (i >= s.size()) return s.size() - 2;
    return i - 1;
}

double PeriodTable::F_of(double level) const {
    if (level <= 0.0) return 0.0;
    if (level >= s.back()) return F.back();
    const std::size_t i = interval(level);
    const double u = level - s[i];
    const auto& c = coef[i];
    return F[i] + u * (c[0] + u * (c[1] / 2 + u * (c[2] / 3 + u * c[3] / 4)));
}

double PeriodTable::T_of(double level) const {
    if (level <= 0.0) return T.front();
    if (level >= s.back()) return T.back();
    const std::size_t i = interval(level);
    const double u = level - s[i];
    const auto& c = coef[i];
    return c[0] + u * (c[1] + u * (c[2] + u * c[3]));
}

double PeriodTable::level_at_fraction(double frac) const {
    frac = std::clamp(frac, 0.0, 1.0);
    const double target = frac * F.back();
    double lo = 0.0, hi = s.back();
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (F_of(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

void PeriodTable::write_csv(const std::string& path, const std::string& header_comment) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "s,T,F\n";
    out.precision(17);
    for (std::size_t i = 0; i < s.size(); ++i) {
        out << s[i] << ',' << T[i] << ',' << F[i] << '\n';
    }
}

} // namespace cellmix
