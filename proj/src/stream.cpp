#include "cellmix/stream.hpp"

#include "cellmix/tracer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>
#include <vector>

namespace cellmix {

namespace {

constexpr double kSMax = kBaseMax; // generator maximum 2/pi

} // namespace

// ---------------------------------------------------------------------------
// Spec plumbing

const char* to_string(StreamKind kind) {
    switch (kind) {
        case StreamKind::Base: return "base";
        case StreamKind::TimeWaste: return "time-waste";
        case StreamKind::Regularized: return "regularized";
        case StreamKind::TimeWasteRegularized: return "time-waste-regularized";
        case StreamKind::Truncated: return "truncated";
        case StreamKind::TruncatedP: return "truncated-p";
        case StreamKind::TimeWasteTruncated: return "time-waste-truncated";
        case StreamKind::SimpleCutoff: return "simple-cutoff";
    }
    return "?";
}

StreamKind stream_kind_from_string(const std::string& name) {
    for (StreamKind k :
         {StreamKind::Base, StreamKind::TimeWaste, StreamKind::Regularized,
          StreamKind::TimeWasteRegularized, StreamKind::Truncated, StreamKind::TruncatedP,
          StreamKind::TimeWasteTruncated, StreamKind::SimpleCutoff}) {
        if (name == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown stream kind: " + name);
}

StreamSpec StreamSpec::base(int sign) { return {StreamKind::Base, 0, 0, 0, sign}; }
StreamSpec StreamSpec::time_waste(int sign) { return {StreamKind::TimeWaste, 0, 0, 0, sign}; }
StreamSpec StreamSpec::regularized(double a, int sign) {
    StreamSpec s{StreamKind::Regularized, a, 0, 0, sign};
    s.validate();
    return s;
}
StreamSpec StreamSpec::time_waste_regularized(double a, int sign) {
    StreamSpec s{StreamKind::TimeWasteRegularized, a, 0, 0, sign};
    s.validate();
    return s;
}
StreamSpec StreamSpec::truncated(double a, double delta, int sign) {
    StreamSpec s{StreamKind::Truncated, a, delta, 0, sign};
    s.validate();
    return s;
}
StreamSpec StreamSpec::time_waste_truncated(double a, double delta, int sign, double p) {
    StreamSpec s{StreamKind::TimeWasteTruncated, a, delta, p, sign};
    s.validate();
    return s;
}
StreamSpec StreamSpec::truncated_p(double p, double delta, int sign) {
    StreamSpec s{StreamKind::TruncatedP, (p - 1.0) / (3.0 * p - 1.0), delta, p, sign};
    s.validate();
    return s;
}
StreamSpec StreamSpec::simple_cutoff(double delta, int sign) {
    StreamSpec s{StreamKind::SimpleCutoff, 0, delta, 0, sign};
    s.validate();
    return s;
}

void StreamSpec::validate() const {
    if (orientation_sign != 1 && orientation_sign != -1)
        throw std::invalid_argument("orientation_sign must be +1 or -1");
    const bool uses_a = kind == StreamKind::Regularized || kind == StreamKind::TimeWasteRegularized ||
                        is_truncated_family();
    if (uses_a && !(a > 0.0 && a <= 1.0)) throw std::invalid_argument("a must lie in (0, 1]");
    const bool uses_delta = is_truncated_family() || kind == StreamKind::SimpleCutoff;
    if (uses_delta && !(delta > 0.0 && delta < 0.1))
        throw std::invalid_argument("delta must lie in (0, 1/10)");
    if (kind == StreamKind::TruncatedP ||
        (kind == StreamKind::TimeWasteTruncated && p != 0.0)) {
        if (!(p >= regularity_threshold() - 1e-12))
            throw std::invalid_argument("p must be >= (3 + sqrt 5)/2");
        const double want = (p - 1.0) / (3.0 * p - 1.0);
        if (std::abs(a - want) > 1e-12)
            throw std::invalid_argument("p-truncated kinds require a = (p-1)/(3p-1)");
    }
}

std::string StreamSpec::to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "kind=" << to_string(kind);
    out << " a=" << a << " delta=" << delta << " p=" << p << " sign=" << orientation_sign;
    return out.str();
}

StreamSpec StreamSpec::from_text(const std::string& text) {
    StreamSpec s;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("bad spec token: " + tok);
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "kind") s.kind = stream_kind_from_string(val);
        else if (key == "a") s.a = std::stod(val);
        else if (key == "delta") s.delta = std::stod(val);
        else if (key == "p") s.p = std::stod(val);
        else if (key == "sign") s.orientation_sign = std::stoi(val);
        else throw std::invalid_argument("unknown spec key: " + key);
    }
    s.validate();
    return s;
}

bool operator==(const StreamSpec& lhs, const StreamSpec& rhs) {
    return lhs.kind == rhs.kind && lhs.a == rhs.a && lhs.delta == rhs.delta && lhs.p == rhs.p &&
           lhs.orientation_sign == rhs.orientation_sign;
}

// ---------------------------------------------------------------------------
// Generators

double boundary_period_limit(double a) {
    if (a == 0.0) return 1.0;
    // 4 [ int_0^{1/10} (5r)^{-a} dr + int_{1/10}^{1/4} f(r)^{-a} dr ],
    // first part in closed form, second by composite Simpson.
    const double part1 = 0.2 * std::pow(0.5, 1.0 - a) / (1.0 - a);
    const int n = 512;
    const double lo = 0.1, hi = 0.25;
    const double h = (hi - lo) / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double r = lo + i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += w * std::pow(cutoff(r), -a);
    }
    return 4.0 * (part1 + sum * h / 3.0);
}

namespace {

// Largest clearance coefficient for one probe point, by radial bisection of
// {phi_a >= delta/2} along rays into the square.
double clearance_at(double a, const Vec2& origin, double theta_lo, double theta_hi) {
    const double delta0 = 1e-2;
    const double target = 0.5 * delta0;
    auto phi_a = [&](const Vec2& q) {
        const double phi = base_value(q);
        const PointDistance pd = dist_stagnation(q);
        return phi * std::pow(cutoff(pd.d), a);
    };
    double best = 1e300;
    const int nang = 181;
    for (int k = 1; k < nang; ++k) {
        const double th = theta_lo + (theta_hi - theta_lo) * k / nang;
        const Vec2 dir{std::cos(th), std::sin(th)};
        double r_lo = 1e-7, r_hi = 0.0;
        for (double r = 1e-6; r <= 0.45; r *= 1.07) {
            const Vec2 q = origin + r * dir;
            if (q.x <= 0 || q.x >= 1 || q.y <= 0 || q.y >= 1) break;
            if (phi_a(q) >= target) {
                r_hi = r;
                break;
            }
            r_lo = r;
        }
        if (r_hi == 0.0) continue; // ray never reaches the level
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (r_lo + r_hi);
            (phi_a(origin + mid * dir) >= target ? r_hi : r_lo) = mid;
        }
        best = std::min(best, r_hi);
    }
    return best / std::pow(delta0, 1.0 / (a + 1.0));
}

} // namespace

double stagnation_clearance_coeff(double a) {
    static std::mutex mtx;
    static std::map<double, double> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(a);
    if (it != cache.end()) return it->second;
    const double c_corner = clearance_at(a, {0.0, 0.0}, 0.0, 0.5 * M_PI);
    const double c_side = clearance_at(a, {0.5, 0.0}, 0.0, M_PI);
    const double c = 0.999 * std::min(c_corner, c_side);
    cache.emplace(a, c);
    return c;
}

double truncation_radius(const StreamSpec& spec) {
    if (!spec.is_truncated_family()) throw std::invalid_argument("spec has no truncation radius");
    return stagnation_clearance_coeff(spec.a) * std::pow(spec.delta, 1.0 / (spec.a + 1.0));
}

GeneratorEval eval_generator(const StreamSpec& spec, const Vec2& q) {
    switch (spec.kind) {
        case StreamKind::Base: {
            const BaseEval b = eval_base(q);
            return {b.value, b.grad};
        }
        case StreamKind::Regularized: {
            const BaseEval b = eval_base(q);
            const PointDistance pd = dist_stagnation(q);
            if (pd.d == 0.0) return {0.0, {0.0, 0.0}};
            const CutoffValue f = cutoff_with_deriv(pd.d);
            const double fa = std::pow(f.f, spec.a);
            const double dfa = spec.a * std::pow(f.f, spec.a - 1.0) * f.df;
            return {b.value * fa, b.grad * fa + (b.value * dfa) * pd.grad};
        }
        case StreamKind::Truncated: {
            const BaseEval b = eval_base(q);
            const PointDistance pd = dist_stagnation(q);
            if (pd.d == 0.0) return {0.0, {0.0, 0.0}};
            const double dad = truncation_radius(spec);
            const CutoffValue f1 = cutoff_with_deriv(pd.d);
            const CutoffValue f2 = cutoff_with_deriv(pd.d / dad);
            const double w = std::pow(f1.f, spec.a) * std::pow(f2.f, 1.0 - spec.a);
            const double dw = spec.a * std::pow(f1.f, spec.a - 1.0) * f1.df *
                                  std::pow(f2.f, 1.0 - spec.a) +
                              std::pow(f1.f, spec.a) * (1.0 - spec.a) *
                                  std::pow(f2.f, -spec.a) * f2.df / dad;
            return {b.value * w, b.grad * w + (b.value * dw) * pd.grad};
        }
        case StreamKind::TruncatedP: {
            const BaseEval b = eval_base(q);
            const PointDistance pd = dist_stagnation(q);
            if (pd.d == 0.0) return {0.0, {0.0, 0.0}};
            const double dad = truncation_radius(spec);
            const CutoffValue f1 = cutoff_with_deriv(pd.d);
            const CutoffValue f2 = cutoff_with_deriv(pd.d / dad);
            const double e = 1.0 - spec.a - 2.0 / spec.p;
            const double fa = std::pow(f1.f, spec.a);
            const double dfa = spec.a * std::pow(f1.f, spec.a - 1.0) * f1.df;
            const double lg = 1.0 - std::log(f2.f);
            const double g = std::pow(f2.f, e) / lg;
            // g'(d) = (f2'/dad) f2^{e-1} lg^{-1} (e + lg^{-1})
            const double dg = (f2.df / dad) * std::pow(f2.f, e - 1.0) / lg * (e + 1.0 / lg);
            const double w = fa * g;
            const double dw = dfa * g + fa * dg;
            return {b.value * w, b.grad * w + (b.value * dw) * pd.grad};
        }
        default:
            throw std::invalid_argument("unsupported kind for eval_generator: " +
                                        std::string(to_string(spec.kind)));
    }
}

// ---------------------------------------------------------------------------
// Period tracing

namespace {

// Launch height on the section {x = 1/2}: bisect the monotone section profile
// of the generator (or of base psi for SimpleCutoff levels).
double section_height(const StreamSpec& spec, double level) {
    auto profile = [&](double y) -> double {
        if (spec.kind == StreamKind::SimpleCutoff) {
            return period_table(StreamSpec::base()).F_of(base_value({0.5, y}));
        }
        return eval_generator(spec, {0.5, y}).value;
    };
    double lo = 0.0, hi = 0.5;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (profile(mid) < level ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double level_cap(const StreamSpec& spec) {
    if (spec.kind == StreamKind::SimpleCutoff) return period_table(StreamSpec::base()).F_total();
    return kSMax;
}

StepControl trace_control() {
    StepControl ctl;
    ctl.tol_per_unit_time = 1e-9;
    ctl.h_init = 1e-3;
    ctl.h_max = 2e-2;
    return ctl;
}

} // namespace

double trace_period(const StreamSpec& spec, double level, double time_cap) {
    if (spec.is_time_waste())
        throw std::invalid_argument("time-wasting streams have no closed streamlines to trace");
    const double cap = level_cap(spec);
    if (!(level > 0.0 && level < cap)) throw std::domain_error("level outside (0, s_max)");
    const Vec2 start{0.5, section_height(spec, level)};
    ReturnResult rr;
    if (spec.kind == StreamKind::SimpleCutoff) {
        const PeriodTable& base = period_table(StreamSpec::base());
        auto rhs = [&](const Vec2& q) {
            const BaseEval b = eval_base(q);
            const double psi = base.F_of(b.value);
            const CutoffValue f = cutoff_with_deriv(psi / spec.delta);
            const double hprime = f.f + (psi / spec.delta) * f.df;
            return (hprime * base.T_of(b.value)) * perp(b.grad);
        };
        rr = first_return_time(rhs, start, 0.5, 0.5, time_cap, trace_control());
    } else {
        auto rhs = [&](const Vec2& q) { return perp(eval_generator(spec, q).grad); };
        rr = first_return_time(rhs, start, 0.5, 0.5, time_cap, trace_control());
    }
    if (!rr.ok) throw std::runtime_error("open or degenerate streamline at level " +
                                         std::to_string(level));
    return rr.time;
}

double trace_stream_period(const StreamSpec& spec, const PeriodTable& table, double level,
                           double time_cap) {
    if (spec.is_time_waste())
        throw std::invalid_argument("time-wasting streams have no closed streamlines to trace");
    const double cap = level_cap(spec);
    if (!(level > 0.0 && level < cap)) throw std::domain_error("level outside (0, s_max)");
    StreamSpec fwd = spec;
    fwd.orientation_sign = 1;
    auto rhs = [&](const Vec2& q) { return eval_velocity(fwd, table, q); };
    const Vec2 start{0.5, section_height(spec, level)};
    const ReturnResult rr = first_return_time(rhs, start, 0.5, 0.5, time_cap, trace_control());
    if (!rr.ok) throw std::runtime_error("open or degenerate streamline at level " +
                                         std::to_string(level));
    return rr.time;
}

// ---------------------------------------------------------------------------
// Period tables

namespace {

std::vector<double> generator_level_grid(double s_max) {
    std::vector<double> s;
    s.reserve(512);
    // Log-refined toward 0.
    const int nlow = 144;
    for (int k = 0; k < nlow; ++k) {
        const double u = static_cast<double>(k) / (nlow - 1);
        s.push_back(s_max * std::pow(10.0, -6.0 + u * (std::log10(0.4) + 6.0)));
    }
    // Uniform middle.
    const int nmid = 200;
    for (int k = 1; k < nmid; ++k)
        s.push_back(s_max * (0.4 + 0.52 * static_cast<double>(k) / nmid));
    // Log-refined toward s_max.
    const int nhigh = 144;
    for (int k = 0; k < nhigh; ++k) {
        const double u = static_cast<double>(k) / (nhigh - 1);
        s.push_back(s_max * (1.0 - 0.08 * std::pow(10.0, -u * 6.0)));
    }
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

// Raw generator table: traced periods with the boundary limit pinned at s=0
// and a linear extrapolation onto the center level s_max.
PeriodTable raw_generator_table(const StreamSpec& spec) {
    std::vector<double> ss, tt;
    ss.push_back(0.0);
    tt.push_back(boundary_period_limit(spec.kind == StreamKind::Base ? 0.0 : spec.a));
    const std::vector<double> grid = generator_level_grid(kSMax);
    for (double s : grid) {
        ss.push_back(s);
        tt.push_back(trace_period(spec, s));
    }
    const std::size_t n = ss.size();
    const double slope = (tt[n - 1] - tt[n - 2]) / (ss[n - 1] - ss[n - 2]);
    ss.push_back(kSMax);
    tt.push_back(tt.back() + slope * (kSMax - ss[n - 1]));
    PeriodTable t = PeriodTable::from_spline(std::move(ss), std::move(tt));
    t.s_max = kSMax;
    return t;
}

PeriodTable truncated_table(const StreamSpec& spec, const PeriodTable& raw) {
    const double delta = spec.delta;
    const double v = raw.T_of(delta);
    const double h = 1e-3 * delta;
    const double m = (raw.T_of(delta + h) - raw.T_of(delta - h)) / (2.0 * h);
    const double w = 0.5 * delta;

    // Constant piece on [0, delta/2], then the exact Hermite blend
    // v + m (u^3/w^2 - u^2/w) with u = s - delta/2 (equal endpoint values,
    // slopes 0 and m: |T - v| <= (2/27) delta |m| and |T'| <= |m| on the
    // blend), then a left-clamped spline through the raw nodes above delta.
    PeriodTable t;
    t.s = {0.0, 0.25 * delta, 0.5 * delta, delta};
    t.T = {v, v, v, v};
    t.coef = {{v, 0, 0, 0}, {v, 0, 0, 0}, {v, 0.0, -m / w, m / (w * w)}};

    std::vector<double> tail_s{delta};
    std::vector<double> tail_t{v};
    for (std::size_t i = 0; i < raw.s.size(); ++i) {
        if (raw.s[i] > delta * (1.0 + 1e-12)) {
            tail_s.push_back(raw.s[i]);
            tail_t.push_back(raw.T[i]);
        }
    }
    const auto tail = spline_coeffs(tail_s, tail_t, &m);
    for (std::size_t i = 1; i < tail_s.size(); ++i) {
        t.s.push_back(tail_s[i]);
        t.T.push_back(tail_t[i]);
    }
    t.coef.insert(t.coef.end(), tail.begin(), tail.end());
    t.s_max = kSMax;
    t.blend_lo = 0.5 * delta;
    t.blend_hi = delta;
    t.finalize();
    t.s_trunc = t.F_of(delta);

    // Both truncation-blend constraints, checked on a fine scan.
    for (int k = 0; k <= 512; ++k) {
        const double s = delta * static_cast<double>(k) / 512;
        const double val = t.T_of(s);
        if (std::abs(val - v) > 0.5 * v + 1e-12)
            throw std::logic_error("period blend violates the half-period constraint");
        const double ds = delta / 4096;
        const double deriv = (t.T_of(std::min(s + ds, delta)) - t.T_of(std::max(s - ds, 0.0))) /
                             (std::min(s + ds, delta) - std::max(s - ds, 0.0));
        if (std::abs(deriv) > std::abs(m) * (1.0 + 1e-6) + 1e-9)
            throw std::logic_error("period blend violates the slope constraint");
    }
    return t;
}

// Fully normalized twin for truncated kinds: raw periods of the truncated
// generator itself below delta, shared raw periods above.
PeriodTable virtual_truncated_table(const StreamSpec& spec, const PeriodTable& raw) {
    const double delta = spec.delta;
    std::vector<double> ss{0.0}, tt{0.0};
    const int nlow = 80;
    for (int k = 0; k < nlow; ++k) {
        const double u = static_cast<double>(k) / (nlow - 1);
        const double s = delta * std::pow(2.0, -18.0 * (1.0 - u));
        ss.push_back(s);
        tt.push_back(trace_period(spec, s));
    }
    tt[0] = tt[1]; // flat extension of the deepest traced node
    for (std::size_t i = 0; i < raw.s.size(); ++i) {
        if (raw.s[i] > delta * (1.0 + 1e-12)) {
            ss.push_back(raw.s[i]);
            tt.push_back(raw.T[i]);
        }
    }
    PeriodTable t = PeriodTable::from_spline(std::move(ss), std::move(tt));
    t.s_max = kSMax;
    return t;
}

PeriodTable simple_cutoff_table(const StreamSpec& spec) {
    const PeriodTable& base = period_table(StreamSpec::base());
    const double total = base.F_total();
    auto damped_period = [&](double spsi) {
        const CutoffValue f = cutoff_with_deriv(spsi / spec.delta);
        const double hprime = f.f + (spsi / spec.delta) * f.df;
        return 1.0 / hprime;
    };
    const double s_lo = spec.delta / 64.0;
    std::vector<double> ss{0.0}, tt{damped_period(s_lo)};
    const int n = 400;
    for (int k = 0; k < n; ++k) {
        const double u = static_cast<double>(k) / (n - 1);
        const double s = s_lo * std::pow(total / s_lo, u);
        ss.push_back(s);
        tt.push_back(damped_period(s));
    }
    if (ss.back() < total) {
        ss.push_back(total);
        tt.push_back(1.0);
    }
    PeriodTable t = PeriodTable::from_spline(std::move(ss), std::move(tt));
    t.s_max = total;
    t.s_trunc = spec.delta;
    return t;
}

struct StreamCacheEntry {
    PeriodTable actual;
    PeriodTable virt;
    bool has_virtual = false;
};

std::tuple<int, double, double, double> cache_key(const StreamSpec& spec) {
    return {static_cast<int>(spec.kind), spec.a, spec.delta, spec.p};
}

StreamSpec generator_family(const StreamSpec& spec) {
    // Map time-wasting kinds onto the psi family they are matched to.
    StreamSpec g = spec;
    g.orientation_sign = 1;
    switch (spec.kind) {
        case StreamKind::TimeWaste: g.kind = StreamKind::Base; break;
        case StreamKind::TimeWasteRegularized: g.kind = StreamKind::Regularized; break;
        case StreamKind::TimeWasteTruncated:
            g.kind = spec.p != 0.0 ? StreamKind::TruncatedP : StreamKind::Truncated;
            break;
        default: break;
    }
    return g;
}

// Builds may recurse (a truncated table needs the regularized one, eta needs
// base), so the cache lock must be re-entrant.
const StreamCacheEntry& cache_entry(const StreamSpec& spec_in) {
    const StreamSpec spec = generator_family(spec_in);
    static std::recursive_mutex mtx;
    static std::map<std::tuple<int, double, double, double>, std::unique_ptr<StreamCacheEntry>>
        entries;
    const auto key = cache_key(spec);
    std::lock_guard<std::recursive_mutex> lock(mtx);
    auto it = entries.find(key);
    if (it != entries.end()) return *it->second;
    auto entry = std::make_unique<StreamCacheEntry>();
    entry->actual = build_period_table(spec);
    if (spec.is_truncated_family()) {
        entry->virt = build_virtual_table(spec);
        entry->has_virtual = true;
    }
    auto [pos, inserted] = entries.emplace(key, std::move(entry));
    return *pos->second;
}

} // namespace

PeriodTable build_period_table(const StreamSpec& spec_in) {
    const StreamSpec spec = generator_family(spec_in);
    switch (spec.kind) {
        case StreamKind::Base:
        case StreamKind::Regularized:
            return raw_generator_table(spec);
        case StreamKind::Truncated:
        case StreamKind::TruncatedP: {
            StreamSpec reg = StreamSpec::regularized(spec.a);
            return truncated_table(spec, period_table(reg));
        }
        case StreamKind::SimpleCutoff:
            return simple_cutoff_table(spec);
        default:
            throw std::invalid_argument("no period table for this kind");
    }
}

PeriodTable build_virtual_table(const StreamSpec& spec_in) {
    const StreamSpec spec = generator_family(spec_in);
    if (spec.kind == StreamKind::Truncated || spec.kind == StreamKind::TruncatedP) {
        StreamSpec reg = StreamSpec::regularized(spec.a);
        return virtual_truncated_table(spec, period_table(reg));
    }
    return build_period_table(spec);
}

const PeriodTable& period_table(const StreamSpec& spec) { return cache_entry(spec).actual; }

const PeriodTable& virtual_period_table(const StreamSpec& spec) {
    const StreamCacheEntry& e = cache_entry(spec);
    return e.has_virtual ? e.virt : e.actual;
}

// ---------------------------------------------------------------------------
// Stream evaluation

double eval_stream(const StreamSpec& spec, const PeriodTable& table, const Vec2& q) {
    if (spec.kind == StreamKind::SimpleCutoff) {
        const PeriodTable& base = period_table(StreamSpec::base());
        const double psi = base.F_of(base_value(q));
        return psi * cutoff(psi / spec.delta);
    }
    if (spec.is_time_waste())
        throw std::invalid_argument("eval_stream does not apply to time-wasting kinds");
    return table.F_of(eval_generator(spec, q).value);
}

Vec2 eval_velocity(const StreamSpec& spec, const PeriodTable& table, const Vec2& q) {
    const double sign = spec.orientation_sign;
    if (spec.kind == StreamKind::SimpleCutoff) {
        const PeriodTable& base = period_table(StreamSpec::base());
        const BaseEval b = eval_base(q);
        const double psi = base.F_of(b.value);
        const CutoffValue f = cutoff_with_deriv(psi / spec.delta);
        const double hprime = f.f + (psi / spec.delta) * f.df;
        return (sign * hprime * base.T_of(b.value)) * perp(b.grad);
    }
    if (spec.is_time_waste()) return eval_eta(spec, q).velocity; // sign applied inside
    const GeneratorEval g = eval_generator(spec, q);
    return (sign * table.T_of(g.value)) * perp(g.grad);
}

// ---------------------------------------------------------------------------
// Time-wasting stream

namespace {

struct ValueGrad {
    double value;
    Vec2 grad;
};

// Closed form on the corner triangle {x, y > 0, x + y < 1/2}: eta1 =
// 4 x y z / (z (x + y) + sqrt2 x y) with z = 1/2 - x - y, written as a single
// rational to stay stable near the triangle edges.
ValueGrad eta_triangle(double x, double y) {
    const double z = 0.5 - x - y;
    const double num = x * y * z;
    const double den = z * (x + y) + std::sqrt(2.0) * x * y;
    if (den <= 1e-300) return {0.0, {0.0, 0.0}};
    const double nx = y * z - x * y;
    const double ny = x * z - x * y;
    const double dx = -(x + y) + z + std::sqrt(2.0) * y;
    const double dy = -(x + y) + z + std::sqrt(2.0) * x;
    const double inv = 1.0 / den;
    const double value = 4.0 * num * inv;
    return {value,
            {4.0 * (nx * den - num * dx) * inv * inv, 4.0 * (ny * den - num * dy) * inv * inv}};
}

ValueGrad eta_raw(const Vec2& q) {
    const double x = q.x, y = q.y;
    // Off-diagonal quadrant squares carry half-scale copies of base psi.
    if (x >= 0.5 && y <= 0.5 && x + y != 1.0) {
        const PeriodTable& base = period_table(StreamSpec::base());
        const Vec2 local{2.0 * (x - 0.5), 2.0 * y};
        const GeneratorEval g = eval_generator(StreamSpec::base(), local);
        return {0.5 * base.F_of(g.value), base.T_of(g.value) * g.grad};
    }
    if (x <= 0.5 && y >= 0.5) {
        const PeriodTable& base = period_table(StreamSpec::base());
        const Vec2 local{2.0 * x, 2.0 * (y - 0.5)};
        const GeneratorEval g = eval_generator(StreamSpec::base(), local);
        return {0.5 * base.F_of(g.value), base.T_of(g.value) * g.grad};
    }
    if (x + y <= 0.5) {
        return eta_triangle(x, y);
    }
    if (x + y >= 1.5) {
        // Even reflection across {x + y = 1} of the corner triangle.
        const ValueGrad t = eta_triangle(1.0 - y, 1.0 - x);
        return {t.value, {-t.grad.y, -t.grad.x}};
    }
    if (x <= 0.5 && y <= 0.5) {
        // Odd reflection across {x + y = 1/2}.
        const ValueGrad t = eta_triangle(0.5 - y, 0.5 - x);
        return {-t.value, {t.grad.y, t.grad.x}};
    }
    // Remaining quadrant: odd then even reflection composes to a negated
    // translate of the corner triangle.
    const ValueGrad t = eta_triangle(x - 0.5, y - 0.5);
    return {-t.value, {-t.grad.x, -t.grad.y}};
}

bool on_eta_seam(const Vec2& q) {
    const double tol = 1e-13;
    return std::abs(q.x - 0.5) < tol || std::abs(q.y - 0.5) < tol ||
           std::abs(q.x + q.y - 0.5) < tol || std::abs(q.x + q.y - 1.5) < tol;
}

} // namespace

EtaEval eval_eta(const StreamSpec& spec, const Vec2& q) {
    if (!spec.is_time_waste())
        throw std::invalid_argument("eval_eta requires a time-wasting kind");
    const ValueGrad raw = eta_raw(q);
    double value = raw.value;
    Vec2 grad = raw.grad;
    if (spec.kind != StreamKind::TimeWaste) {
        const PointDistance pd = dist_special(q);
        if (pd.d == 0.0) {
            value = 0.0;
            grad = {0.0, 0.0};
        } else if (spec.kind == StreamKind::TimeWasteRegularized) {
            const double t0 = boundary_period_limit(spec.a);
            const CutoffValue f = cutoff_with_deriv(pd.d);
            const double w = std::pow(f.f, spec.a);
            const double dw = spec.a * std::pow(f.f, spec.a - 1.0) * f.df;
            grad = t0 * (grad * w + (value * dw) * pd.grad);
            value *= t0 * w;
        } else {
            // Matched to psi_{a,delta} (or psi_{a,delta,p} when p is set):
            // amplitude T_{phi_a}(delta) and the same stagnation cutoff, so
            // the boundary speeds agree with the truncated cellular stream.
            const PeriodTable& tbl =
                period_table(StreamSpec::regularized(spec.a));
            const double td = tbl.T_of(spec.delta);
            const double dad =
                truncation_radius(StreamSpec::truncated(spec.a, spec.delta));
            const CutoffValue f1 = cutoff_with_deriv(pd.d);
            const CutoffValue f2 = cutoff_with_deriv(pd.d / dad);
            const double fa = std::pow(f1.f, spec.a);
            const double dfa = spec.a * std::pow(f1.f, spec.a - 1.0) * f1.df;
            double g = 0.0, dg = 0.0;
            if (spec.p != 0.0) {
                const double e = 1.0 - spec.a - 2.0 / spec.p;
                const double lg = 1.0 - std::log(f2.f);
                g = std::pow(f2.f, e) / lg;
                dg = (f2.df / dad) * std::pow(f2.f, e - 1.0) / lg * (e + 1.0 / lg);
            } else {
                g = std::pow(f2.f, 1.0 - spec.a);
                dg = (1.0 - spec.a) * std::pow(f2.f, -spec.a) * f2.df / dad;
            }
            const double w = fa * g;
            const double dw = dfa * g + fa * dg;
            grad = td * (grad * w + (value * dw) * pd.grad);
            value *= td * w;
        }
    }
    EtaEval out;
    out.value = spec.orientation_sign * value;
    out.velocity = static_cast<double>(spec.orientation_sign) * perp(grad);
    out.on_seam = on_eta_seam(q);
    return out;
}

// ---------------------------------------------------------------------------
// Stream fields

namespace {

class NormalizedField final : public StreamField {
  public:
    NormalizedField(const StreamSpec& spec, const PeriodTable& table)
        : spec_(spec), table_(table) {
        spec_.orientation_sign = 1;
    }
    double value(const Vec2& q) const override { return eval_stream(spec_, table_, q); }
    Vec2 velocity(const Vec2& q) const override { return eval_velocity(spec_, table_, q); }

  private:
    StreamSpec spec_;
    const PeriodTable& table_;
};

class EtaStreamField final : public StreamField {
  public:
    explicit EtaStreamField(const StreamSpec& spec) : spec_(spec) {
        spec_.orientation_sign = 1;
        // Force table construction now so evaluation is lock-free later.
        (void)period_table(spec_);
    }
    double value(const Vec2& q) const override { return eval_eta(spec_, q).value; }
    Vec2 velocity(const Vec2& q) const override { return eval_eta(spec_, q).velocity; }

  private:
    StreamSpec spec_;
};

class WrappedField final : public StreamField {
  public:
    WrappedField(std::shared_ptr<const StreamField> base, double scale)
        : base_(std::move(base)), scale_(scale) {}

    double value(const Vec2& q) const override { return base_->value(q) * factor(q).value; }

    Vec2 velocity(const Vec2& q) const override {
        const ValueGrad g = factor(q);
        return g.value * base_->velocity(q) + base_->value(q) * perp(g.grad);
    }

  private:
    ValueGrad factor(const Vec2& q) const {
        const CutoffValue fx = cutoff_with_deriv(q.x * (1.0 - q.x) / scale_);
        const CutoffValue fy = cutoff_with_deriv(q.y * (1.0 - q.y) / scale_);
        return {fx.f * fy.f,
                {fx.df * (1.0 - 2.0 * q.x) / scale_ * fy.f,
                 fx.f * fy.df * (1.0 - 2.0 * q.y) / scale_}};
    }

    std::shared_ptr<const StreamField> base_;
    double scale_;
};

} // namespace

std::shared_ptr<const StreamField> make_stream_field(const StreamSpec& spec) {
    if (spec.is_time_waste()) return std::make_shared<EtaStreamField>(spec);
    return std::make_shared<NormalizedField>(spec, period_table(spec));
}

std::shared_ptr<const StreamField> make_virtual_stream_field(const StreamSpec& spec) {
    if (spec.is_time_waste()) return std::make_shared<EtaStreamField>(spec);
    return std::make_shared<NormalizedField>(spec, virtual_period_table(spec));
}

std::shared_ptr<const StreamField> apply_boundary_factor(
    std::shared_ptr<const StreamField> base, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("boundary factor scale must be positive");
    return std::make_shared<WrappedField>(std::move(base), scale);
}

// ---------------------------------------------------------------------------
// Hessian norms

namespace {

double fd_hessian_frobenius(const StreamField& field, const Vec2& q, double d) {
    const double h = std::min(1e-5, std::max(1e-7, d / 8.0));
    const double c = field.value(q);
    const double xp = field.value({q.x + h, q.y});
    const double xm = field.value({q.x - h, q.y});
    const double yp = field.value({q.x, q.y + h});
    const double ym = field.value({q.x, q.y - h});
    const double pp = field.value({q.x + h, q.y + h});
    const double pm = field.value({q.x + h, q.y - h});
    const double mp = field.value({q.x - h, q.y + h});
    const double mm = field.value({q.x - h, q.y - h});
    const double hxx = (xp - 2 * c + xm) / (h * h);
    const double hyy = (yp - 2 * c + ym) / (h * h);
    const double hxy = (pp - pm - mp + mm) / (4 * h * h);
    return std::sqrt(hxx * hxx + hyy * hyy + 2 * hxy * hxy);
}

struct RingAccum {
    static constexpr int kMaxOctave = 28;
    std::array<double, kMaxOctave> mass{}; // integral of |H|^p per distance octave
    double far = 0.0;                      // d >= 1/8
    double max_seen = 0.0;

    void add(double d, double contrib, double pointval) {
        max_seen = std::max(max_seen, pointval);
        if (d >= 0.125) {
            far += contrib;
            return;
        }
        int k = static_cast<int>(std::floor(-std::log2(d)));
        k = std::clamp(k, 3, kMaxOctave - 1);
        mass[static_cast<std::size_t>(k)] += contrib;
    }
};

void integrate_region(const StreamField& field, double p, double x0, double y0, double size,
                      RingAccum& acc, int depth) {
    const Vec2 c{x0 + 0.5 * size, y0 + 0.5 * size};
    const double d = dist_special(c).d;
    const double min_center_dist = 6e-5;
    if (size > 0.5 * d && size > 4e-5 && depth < 26) {
        const double half = 0.5 * size;
        integrate_region(field, p, x0, y0, half, acc, depth + 1);
        integrate_region(field, p, x0 + half, y0, half, acc, depth + 1);
        integrate_region(field, p, x0, y0 + half, half, acc, depth + 1);
        integrate_region(field, p, x0 + half, y0 + half, half, acc, depth + 1);
        return;
    }
    if (d < min_center_dist) return; // guarded core, handled by tail extrapolation
    const double val = fd_hessian_frobenius(field, c, d);
    const double contrib = std::isfinite(p) ? std::pow(val, p) * size * size : 0.0;
    acc.add(d, contrib, val);
}

} // namespace

HessianNorm norm_hessian(const StreamSpec& spec, const PeriodTable& table, double p) {
    if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1");
    std::shared_ptr<const StreamField> field;
    if (spec.is_time_waste()) {
        field = std::make_shared<EtaStreamField>(spec);
    } else {
        field = std::make_shared<NormalizedField>(spec, table);
    }

    RingAccum acc;
    const int n0 = 48;
    for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n0; ++j)
            integrate_region(*field, std::isfinite(p) ? p : 1.0, static_cast<double>(i) / n0,
                             static_cast<double>(j) / n0, 1.0 / n0, acc, 0);

    // Extra polar sampling near the stagnation set (max tends to live there),
    // plus a band along the boundary where the period blend is active.
    if (!std::isfinite(p)) {
        for (const Vec2& pt : special_points()) {
            for (int kr = 0; kr < 64; ++kr) {
                const double r = 0.4 * std::pow(10.0, -4.0 * kr / 63.0);
                if (r < 1e-4) break;
                for (int ka = 0; ka < 64; ++ka) {
                    const double th = 2.0 * M_PI * ka / 64;
                    const Vec2 q{pt.x + r * std::cos(th), pt.y + r * std::sin(th)};
                    if (q.x <= 1e-4 || q.x >= 1 - 1e-4 || q.y <= 1e-4 || q.y >= 1 - 1e-4) continue;
                    acc.max_seen = std::max(acc.max_seen, fd_hessian_frobenius(*field, q, r));
                }
            }
        }
        if (spec.is_truncated_family() || spec.kind == StreamKind::SimpleCutoff) {
            // Band of levels around delta along the bottom edge; the other
            // edges are symmetric.
            for (int kx = 1; kx < 256; ++kx) {
                const double x = static_cast<double>(kx) / 256;
                for (int ks = 0; ks < 16; ++ks) {
                    const double y = spec.delta * (0.25 + 1.5 * ks / 15.0) / 4.0;
                    const Vec2 q{x, y};
                    const double d = dist_special(q).d;
                    if (d < 1e-4) continue;
                    acc.max_seen = std::max(acc.max_seen, fd_hessian_frobenius(*field, q, d));
                }
            }
        }
        return {acc.max_seen, false, 0.0};
    }

    // Ring-mass slope: for |H| ~ d^{-g} the octave masses scale like
    // 2^{k(p g - 2)}; non-decaying masses mean the integral diverges.
    std::vector<double> ks, logs;
    for (int k = 5; k < RingAccum::kMaxOctave; ++k) {
        const double m = acc.mass[static_cast<std::size_t>(k)];
        if (m > 0.0) {
            ks.push_back(k);
            logs.push_back(std::log2(m));
        }
    }
    double slope = -1.0;
    if (ks.size() >= 3) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(ks.size());
        for (std::size_t i = 0; i < ks.size(); ++i) {
            sx += ks[i];
            sy += logs[i];
            sxx += ks[i] * ks[i];
            sxy += ks[i] * logs[i];
        }
        slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    double total = acc.far;
    for (double m : acc.mass) total += m;
    if (slope >= -0.1) {
        return {0.0, true, slope};
    }
    // Convergent: add the geometric tail below the finest sampled octave.
    double last = 0.0;
    for (int k = RingAccum::kMaxOctave - 1; k >= 0; --k) {
        if (acc.mass[static_cast<std::size_t>(k)] > 0.0) {
            last = acc.mass[static_cast<std::size_t>(k)];
            break;
        }
    }
    const double ratio = std::pow(2.0, slope);
    total += last * ratio / (1.0 - ratio);
    return {std::pow(total, 1.0 / p), false, slope};
}

} // namespace cellmix
