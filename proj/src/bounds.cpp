#include "malab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "malab/constants.hpp"

namespace malab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double tag_value(const Modulus& m, double qq) {
    double q = std::min(qq, m.qmax());
    switch (m.form) {
        case Modulus::Form::constant: return m.coef;
        case Modulus::Form::holder: return m.coef * std::pow(q, m.power);
        case Modulus::Form::logarithmic: return m.coef * std::pow(-std::log(q), -m.power);
        default: return 0;
    }
}

Modulus tagged(Modulus::Form f, double coef, double power, double qmin, double qmax,
               int per_decade) {
    Modulus m;
    m.form = f;
    m.coef = coef;
    m.power = power;
    m.q = log_grid(qmin, qmax, per_decade);
    m.w.reserve(m.q.size());
    for (double q : m.q) m.w.push_back(tag_value(m, q));
    return m;
}

template <class G>
double trapezoid(const G& g, double ta, double tb, int n) {
    double s = 0.5 * (g(ta) + g(tb));
    double dt = (tb - ta) / n;
    for (int k = 1; k < n; ++k) s += g(ta + k * dt);
    return s * dt;
}

// integral_a^b w(q) q^-moment dq through the substitution q = e^t
template <class W>
double quad_log(const W& w, double a, double b, int moment, double rel_tol) {
    const double ta = std::log(a), tb = std::log(b);
    auto g = [&](double t) {
        double q = std::exp(t);
        return (moment == 1) ? w(q) : w(q) / q;
    };
    int n = 64;
    double prev = trapezoid(g, ta, tb, n), cur = prev;
    for (int round = 0; round < 16; ++round) {
        n *= 2;
        cur = trapezoid(g, ta, tb, n);
        if (std::fabs(cur - prev) <= rel_tol * std::fabs(cur) + 1e-300) break;
        prev = cur;
    }
    return cur;
}

struct TagPart {
    double value = 0;
    bool divergent = false;
};

// antiderivative of the tagged form over [a, b] with b <= qmax, a may be 0
TagPart tag_part(const Modulus& m, double a, double b, int moment) {
    switch (m.form) {
        case Modulus::Form::constant: {
            double c0 = m.coef;
            if (c0 == 0) return {0, false};
            if (a == 0) return {kInf, true};
            return {(moment == 1) ? c0 * std::log(b / a) : c0 * (1 / a - 1 / b), false};
        }
        case Modulus::Form::holder: {
            double H = m.coef, al = m.power;
            if (H == 0) return {0, false};
            if (moment == 1)
                return {H * (std::pow(b, al) - std::pow(a, al)) / al, false};
            if (al == 1) {
                if (a == 0) return {kInf, true};
                return {H * std::log(b / a), false};
            }
            if (al < 1 && a == 0) return {kInf, true};
            return {H * (std::pow(a, al - 1) - std::pow(b, al - 1)) / (1 - al), false};
        }
        case Modulus::Form::logarithmic: {
            double s = m.coef, ap = m.power;
            if (s == 0) return {0, false};
            if (moment == 1) {
                double tb = -std::log(b);
                if (a == 0) {
                    if (ap <= 1) return {kInf, true};
                    return {s * std::pow(tb, 1 - ap) / (ap - 1), false};
                }
                double ta = -std::log(a);
                if (ap == 1) return {s * std::log(ta / tb), false};
                return {s * (std::pow(ta, 1 - ap) - std::pow(tb, 1 - ap)) / (1 - ap), false};
            }
            if (a == 0) return {kInf, true}; // q^-2 wins against any log power
            return {quad_log([&](double q) { return tag_value(m, q); }, a, b, 2, 1e-10), false};
        }
        default: return {0, false};
    }
}

DiniResult tag_integral(const Modulus& m, double a, double b, int moment) {
    DiniResult r;
    double cut = std::min(b, m.qmax());
    if (a < cut) {
        TagPart p = tag_part(m, a, cut, moment);
        if (p.divergent) {
            r.divergent = true;
            r.value = kInf;
            return r;
        }
        r.value += p.value;
    }
    if (b > m.qmax()) {
        double lo = std::max(a, m.qmax());
        double level = m.w.back();
        r.value += (moment == 1) ? level * std::log(b / lo) : level * (1 / lo - 1 / b);
    }
    return r;
}

double seg_m1(double qa, double qb, double wa, double s) {
    return (wa - s * qa) * std::log(qb / qa) + s * (qb - qa);
}

double seg_m2(double qa, double qb, double wa, double s) {
    return (wa - s * qa) * (1 / qa - 1 / qb) + s * std::log(qb / qa);
}

// exact integral of the piecewise-linear envelope, a > 0
double custom_range(const Modulus& m, double a, double b, int moment) {
    double total = 0;
    if (a < m.qmin()) {
        double hi = std::min(b, m.qmin());
        if (hi > a)
            total += (moment == 1) ? m.w.front() * std::log(hi / a)
                                   : m.w.front() * (1 / a - 1 / hi);
    }
    double hi_in = std::min(b, m.qmax());
    for (std::size_t i = 0; i + 1 < m.q.size() && m.q[i] < hi_in; ++i) {
        double qa = std::max(a, m.q[i]);
        double qb = std::min(hi_in, m.q[i + 1]);
        if (!(qb > qa)) continue;
        double s = (m.w[i + 1] - m.w[i]) / (m.q[i + 1] - m.q[i]);
        double wa = m.w[i] + s * (qa - m.q[i]);
        total += (moment == 1) ? seg_m1(qa, qb, wa, s) : seg_m2(qa, qb, wa, s);
    }
    if (b > m.qmax()) {
        double lo = std::max(a, m.qmax());
        if (b > lo)
            total += (moment == 1) ? m.w.back() * std::log(b / lo)
                                   : m.w.back() * (1 / lo - 1 / b);
    }
    return total;
}

// compare the two smallest fully sampled decades; comparable mass means the
// zero-limit integral looks divergent
bool custom_slow_decay(const Modulus& m, int moment) {
    double q0 = m.qmin();
    if (m.qmax() < 100 * q0) return false; // not enough range to judge
    double d1 = custom_range(m, q0, 10 * q0, moment);
    double d2 = custom_range(m, 10 * q0, 100 * q0, moment);
    if (!(d2 > 0)) return d1 > 0;
    return d1 >= 0.8 * d2;
}

DiniResult custom_integral(const Modulus& m, double a, double b, int moment) {
    DiniResult r;
    if (a == 0) {
        r.tail_cut = std::min(b, m.qmin());
        r.divergent = custom_slow_decay(m, moment);
        if (r.divergent) {
            r.value = kInf;
            return r;
        }
        a = r.tail_cut;
        if (!(b > a)) return r; // nothing resolved below the samples
    }
    r.value = custom_range(m, a, b, moment);
    return r;
}

} // namespace

std::vector<double> log_grid(double qmin, double qmax, int per_decade) {
    if (!(qmin > 0) || !(qmax > qmin) || per_decade < 1)
        throw precondition_error("log_grid needs 0 < qmin < qmax and a positive density");
    double decades = std::log10(qmax / qmin);
    int n = std::max(1, static_cast<int>(std::ceil(decades * per_decade - 1e-9)));
    std::vector<double> out(n + 1);
    for (int k = 0; k <= n; ++k) out[k] = qmin * std::pow(10.0, decades * k / n);
    out.front() = qmin;
    out.back() = qmax;
    return out;
}

double Modulus::eval(double qq) const {
    if (!(qq >= 0)) throw precondition_error("modulus evaluated at a negative scale");
    if (q.empty()) throw precondition_error("modulus has no samples");
    if (form != Form::custom) return tag_value(*this, qq);
    if (qq <= q.front()) return w.front();
    if (qq >= q.back()) return w.back();
    auto it = std::upper_bound(q.begin(), q.end(), qq);
    std::size_t i = static_cast<std::size_t>(it - q.begin()) - 1;
    double t = (qq - q[i]) / (q[i + 1] - q[i]);
    return w[i] + t * (w[i + 1] - w[i]);
}

double Modulus::limit_at_zero() const {
    switch (form) {
        case Form::constant: return coef;
        case Form::holder: return 0;
        case Form::logarithmic: return 0;
        default: return w.front();
    }
}

Modulus Modulus::enveloped(std::vector<double> qs, std::vector<double> ws) {
    if (qs.size() != ws.size() || qs.size() < 2)
        throw precondition_error("envelope needs matching sample arrays with at least two points");
    for (std::size_t i = 0; i < qs.size(); ++i) {
        if (!(qs[i] > 0) || !std::isfinite(qs[i]) || !(ws[i] >= 0) || !std::isfinite(ws[i]))
            throw precondition_error("envelope samples must be finite with positive scales");
        if (i && !(qs[i] > qs[i - 1]))
            throw precondition_error("envelope scales must increase strictly");
    }
    for (std::size_t i = 1; i < ws.size(); ++i) ws[i] = std::max(ws[i], ws[i - 1]);
    Modulus m;
    m.q = std::move(qs);
    m.w = std::move(ws);
    return m;
}

Modulus Modulus::constant_form(double level, double qmin, double qmax, int per_decade) {
    if (!(level >= 0)) throw precondition_error("oscillation level must be nonnegative");
    return tagged(Form::constant, level, 0, qmin, qmax, per_decade);
}

Modulus Modulus::holder_form(double H, double alpha, double qmin, double qmax, int per_decade) {
    if (!(H >= 0) || !(alpha > 0))
        throw precondition_error("holder envelope needs H >= 0 and a positive exponent");
    return tagged(Form::holder, H, alpha, qmin, qmax, per_decade);
}

Modulus Modulus::log_form(double s, double a, double qmin, double qmax, int per_decade) {
    if (!(s >= 0) || !(a > 0) || !(qmax < 1))
        throw precondition_error("log envelope needs s >= 0, a > 0 and qmax < 1");
    return tagged(Form::logarithmic, s, a, qmin, qmax, per_decade);
}

Modulus estimate_modulus(const ScalarField& f, const std::vector<double>& scales,
                         std::uint64_t far_pairs, std::uint64_t seed) {
    if (scales.size() < 2)
        throw precondition_error("modulus estimation needs at least two scales");
    for (std::size_t i = 0; i < scales.size(); ++i)
        if (!(scales[i] > 0) || (i && !(scales[i] > scales[i - 1])))
            throw precondition_error("scales must be positive and strictly increasing");
    const Grid& g = *f.grid;

    struct Node {
        int i, j;
        double v;
    };
    std::vector<Node> nodes;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            if (g.node_valid(i, j) && std::isfinite(f.at(i, j)))
                nodes.push_back({i, j, f.at(i, j)});
    if (nodes.size() < 2)
        throw precondition_error("modulus estimation needs at least two valid nodes");

    std::vector<double> best(scales.size(), 0.0);
    std::size_t used = 0;
    auto add = [&](double d, double df) {
        auto it = std::lower_bound(scales.begin(), scales.end(), d * (1 - 1e-9));
        if (it == scales.end()) return;
        best[static_cast<std::size_t>(it - scales.begin())] =
            std::max(best[static_cast<std::size_t>(it - scales.begin())], df);
        ++used;
    };

    // every pair within six cells
    struct Off {
        int di, dj;
        double d;
    };
    std::vector<Off> offs;
    for (int dj = 0; dj <= 6; ++dj)
        for (int di = -6; di <= 6; ++di) {
            if (dj == 0 && di <= 0) continue;
            if (di * di + dj * dj > 36) continue;
            offs.push_back({di, dj, g.h * std::sqrt(double(di * di + dj * dj))});
        }
    for (const Node& n : nodes)
        for (const Off& o : offs) {
            int i2 = n.i + o.di, j2 = n.j + o.dj;
            if (!g.node_valid(i2, j2)) continue;
            double v2 = f.at(i2, j2);
            if (!std::isfinite(v2)) continue;
            add(o.d, std::fabs(n.v - v2));
        }

    // seeded long-range pairs
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, nodes.size() - 1);
    for (std::uint64_t k = 0; k < far_pairs; ++k) {
        const Node& a = nodes[pick(rng)];
        const Node& b = nodes[pick(rng)];
        if (a.i == b.i && a.j == b.j) continue;
        add(std::hypot(g.xat(a.i) - g.xat(b.i), g.yat(a.j) - g.yat(b.j)),
            std::fabs(a.v - b.v));
    }

    for (std::size_t i = 1; i < best.size(); ++i) best[i] = std::max(best[i], best[i - 1]);
    Modulus m = Modulus::enveloped(scales, std::move(best));
    m.pairs_used = used;
    m.lower_estimate = true;
    return m;
}

Modulus estimate_modulus(const Sampler& f, const ConvexPolytope& region, int cells_across,
                         const std::vector<double>& scales, std::uint64_t far_pairs,
                         std::uint64_t seed) {
    auto g = Grid::make(region, cells_across);
    return estimate_modulus(ScalarField(std::move(g), f), scales, far_pairs, seed);
}

DiniResult dini_integral(const Modulus& m, double a, double b, int moment) {
    if (!(a >= 0) || !(b > a) || !std::isfinite(b))
        throw precondition_error("dini integral needs 0 <= a < b");
    if (moment != 1 && moment != 2) throw precondition_error("moment must be 1 or 2");
    if (m.q.empty()) throw precondition_error("modulus has no samples");
    if (m.form == Modulus::Form::custom) return custom_integral(m, a, b, moment);
    return tag_integral(m, a, b, moment);
}

double integrate_modulus_quad(const Modulus& m, double a, double b, int moment,
                              double rel_tol) {
    if (!(a > 0) || !(b > a)) throw precondition_error("quadrature needs 0 < a < b");
    if (moment != 1 && moment != 2) throw precondition_error("moment must be 1 or 2");
    return quad_log([&](double q) { return m.eval(q); }, a, b, moment, rel_tol);
}

double choose_q_in(const Modulus& m, double rho, double C_mc) {
    if (!(rho > 0) || !(C_mc > 0))
        throw precondition_error("scale selection needs positive rho and budget");
    if (m.q.empty()) throw precondition_error("modulus has no samples");
    if (m.eval(rho) <= C_mc) return rho;
    for (std::size_t i = m.q.size(); i-- > 0;) {
        if (m.q[i] > rho) continue;
        if (m.w[i] <= C_mc) return m.q[i];
    }
    throw no_admissible_error("no scale within rho keeps the oscillation inside the budget");
}

double BoundConstants::beta() const {
    if (!(h_c > 0) || !(1.2 * std::sqrt(h_c) < 1))
        throw precondition_error("height ratio must satisfy (6/5) sqrt(h_c) < 1");
    if (!(C5hat > 0)) throw precondition_error("C5hat must be positive");
    return 1.12 * C5hat / (h_c * -std::log(1.2 * std::sqrt(h_c)));
}

double BoundConstants::beta2() const { return beta() * std::max(1.0, beta1); }

double BoundConstants::Qin(double q_in) const {
    if (!(q_in > 0)) throw precondition_error("q_in must be positive");
    return Qin_base * std::pow(q_in, -Qin_power);
}

double BoundConstants::corollary_exponent() const { return std::max(Qin_power, 1.0); }

BoundConstants BoundConstants::defaults() {
    BoundConstants c;
    c.c2hat = calib::c2_hat;
    c.C2hat = calib::C2_hat;
    c.C5hat = calib::C5_hat;
    c.kappa = calib::kappa_hat;
    c.h_c = calib::h_c;
    c.C_mc = calib::C_mc;
    c.beta1 = calib::beta1_hat;
    return c;
}

EPair eval_E(const Modulus& m, double dbar, double q_in, const BoundConstants& c) {
    if (!(dbar > 0) || !(q_in > 0) || !(c.Cbar > 0) || !(c.Cbar * dbar < q_in))
        throw precondition_error("exponential factors need 0 < Cbar dbar < q_in");
    EPair e;
    e.E_dbar = std::exp(c.beta() * dini_integral(m, c.Cbar * dbar, q_in, 1).value);
    auto d0 = dini_integral(m, 0.0, q_in, 1);
    e.E0_finite = !d0.divergent;
    e.E0 = e.E0_finite ? std::exp(c.beta() * d0.value) : kInf;
    return e;
}

BoundReport eval_theorem_bounds(const Modulus& m, double dbar, const BoundConstants& c,
                                double f_max, double rho) {
    if (!(dbar > 0)) throw precondition_error("separation must be positive");
    if (!(f_max >= 1)) throw precondition_error("f_max sits below the unit normalization");
    BoundReport r;
    r.dbar = dbar;
    r.rho = rho;
    r.f_max = f_max;
    r.consts = c;
    r.q_in = choose_q_in(m, rho, c.C_mc);
    const double Q = c.Qin(r.q_in);

    r.dini1_zero = dini_integral(m, 0.0, r.q_in, 1);
    r.E0_finite = !r.dini1_zero.divergent;
    r.E0 = r.E0_finite ? std::exp(c.beta() * r.dini1_zero.value) : kInf;
    r.grad_large = Q;
    r.hess_sup = r.E0_finite ? Q * r.E0 : kInf;
    r.hess_diff_large = r.hess_sup;

    r.small_branch = (Q * dbar < 1) && (c.Cbar * dbar < r.q_in);
    if (!r.small_branch) {
        r.E_dbar = std::numeric_limits<double>::quiet_NaN();
        r.grad_small = r.grad_large;
        r.hess_diff_small = r.hess_diff_large;
        r.dini_finite = r.E0_finite;
        return r;
    }

    r.E_dbar = std::exp(c.beta() * dini_integral(m, c.Cbar * dbar, r.q_in, 1).value);
    const double reach = Q * r.E_dbar * dbar;
    r.dini1_dbar = dini_integral(m, 0.0, reach, 1);
    r.dini2 = dini_integral(m, c.Cbar * dbar, r.q_in, 2);
    r.dini_finite = r.E0_finite && !r.dini1_dbar.divergent;

    r.grad_small = Q * (r.E_dbar + std::pow(r.E_dbar, c.beta1) * m.eval(reach));
    if (r.dini_finite)
        r.hess_diff_small = Q * (r.E0 * r.dini1_dbar.value +
                                 (1 + r.E_dbar * r.E_dbar * r.dini2.value) * dbar +
                                 std::pow(r.E_dbar, c.beta1) * m.eval(reach));
    else
        r.hess_diff_small = kInf;
    return r;
}

HolderBounds holder_corollary(double H, double alpha, const BoundConstants& c, double f_max,
                              double rho) {
    if (!(alpha > 0) || !(alpha < 1))
        throw precondition_error("holder exponent must lie in (0, 1)");
    if (!(H >= 0) || !(rho > 0) || !(f_max >= 1))
        throw precondition_error("holder corollary needs H >= 0, rho > 0 and f_max >= 1");
    HolderBounds b;
    b.q_in = (H == 0) ? rho : std::min(std::pow(c.C_mc / H, 1.0 / alpha), rho);
    b.E0_cap = std::exp(c.beta() / alpha * std::min(c.C_mc, H * std::pow(rho, alpha)));
    const double expo = c.corollary_exponent();
    const double Cfac = std::max(1.0 / c.C_mc, std::exp(c.beta() * c.C_mc));
    const double Ctil = c.Qin_base * std::max(1.0, std::pow(rho, -expo)) * f_max;
    const double X = (H == 0) ? 0.0 : std::pow(Cfac * H, expo / alpha);
    b.bound_D2 = Ctil * (X + 1);
    b.bound_D2_holder = Ctil * (X / (alpha * (1 - alpha)) + 1);
    return b;
}

GammaRange gamma_range(const Modulus& m, const BoundConstants& c) {
    const double w0 = m.limit_at_zero();
    const double cap = std::min(c.C_mc, 1.0 / c.beta2());
    if (!(w0 < cap))
        throw no_admissible_error("oscillation at zero must stay below min(C_mc, 1/beta2)");
    GammaRange g;
    g.lo = c.beta2() * w0;
    g.hi = 1.0;
    switch (m.form) {
        case Modulus::Form::constant:
        case Modulus::Form::holder: g.lo_closed = true; break;
        case Modulus::Form::logarithmic: g.lo_closed = m.power > 1; break;
        case Modulus::Form::custom: {
            // certifiable from samples only when the centered envelope vanishes
            bool flat = true;
            for (double v : m.w) flat = flat && (v <= w0 + 1e-14 * (1 + w0));
            g.lo_closed = flat;
            break;
        }
    }
    return g;
}

LogWeightReport log_gradient_weight(const Modulus& m, const BoundConstants& c, double q_in,
                                    double margin) {
    if (!(q_in > 0) || !(q_in < 1) || !(margin > 0))
        throw precondition_error("log weight needs q_in in (0, 1) and a positive margin");
    double limsup = 0;
    switch (m.form) {
        case Modulus::Form::constant: limsup = (m.coef == 0) ? 0.0 : kInf; break;
        case Modulus::Form::holder: limsup = 0.0; break;
        case Modulus::Form::logarithmic:
            limsup = (m.power > 1) ? 0.0 : (m.power == 1 ? m.coef : kInf);
            break;
        case Modulus::Form::custom: {
            // w(q) |ln q| over the two smallest sampled decades; growth toward
            // the small end means the limsup is not under control
            double p1 = 0, p2 = 0;
            for (std::size_t i = 0; i < m.q.size(); ++i) {
                double prod = m.w[i] * -std::log(m.q[i]);
                if (m.q[i] < 10 * m.qmin()) p1 = std::max(p1, prod);
                else if (m.q[i] < 100 * m.qmin()) p2 = std::max(p2, prod);
            }
            limsup = (p1 > 1.15 * p2 && p1 > 0) ? kInf : std::max(p1, p2);
            break;
        }
    }
    if (std::isinf(limsup))
        throw precondition_error("w(q) |ln q| must stay bounded toward zero");

    LogWeightReport r;
    r.sigma0 = c.beta() * limsup;
    r.sigma = std::max(r.sigma0, r.sigma0 * c.beta1 - 1) + margin;
    const double se = r.sigma0 + margin;
    double prev = kInf;
    r.bounded = true;
    for (int k = 1; k <= 12; ++k) {
        double d = q_in * std::pow(10.0, -k);
        if (!(c.Cbar * d < 1)) continue;
        double e = eval_E(m, d, q_in, c).E_dbar;
        double ratio = e / std::pow(-std::log(c.Cbar * d), se);
        r.ratio_max = std::max(r.ratio_max, ratio);
        if (ratio > prev * 1.01) r.bounded = false;
        prev = ratio;
    }
    if (!std::isfinite(r.ratio_max)) r.bounded = false;
    return r;
}

LogPartsReport log_hessian_parts(double a, double dbar, double q_in, const BoundConstants& c) {
    if (!(a > 0) || !(dbar > 0) || !(q_in < 1) || !(c.Cbar * dbar < q_in))
        throw precondition_error("parts identity needs 0 < Cbar dbar < q_in < 1");
    const double lo = c.Cbar * dbar;
    auto wfun = [&](double q) { return std::pow(-std::log(q), -a); };
    auto wnext = [&](double q) { return std::pow(-std::log(q), -a - 1); };
    LogPartsReport r;
    r.direct = quad_log(wfun, lo, q_in, 2, 1e-10);
    const double remainder = a * quad_log(wnext, lo, q_in, 2, 1e-10);
    const double boundary = wfun(lo) / lo - wfun(q_in) / q_in;
    r.via_parts = boundary + remainder;
    r.rel_gap = std::fabs(r.direct - r.via_parts) / std::max(r.direct, 1e-300);
    r.remainder_ratio = remainder / std::max(r.direct, 1e-300);
    r.ok = r.rel_gap <= 1e-6 && r.remainder_ratio <= 0.5 && a <= 0.5 * -std::log(q_in);
    return r;
}

} // namespace malab
