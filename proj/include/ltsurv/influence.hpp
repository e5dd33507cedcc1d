#ifndef LTSURV_INFLUENCE_HPP
#define LTSURV_INFLUENCE_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "discrete_law.hpp"
#include "kernel.hpp"
#include "nuisance.hpp"

namespace ltsurv {

struct AtRiskZero : std::runtime_error {
    explicit AtRiskZero(double u)
        : std::runtime_error("at-risk probability is zero at t=" + std::to_string(u)) {}
};
struct NoStratumData : std::runtime_error {
    NoStratumData(int a, int zid)
        : std::runtime_error("no fitted stratum for (a=" + std::to_string(a) +
                             ", z_id=" + std::to_string(zid) + ")") {}
};

// ---------------------------------------------------------------------------
// Per-stratum evaluation tables. The hazard grid carries the discrete
// correction 1/(1 - dLambda(u)) that makes the influence function the exact
// Gateaux derivative at step-function models; it disappears in the
// continuous limit, recovering the textbook display.
// ---------------------------------------------------------------------------
struct StratumEval {
    StepFunction S;     // conditional event-time survival S tilde
    StepFunction S_inv; // debiased inverse survival 1/S (fitted curves only)
    bool has_S_inv = false;
    std::vector<double> u, lam, Su, Sul, Ru;
    std::vector<double> coef;     // lam / ((1 - lam) Ru), guarded
    std::vector<double> pre_gnat; // prefix sums of gnat_plus(u_j) * coef_j
    std::vector<double> wv, gm;   // truncation atoms and masses
    std::vector<double> invSw;    // 1 / S(w-)
    std::vector<double> gnat_suffix; // [m] = sum_{m' >= m} gm * invSw; size wv.size()+1
    double gamma = 0.0;
    double tau_bar = 0.0;
    double s_floor = 1.0; // smallest positive value of S: entry-weight fallback
    bool no_events = false;
    bool support_flag = false;
    std::function<double(double)> at_risk; // R(t) at arbitrary t

    // strict version: sum over truncation atoms w > y
    double gnat_plus(double y) const {
        auto it = std::upper_bound(wv.begin(), wv.end(), y);
        return gnat_suffix[static_cast<std::size_t>(it - wv.begin())];
    }
    // closed version: sum over w >= y (gnat_closed(0) == gamma)
    double gnat_closed(double y) const {
        auto it = std::lower_bound(wv.begin(), wv.end(), y);
        return gnat_suffix[static_cast<std::size_t>(it - wv.begin())];
    }
    double inv_S_left(double t) const {
        const double s = S.left_limit(t);
        if (s <= 0.0) throw SupportViolation("survival vanishes at a left limit");
        return 1.0 / s;
    }

    void finalize_gamma(bool strict) {
        s_floor = S.initial_value > 0.0 ? S.initial_value : 1.0;
        for (double v : S.values) {
            if (v > 0.0 && v < s_floor) s_floor = v;
        }
        invSw.assign(wv.size(), 0.0);
        for (std::size_t m = 0; m < wv.size(); ++m) {
            if (has_S_inv) {
                invSw[m] = S_inv.left_limit(wv[m]);
                continue;
            }
            const double s = S.left_limit(wv[m]);
            if (s <= 0.0) {
                if (strict) throw SupportViolation("S_X vanishes at a truncation atom");
                // entry beyond the fitted support: weight by the curve's last
                // positive value instead of an unbounded inverse
                support_flag = true;
                invSw[m] = 1.0 / s_floor;
            } else {
                invSw[m] = 1.0 / s;
            }
        }
        gnat_suffix.assign(wv.size() + 1, 0.0);
        for (std::size_t m = wv.size(); m-- > 0;) {
            gnat_suffix[m] = gnat_suffix[m + 1] + gm[m] * invSw[m];
        }
        gamma = gnat_suffix.empty() ? 0.0 : gnat_suffix[0];
    }

    void finalize_hazard() {
        coef.assign(u.size(), 0.0);
        pre_gnat.assign(u.size(), 0.0);
        double acc = 0.0;
        for (std::size_t j = 0; j < u.size(); ++j) {
            if (lam[j] < 1.0 && Ru[j] > 0.0) {
                coef[j] = lam[j] / ((1.0 - lam[j]) * Ru[j]);
            } else if (gnat_plus(u[j]) > 0.0) {
                support_flag = true;
            }
            acc += gnat_plus(u[j]) * coef[j];
            pre_gnat[j] = acc;
        }
    }
};

struct EvalModel {
    int a0 = 1;
    bool degenerate_exposure = false;
    std::vector<std::vector<double>> z_patterns;
    std::vector<double> H, pi;
    std::map<std::pair<int, int>, StratumEval> strata;
    std::vector<double> g_z;         // sum_a gamma(a,z) pi(a|z)
    std::vector<double> gamma_bar_z; // g_z / gamma_scalar
    double gamma_scalar = 0.0;
    double tau_global = 0.0; // pooled support cap: max observed time over all strata
    bool support_flag = false;

    int z_id(const std::vector<double>& z) const {
        auto it = std::lower_bound(z_patterns.begin(), z_patterns.end(), z);
        if (it == z_patterns.end() || *it != z) return -1;
        return static_cast<int>(it - z_patterns.begin());
    }
    double pi_a(int a, int zid) const {
        if (degenerate_exposure) return a == a0 ? 1.0 : 0.0;
        const double p = pi[static_cast<std::size_t>(zid)];
        return a == a0 ? p : 1.0 - p;
    }
    const StratumEval& stratum(int a, int zid) const {
        auto it = strata.find({a, zid});
        if (it == strata.end()) throw NoStratumData(a, zid);
        return it->second;
    }

    void finalize() {
        const std::size_t nz = z_patterns.size();
        tau_global = 0.0;
        for (const auto& [key, s] : strata) tau_global = std::max(tau_global, s.tau_bar);
        g_z.assign(nz, 0.0);
        for (std::size_t z = 0; z < nz; ++z) {
            for (int a : {0, 1}) {
                const double pa = pi_a(a, static_cast<int>(z));
                if (pa <= 0.0) continue;
                auto it = strata.find({a, static_cast<int>(z)});
                if (it == strata.end()) {
                    if (H[z] > 0.0) throw NoStratumData(a, static_cast<int>(z));
                    continue;
                }
                g_z[z] += pa * it->second.gamma;
            }
            if (strata.count({a0, static_cast<int>(z)}) != 0 &&
                strata.at({a0, static_cast<int>(z)}).support_flag) {
                support_flag = true;
            }
        }
        gamma_scalar = 0.0;
        for (std::size_t z = 0; z < nz; ++z) gamma_scalar += g_z[z] * H[z];
        gamma_bar_z.assign(nz, 0.0);
        for (std::size_t z = 0; z < nz; ++z) gamma_bar_z[z] = g_z[z] / gamma_scalar;
    }

    static EvalModel from_nuisances(const NuisanceSet& eta, bool strict = false);
    static EvalModel from_law(const DiscreteLaw& law, int a0, bool degenerate_exposure = false);
};

inline EvalModel EvalModel::from_nuisances(const NuisanceSet& eta, bool strict) {
    EvalModel m;
    m.a0 = eta.a0;
    m.degenerate_exposure = eta.degenerate_exposure;
    m.z_patterns = eta.z_patterns;
    m.H = eta.H;
    m.pi = eta.pi;
    for (const auto& [key, sn] : eta.strata) {
        StratumEval s;
        s.S = sn.S_X;
        s.S_inv = sn.S_X_inv;
        s.has_S_inv = sn.has_S_X_inv;
        s.tau_bar = sn.tau_bar;
        s.no_events = sn.no_events;
        double prev = s.S.initial_value;
        for (std::size_t i = 0; i < s.S.times.size(); ++i) {
            const double val = s.S.values[i];
            if (val < prev) {
                s.u.push_back(s.S.times[i]);
                s.lam.push_back(1.0 - val / prev);
                s.Su.push_back(val);
                s.Sul.push_back(prev);
            }
            prev = val;
        }
        for (const auto& [w, gmass] : step_atoms(sn.G)) {
            if (gmass <= 0.0) continue;
            s.wv.push_back(w);
            s.gm.push_back(gmass);
        }
        s.finalize_gamma(strict);
        s.Ru.resize(s.u.size());
        const StratumNuisance* backing = &sn;
        if (sn.has_empirical_risk()) {
            // plug in the observable at-risk proportion directly; it matches
            // the product-limit risk counts at every event time
            for (std::size_t j = 0; j < s.u.size(); ++j) s.Ru[j] = sn.empirical_at_risk(s.u[j]);
            s.at_risk = [backing](double t) { return backing->empirical_at_risk(t); };
        } else {
            for (std::size_t j = 0; j < s.u.size(); ++j) s.Ru[j] = at_risk_at(sn, s.u[j]);
            s.at_risk = [backing](double t) { return at_risk_at(*backing, t); };
        }
        s.finalize_hazard();
        if (s.support_flag) m.support_flag = true;
        m.strata[key] = std::move(s);
    }
    m.finalize();
    return m;
}

inline EvalModel EvalModel::from_law(const DiscreteLaw& law, int a0, bool degenerate_exposure) {
    EvalModel m;
    m.a0 = a0;
    m.degenerate_exposure = degenerate_exposure;
    m.z_patterns = law.z_patterns;
    const std::size_t nz = law.z_patterns.size();
    m.H.assign(nz, 0.0);
    m.pi.assign(nz, 0.0);
    std::map<std::pair<int, int>, std::vector<const DiscreteAtom*>> groups;
    for (const DiscreteAtom& o : law.atoms) {
        m.H[static_cast<std::size_t>(o.z_id)] += o.p;
        if (o.a == a0) m.pi[static_cast<std::size_t>(o.z_id)] += o.p;
        groups[{o.a, o.z_id}].push_back(&o);
    }
    for (std::size_t z = 0; z < nz; ++z) {
        if (m.H[z] > 0.0) m.pi[z] /= m.H[z];
        if (degenerate_exposure) m.pi[z] = 1.0;
    }
    for (const auto& [key, members] : groups) {
        double mass = 0.0;
        for (const DiscreteAtom* o : members) mass += o->p;
        StratumEval s;
        // exact at-risk process R(t) = P(W <= t) - P(Y < t) within the stratum
        auto w_sorted = std::make_shared<std::vector<std::pair<double, double>>>();
        auto y_sorted = std::make_shared<std::vector<std::pair<double, double>>>();
        {
            std::map<double, double> wm, ym;
            for (const DiscreteAtom* o : members) {
                wm[o->w] += o->p / mass;
                ym[o->y] += o->p / mass;
            }
            double acc = 0.0;
            for (const auto& [w, p] : wm) {
                acc += p;
                w_sorted->emplace_back(w, acc);
                s.wv.push_back(w);
                s.gm.push_back(p);
            }
            acc = 0.0;
            for (const auto& [y, p] : ym) {
                acc += p;
                y_sorted->emplace_back(y, acc);
            }
        }
        s.at_risk = [w_sorted, y_sorted](double t) {
            auto cum = [](const std::vector<std::pair<double, double>>& v, double x, bool strict) {
                auto cmp = [](const std::pair<double, double>& a, double b) { return a.first < b; };
                auto it = strict ? std::lower_bound(v.begin(), v.end(), x, cmp)
                                 : std::upper_bound(v.begin(), v.end(), x,
                                                    [](double b, const std::pair<double, double>& a) {
                                                        return b < a.first;
                                                    });
                return it == v.begin() ? 0.0 : std::prev(it)->second;
            };
            return cum(*w_sorted, t, false) - cum(*y_sorted, t, true);
        };
        // hazard from F1 and R
        std::map<double, double> f1;
        for (const DiscreteAtom* o : members) {
            if (o->delta == 1) f1[o->y] += o->p / mass;
        }
        s.no_events = f1.empty();
        s.S.initial_value = 1.0;
        double cur = 1.0;
        for (const auto& [uu, df] : f1) {
            const double r = s.at_risk(uu);
            if (r <= 0.0) throw AtRiskZero(uu);
            const double l = df / r;
            s.u.push_back(uu);
            s.lam.push_back(l);
            s.Sul.push_back(cur);
            cur *= 1.0 - l;
            if (cur < 0.0) cur = 0.0;
            s.Su.push_back(cur);
            s.Ru.push_back(r);
            s.S.times.push_back(uu);
            s.S.values.push_back(cur);
        }
        for (const DiscreteAtom* o : members) s.tau_bar = std::max(s.tau_bar, o->y);
        s.finalize_gamma(true);
        s.finalize_hazard();
        m.strata[key] = std::move(s);
    }
    m.finalize();
    return m;
}

// ---------------------------------------------------------------------------
// Kernel-dependent tables: the survival regression mu(z) and the transform
// integrand Lplus (open interval, left limits - the exact discrete gradient).
// ---------------------------------------------------------------------------
struct KernelStratumEval {
    double mu = 0.0;
    std::vector<double> pre_L; // prefix sums of Lplus(u_j) * coef_j
    // density suffix table for absolutely continuous kernel parts
    std::vector<double> ac_grid, ac_suffix;
    const Kernel* kernel = nullptr;
    const StratumEval* stratum = nullptr;
    std::vector<double> z;

    double Lplus_at(double y) const {
        double v = 0.0;
        for (const Kernel::Atom& a : kernel->atoms) {
            const double c = a.mass(z);
            if (c == 0.0) continue;
            if (a.open ? (a.t >= y) : (a.t > y)) {
                v += c * (a.open ? stratum->S(a.t) : stratum->S.left_limit(a.t));
            }
        }
        if (!ac_grid.empty()) {
            if (y <= ac_grid.front()) {
                v += ac_suffix.front();
            } else if (y < ac_grid.back()) {
                auto it = std::upper_bound(ac_grid.begin(), ac_grid.end(), y);
                const std::size_t i = static_cast<std::size_t>(it - ac_grid.begin());
                const double t0 = ac_grid[i - 1], t1 = ac_grid[i];
                const double f = (y - t0) / (t1 - t0);
                v += ac_suffix[i - 1] + f * (ac_suffix[i] - ac_suffix[i - 1]);
            }
        }
        return v;
    }

};

struct KernelEval {
    const Kernel* kernel = nullptr;
    std::vector<KernelStratumEval> per_z; // indexed by z_id, stratum (a0, z)
    std::vector<char> present;
    std::vector<double> mu_z;

    const KernelStratumEval& at(int zid) const {
        if (!present[static_cast<std::size_t>(zid)]) {
            throw NoStratumData(-1, zid);
        }
        return per_z[static_cast<std::size_t>(zid)];
    }
};

inline KernelEval build_kernel_eval(const EvalModel& m, const Kernel& k, double quad_step = 1e-3) {
    KernelEval ke;
    ke.kernel = &k;
    const std::size_t nz = m.z_patterns.size();
    ke.per_z.resize(nz);
    ke.present.assign(nz, 0);
    ke.mu_z.assign(nz, 0.0);
    for (std::size_t z = 0; z < nz; ++z) {
        auto it = m.strata.find({m.a0, static_cast<int>(z)});
        if (it == m.strata.end()) continue;
        const StratumEval& s = it->second;
        KernelStratumEval kse;
        kse.kernel = &k;
        kse.stratum = &s;
        kse.z = m.z_patterns[z];
        double mu = k.base(kse.z);
        for (const Kernel::Atom& a : k.atoms) {
            const double c = a.mass(kse.z);
            if (c == 0.0) continue;
            // curves flat-extend past a stratum's last observation; fail only
            // when the atom lies beyond the pooled observed support
            if (a.t > m.tau_global) {
                throw SupportViolation("kernel atom beyond the observed support");
            }
            mu += c * (a.open ? s.S(a.t) : s.S.left_limit(a.t));
        }
        if (k.has_density()) {
            if (k.ac_hi > m.tau_global) {
                throw SupportViolation("kernel density support beyond the observed support");
            }
            const std::size_t mgrid = std::max<std::size_t>(
                2, static_cast<std::size_t>((k.ac_hi - k.ac_lo) / quad_step) + 1);
            const double h = (k.ac_hi - k.ac_lo) / static_cast<double>(mgrid - 1);
            kse.ac_grid.resize(mgrid);
            std::vector<double> gv(mgrid);
            for (std::size_t i = 0; i < mgrid; ++i) {
                kse.ac_grid[i] = k.ac_lo + h * static_cast<double>(i);
                gv[i] = k.density(kse.ac_grid[i], kse.z) * s.S.left_limit(kse.ac_grid[i]);
            }
            kse.ac_suffix.assign(mgrid, 0.0);
            for (std::size_t i = mgrid - 1; i-- > 0;) {
                kse.ac_suffix[i] = kse.ac_suffix[i + 1] + 0.5 * (gv[i] + gv[i + 1]) * h;
            }
            mu += kse.ac_suffix[0];
        }
        kse.mu = mu;
        kse.pre_L.assign(s.u.size(), 0.0);
        double acc = 0.0;
        for (std::size_t j = 0; j < s.u.size(); ++j) {
            acc += kse.Lplus_at(s.u[j]) * s.coef[j];
            kse.pre_L[j] = acc;
        }
        ke.per_z[z] = std::move(kse);
        ke.present[z] = 1;
        ke.mu_z[z] = mu;
    }
    return ke;
}

// ---------------------------------------------------------------------------
// The phi_KM transform:
//   phi_KM(m)(o) = -delta m(y) / {(1 - lam(y)) R(y)}
//                  + sum_{u in [w, y]} m(u) lam(u) / {(1 - lam(u)) R(u)}.
// The fast paths consume the prefix tables; the generic version takes m.
// ---------------------------------------------------------------------------
namespace detail {

inline double phi_km_core(const StratumEval& s, const std::vector<double>& prefix,
                          const std::function<double(double)>& m_at, double w, double y, int delta,
                          bool* flag) {
    double val = 0.0;
    const auto lo = std::lower_bound(s.u.begin(), s.u.end(), w) - s.u.begin();
    const auto hi = std::upper_bound(s.u.begin(), s.u.end(), y) - s.u.begin() - 1;
    if (hi >= lo) {
        val += prefix[static_cast<std::size_t>(hi)] -
               (lo > 0 ? prefix[static_cast<std::size_t>(lo - 1)] : 0.0);
    }
    if (delta == 1) {
        const double mv = m_at(y);
        if (mv != 0.0) {
            double lamy = 0.0, ry;
            const auto j = std::lower_bound(s.u.begin(), s.u.end(), y) - s.u.begin();
            if (static_cast<std::size_t>(j) < s.u.size() && s.u[static_cast<std::size_t>(j)] == y) {
                lamy = s.lam[static_cast<std::size_t>(j)];
                ry = s.Ru[static_cast<std::size_t>(j)];
            } else {
                ry = s.at_risk(y);
            }
            if (ry > 0.0 && lamy < 1.0) {
                val -= mv / ((1.0 - lamy) * ry);
            } else if (flag != nullptr) {
                *flag = true;
            }
        }
    }
    return val;
}

} // namespace detail

// Generic transform for arbitrary integrands (test and diagnostic use).
inline double phi_km(const StratumEval& s, const std::function<double(double)>& m_at, double w,
                     double y, int delta) {
    std::vector<double> prefix(s.u.size(), 0.0);
    double acc = 0.0;
    for (std::size_t j = 0; j < s.u.size(); ++j) {
        acc += m_at(s.u[j]) * s.coef[j];
        prefix[j] = acc;
    }
    bool flag = false;
    const double v = detail::phi_km_core(s, prefix, m_at, w, y, delta, &flag);
    if (flag) throw AtRiskZero(y);
    return v;
}

// ---------------------------------------------------------------------------
// Plug-in parameter and the efficient influence function.
// ---------------------------------------------------------------------------
inline double compute_psi_plugin(const EvalModel& m, const KernelEval& ke) {
    double num = 0.0;
    for (std::size_t z = 0; z < m.z_patterns.size(); ++z) {
        if (m.H[z] <= 0.0 || m.g_z[z] <= 0.0) continue;
        num += ke.at(static_cast<int>(z)).mu * m.g_z[z] * m.H[z];
    }
    if (m.gamma_scalar <= 0.0) throw SupportViolation("gamma mass is zero");
    return num / m.gamma_scalar;
}

struct EifComponents {
    std::vector<double> phi1, phi2, phi;
    std::vector<double> b;    // 1/S(W-|A,Z) - phi_KM(gamma_natural_plus)
    std::vector<double> mu_i; // mu(Z_i)
    std::vector<int> zid;
    std::vector<double> mu_z, xi_z;
    double psi_ref = 0.0;
    double gamma = 0.0;
    bool support_flag = false;

    // phi is affine in the reference parameter value; re-centering is exact.
    double phi_at(std::size_t i, double psi) const {
        return phi1[i] + (mu_i[i] - psi) * b[i] / gamma;
    }
    void set_psi_ref(double psi) {
        psi_ref = psi;
        for (std::size_t i = 0; i < phi.size(); ++i) {
            phi2[i] = (mu_i[i] - psi) * b[i] / gamma;
            phi[i] = phi1[i] + phi2[i];
        }
    }
};

template <typename RecordRange>
inline EifComponents compute_eif(const EvalModel& m, const KernelEval& ke, double psi_ref,
                                 const RecordRange& records) {
    EifComponents out;
    out.gamma = m.gamma_scalar;
    const std::size_t nz = m.z_patterns.size();
    out.mu_z = ke.mu_z;
    out.xi_z.assign(nz, 0.0);
    for (std::size_t z = 0; z < nz; ++z) {
        if (ke.present[z] != 0) out.xi_z[z] = (ke.mu_z[z] - psi_ref) / m.gamma_scalar;
    }
    for (const ObservedRecord& r : records) {
        const int zid = m.z_id(r.z);
        if (zid < 0) throw NoStratumData(r.a, -1);
        const StratumEval& sb = m.stratum(r.a, zid);

        double p1 = 0.0;
        if (r.a == m.a0) {
            const KernelStratumEval& kse = ke.at(zid);
            const StratumEval& sa = *kse.stratum;
            bool flag = false;
            const double km = detail::phi_km_core(
                sa, kse.pre_L, [&kse](double t) { return kse.Lplus_at(t); }, r.w, r.y, r.delta,
                &flag);
            if (flag) out.support_flag = true;
            p1 = m.gamma_bar_z[static_cast<std::size_t>(zid)] /
                 m.pi[static_cast<std::size_t>(zid)] * km;
            if (m.degenerate_exposure) {
                p1 = m.gamma_bar_z[static_cast<std::size_t>(zid)] * km;
            }
        }

        bool flag = false;
        const double km_g = detail::phi_km_core(
            sb, sb.pre_gnat, [&sb](double t) { return sb.gnat_plus(t); }, r.w, r.y, r.delta,
            &flag);
        if (flag) out.support_flag = true;
        double inv_sw = 1.0;
        if (sb.has_S_inv) {
            inv_sw = sb.S_inv.left_limit(r.w);
        } else {
            const double s = sb.S.left_limit(r.w);
            if (s <= 0.0) {
                out.support_flag = true;
                inv_sw = 1.0 / sb.s_floor;
            } else {
                inv_sw = 1.0 / s;
            }
        }
        const double bval = inv_sw - km_g;
        const double mu = ke.present[static_cast<std::size_t>(zid)] != 0
                              ? ke.mu_z[static_cast<std::size_t>(zid)]
                              : 0.0;
        out.phi1.push_back(p1);
        out.b.push_back(bval);
        out.mu_i.push_back(mu);
        out.zid.push_back(zid);
        out.phi2.push_back((mu - psi_ref) * bval / m.gamma_scalar);
        out.phi.push_back(out.phi1.back() + out.phi2.back());
    }
    out.psi_ref = psi_ref;
    return out;
}

// ---------------------------------------------------------------------------
// Public gamma bundle (closed conventions, as displayed in the paper).
// ---------------------------------------------------------------------------
struct GammaBundle {
    std::map<std::pair<int, int>, double> gamma_az;
    std::map<std::pair<int, int>, double> gamma_bar_az;
    std::vector<double> gamma_bar_z;
    double gamma_scalar = 0.0;
    std::map<std::pair<int, int>, StepFunction> gamma_natural;
};

inline GammaBundle compute_gamma(const NuisanceSet& eta) {
    const EvalModel m = EvalModel::from_nuisances(eta, /*strict=*/true);
    GammaBundle gb;
    gb.gamma_scalar = m.gamma_scalar;
    gb.gamma_bar_z = m.gamma_bar_z;
    for (const auto& [key, s] : m.strata) {
        gb.gamma_az[key] = s.gamma;
        gb.gamma_bar_az[key] = s.gamma / m.gamma_scalar;
        StepFunction gn;
        gn.initial_value = s.gamma; // gamma_natural(y) = gamma for y <= min W
        for (std::size_t i = 0; i < s.wv.size(); ++i) {
            gn.times.push_back(s.wv[i]);
            gn.values.push_back(s.gnat_suffix[i + 1]);
        }
        gb.gamma_natural[key] = std::move(gn);
    }
    return gb;
}

// Closed-at-y survival integral L(y, a, z) = int_{[y,inf)} S(u) phi(du, z).
inline double compute_L(const StepFunction& S, const Kernel& k, double y,
                        const std::vector<double>& z, double quad_step = 1e-3) {
    double v = 0.0;
    for (const Kernel::Atom& a : k.atoms) {
        const double c = a.mass(z);
        if (c != 0.0 && a.t >= y) v += c * S(a.t);
    }
    if (k.has_density()) {
        const double lo = std::max(y, k.ac_lo);
        if (lo < k.ac_hi) {
            const std::size_t mgrid =
                std::max<std::size_t>(2, static_cast<std::size_t>((k.ac_hi - lo) / quad_step) + 1);
            const double h = (k.ac_hi - lo) / static_cast<double>(mgrid - 1);
            double acc = 0.0;
            for (std::size_t i = 0; i < mgrid; ++i) {
                const double t = lo + h * static_cast<double>(i);
                const double wgt = (i == 0 || i + 1 == mgrid) ? 0.5 : 1.0;
                acc += wgt * S(t) * k.density(t, z);
            }
            v += acc * h;
        }
    }
    return v;
}

// ---------------------------------------------------------------------------
// Second-order remainder R(P, P0) = Psi(P) - Psi(P0) - (P - P0) phi_P,
// computed exactly by enumerating the atoms of the discrete laws induced by
// the two nuisance sets. R1..R4 are reported as diagnostics computed from the
// displayed decomposition; `decomposition_gap` is total - (R1+R2+R3+R4).
// ---------------------------------------------------------------------------
struct RemainderReport {
    double R1 = 0.0, R2 = 0.0, R3 = 0.0, R4 = 0.0;
    double R41 = 0.0, R42 = 0.0, R43 = 0.0;
    double total = 0.0;
    double decomposition_gap = 0.0;
    double psi_p = 0.0, psi_p0 = 0.0;
};

inline RemainderReport remainder_terms(const NuisanceSet& etaP, const NuisanceSet& eta0,
                                       const Kernel& k) {
    const EvalModel mP = EvalModel::from_nuisances(etaP, /*strict=*/true);
    const EvalModel m0 = EvalModel::from_nuisances(eta0, /*strict=*/true);
    const KernelEval keP = build_kernel_eval(mP, k);
    const KernelEval ke0 = build_kernel_eval(m0, k);

    RemainderReport rep;
    rep.psi_p = compute_psi_plugin(mP, keP);
    rep.psi_p0 = compute_psi_plugin(m0, ke0);

    // exact total R = Psi(P) - Psi(P0) - (P - P0) phi_P by enumeration over
    // the atoms of the laws induced by the two nuisance sets
    auto inner = [&](const NuisanceSet& eta) {
        const DiscreteLaw law = law_from_nuisances(eta);
        std::vector<ObservedRecord> recs;
        std::vector<double> probs;
        for (const DiscreteAtom& o : law.atoms) {
            recs.push_back(
                {o.y, o.delta, o.w, o.a, law.z_patterns[static_cast<std::size_t>(o.z_id)]});
            probs.push_back(o.p);
        }
        const EifComponents eif = compute_eif(mP, keP, rep.psi_p, recs);
        double ip = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) ip += eif.phi[i] * probs[i];
        return ip;
    };
    rep.total = rep.psi_p - rep.psi_p0 - (inner(etaP) - inner(eta0));

    const std::size_t nz = mP.z_patterns.size();
    auto xi_P = [&](std::size_t z) { return (keP.mu_z[z] - rep.psi_p) / mP.gamma_scalar; };
    auto gbar_P_z = [&](std::size_t z) { return mP.g_z[z] / mP.gamma_scalar; };
    auto gbar_0_z = [&](std::size_t z) { return m0.g_z[z] / m0.gamma_scalar; };

    for (std::size_t z = 0; z < nz; ++z) {
        const double Hz0 = m0.H[z];
        if (Hz0 <= 0.0) continue;
        const double Htilde0 = m0.g_z[z] * Hz0 / m0.gamma_scalar;

        // R1: stratum (a0, z) only
        {
            const StratumEval& sP = mP.stratum(mP.a0, static_cast<int>(z));
            const StratumEval& s0 = m0.stratum(mP.a0, static_cast<int>(z));
            std::vector<double> grid = union_grid({&sP.S, &s0.S});
            double prev_ratio = 1.0;
            for (double y : grid) {
                const double sp = sP.S(y);
                if (sp <= 0.0) break;
                const double ratio = s0.S(y) / sp;
                const double dy = ratio - prev_ratio;
                prev_ratio = ratio;
                if (dy == 0.0) continue;
                const double L = compute_L(sP.S, k, y, mP.z_patterns[z]);
                const double rP = sP.at_risk(y), r0 = s0.at_risk(y);
                if (rP <= 0.0 || r0 <= 0.0) continue;
                const double nuP = sP.S(y) / rP, nu0 = s0.S(y) / r0;
                const double piP = mP.pi[z], pi0 = m0.pi[z];
                const double frac =
                    (pi0 * gbar_P_z(z) * nuP) / (piP * gbar_0_z(z) * nu0) - 1.0;
                rep.R1 += L * frac * dy * Htilde0;
            }
        }

        for (int a : {0, 1}) {
            const double ja0 = m0.pi_a(a, static_cast<int>(z)) * Hz0;
            if (ja0 <= 0.0) continue;
            const StratumEval& sP = mP.stratum(a, static_cast<int>(z));
            const StratumEval& s0 = m0.stratum(a, static_cast<int>(z));

            // R2 (proof form): integrate (S_P / S_0 - 1)(dy) against J_0
            {
                std::vector<double> grid = union_grid({&sP.S, &s0.S});
                double prev_ratio = 1.0;
                for (double y : grid) {
                    const double s0y = s0.S(y);
                    if (s0y <= 0.0) break;
                    const double ratio = sP.S(y) / s0y;
                    const double dy = ratio - prev_ratio;
                    prev_ratio = ratio;
                    if (dy == 0.0) continue;
                    const double rP = sP.at_risk(y), r0 = s0.at_risk(y);
                    if (rP <= 0.0 || r0 <= 0.0) continue;
                    const double nuP = sP.S(y) / rP, nu0 = s0y / r0;
                    rep.R2 += xi_P(z) * sP.gnat_closed(y) * (1.0 - nuP / nu0) * dy * ja0;
                }
            }

            // R3: two truncation-measure integrals
            {
                std::map<double, double> dGP, dG0;
                for (std::size_t i = 0; i < sP.wv.size(); ++i) dGP[sP.wv[i]] = sP.gm[i];
                for (std::size_t i = 0; i < s0.wv.size(); ++i) dG0[s0.wv[i]] = s0.gm[i];
                std::set<double> ws;
                for (const auto& [w, g] : dGP) ws.insert(w);
                for (const auto& [w, g] : dG0) ws.insert(w);
                for (double w : ws) {
                    const double swP = sP.S.left_limit(w), sw0 = s0.S.left_limit(w);
                    if (swP <= 0.0 || sw0 <= 0.0) continue;
                    const double dG = (dGP.count(w) ? dGP[w] : 0.0) - (dG0.count(w) ? dG0[w] : 0.0);
                    rep.R3 += xi_P(z) * (1.0 / sw0 - 1.0 / swP) * dG * ja0;
                    if (dGP.count(w) != 0) {
                        const double diff = swP - sw0;
                        rep.R3 -= xi_P(z) * diff * diff * dGP[w] / (sw0 * swP * swP) * ja0;
                    }
                }
            }

            // R4 pieces under J_0 / H_0
            rep.R41 += xi_P(z) * (sP.gamma - s0.gamma) * ja0;
            rep.R42 += xi_P(z) * sP.gamma *
                       (mP.pi_a(a, static_cast<int>(z)) - m0.pi_a(a, static_cast<int>(z))) * Hz0;
            rep.R43 += xi_P(z) * mP.pi_a(a, static_cast<int>(z)) * sP.gamma * (mP.H[z] - Hz0);
        }
    }
    rep.R4 = (m0.gamma_scalar - mP.gamma_scalar) / m0.gamma_scalar * (rep.R41 + rep.R42 + rep.R43);
    rep.decomposition_gap = rep.total - (rep.R1 + rep.R2 + rep.R3 + rep.R4);
    return rep;
}

// ---------------------------------------------------------------------------
// Duhamel-type comparisons between two conditional survival curves. Parts (a)
// and (b) are exact identities for step inputs; parts (c) and (d) are the
// displayed inequalities, returning lhs, bound, and gap = bound - lhs.
// ---------------------------------------------------------------------------
struct DuhamelReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double gap = 0.0; // lhs - rhs for identities; rhs - lhs (slack) for bounds
};

namespace detail {

inline double hazard_jump(const StepFunction& S, double v) {
    const double sl = S.left_limit(v);
    if (sl <= 0.0) return 0.0;
    return 1.0 - S(v) / sl;
}

} // namespace detail

// (a)  int phi d(F_P - F_0) = -sum_v Lplus_P(v) {S_0(v-)/S_P(v)} d(Lam_P - Lam_0)(v)
inline DuhamelReport duhamel_check_a(const StepFunction& SP, const StepFunction& S0,
                                     const Kernel& k, const std::vector<double>& z) {
    DuhamelReport r;
    for (const Kernel::Atom& a : k.atoms) {
        const double c = a.mass(z);
        if (c == 0.0) continue;
        r.lhs += c * (a.open ? (SP(a.t) - S0(a.t)) : (SP.left_limit(a.t) - S0.left_limit(a.t)));
    }
    auto Lplus = [&](double v) {
        double s = 0.0;
        for (const Kernel::Atom& a : k.atoms) {
            const double c = a.mass(z);
            if (c == 0.0) continue;
            if (a.open ? (a.t >= v) : (a.t > v)) {
                s += c * (a.open ? SP(a.t) : SP.left_limit(a.t));
            }
        }
        return s;
    };
    for (double v : union_grid({&SP, &S0})) {
        const double spv = SP(v);
        if (spv <= 0.0) break;
        const double dl = detail::hazard_jump(SP, v) - detail::hazard_jump(S0, v);
        if (dl == 0.0) continue;
        r.rhs -= Lplus(v) * (S0.left_limit(v) / spv) * dl;
    }
    r.gap = r.lhs - r.rhs;
    return r;
}

// (b)  sum_w G({w}) (S_P - S_0)(w-) / S_P(w-)^2
//        = -sum_v gnat_plus_P(v) {S_0(v-)/S_P(v)} d(Lam_P - Lam_0)(v)
inline DuhamelReport duhamel_check_b(const StepFunction& SP, const StepFunction& S0,
                                     const StepFunction& G) {
    DuhamelReport r;
    const auto gat = step_atoms(G);
    for (const auto& [w, gmass] : gat) {
        const double swP = SP.left_limit(w);
        if (swP <= 0.0) throw SupportViolation("S_P vanishes at a truncation atom");
        r.lhs += gmass * (swP - S0.left_limit(w)) / (swP * swP);
    }
    auto gnat_plus = [&](double v) {
        double s = 0.0;
        for (const auto& [w, gmass] : gat) {
            if (w > v) s += gmass / SP.left_limit(w);
        }
        return s;
    };
    for (double v : union_grid({&SP, &S0})) {
        const double spv = SP(v);
        if (spv <= 0.0) break;
        const double dl = detail::hazard_jump(SP, v) - detail::hazard_jump(S0, v);
        if (dl == 0.0) continue;
        r.rhs -= gnat_plus(v) * (S0.left_limit(v) / spv) * dl;
    }
    r.gap = r.lhs - r.rhs;
    return r;
}

// (c)  | int_alpha^beta omega(v) d{ int L/S dLam }_P-vs-0 |
//        <= 3 v(omega) sup | L_P/S_P - L_0/S_0 |
inline DuhamelReport duhamel_check_c(const StepFunction& SP, const StepFunction& S0,
                                     const Kernel& k, const std::vector<double>& z,
                                     const StepFunction& omega, double alpha, double beta) {
    DuhamelReport r;
    auto ratio = [&](const StepFunction& S, double v) {
        const double sv = S(v);
        if (sv <= 0.0) return 0.0;
        return compute_L(S, k, v, z) / sv;
    };
    std::vector<double> grid = union_grid({&SP, &S0});
    double lhs = 0.0, sup = 0.0;
    for (double v : grid) {
        if (v < alpha || v > beta) continue;
        lhs += omega(v) * (ratio(SP, v) * detail::hazard_jump(SP, v) -
                           ratio(S0, v) * detail::hazard_jump(S0, v));
    }
    std::vector<double> probe = grid;
    probe.push_back(alpha);
    probe.push_back(beta);
    for (double v : probe) {
        if (v < alpha || v > beta) continue;
        sup = std::max(sup, std::fabs(ratio(SP, v) - ratio(S0, v)));
    }
    // total variation of omega on [alpha, beta], plus its sup (the "v" norm)
    double tv = 0.0, supw = std::fabs(omega(alpha));
    double prev = omega(alpha);
    for (double t : omega.times) {
        if (t <= alpha || t > beta) continue;
        const double val = omega(t);
        tv += std::fabs(val - prev);
        supw = std::max(supw, std::fabs(val));
        prev = val;
    }
    const double vnorm = std::max(tv, supw);
    r.lhs = std::fabs(lhs);
    r.rhs = 3.0 * vnorm * sup;
    r.gap = r.rhs - r.lhs;
    return r;
}

// (d)  same structure with the truncation functional gamma_natural / S
inline DuhamelReport duhamel_check_d(const StepFunction& SP, const StepFunction& S0,
                                     const StepFunction& GP, const StepFunction& G0,
                                     const StepFunction& omega, double alpha, double beta) {
    DuhamelReport r;
    auto gnat_ratio = [&](const StepFunction& S, const StepFunction& G, double v) {
        const double sv = S(v);
        if (sv <= 0.0) return 0.0;
        double s = 0.0;
        for (const auto& [w, gmass] : step_atoms(G)) {
            if (w >= v) s += gmass / S.left_limit(w);
        }
        return s / sv;
    };
    std::vector<double> grid = union_grid({&SP, &S0});
    double lhs = 0.0, sup = 0.0;
    for (double v : grid) {
        if (v < alpha || v > beta) continue;
        lhs += omega(v) * (gnat_ratio(SP, GP, v) * detail::hazard_jump(SP, v) -
                           gnat_ratio(S0, G0, v) * detail::hazard_jump(S0, v));
    }
    std::vector<double> probe = grid;
    probe.push_back(alpha);
    probe.push_back(beta);
    for (double v : probe) {
        if (v < alpha || v > beta) continue;
        sup = std::max(sup, std::fabs(gnat_ratio(SP, GP, v) - gnat_ratio(S0, G0, v)));
    }
    double tv = 0.0, supw = std::fabs(omega(alpha));
    double prev = omega(alpha);
    for (double t : omega.times) {
        if (t <= alpha || t > beta) continue;
        const double val = omega(t);
        tv += std::fabs(val - prev);
        supw = std::max(supw, std::fabs(val));
        prev = val;
    }
    const double vnorm = std::max(tv, supw);
    r.lhs = std::fabs(lhs);
    r.rhs = 3.0 * vnorm * sup;
    r.gap = r.rhs - r.lhs;
    return r;
}

} // namespace ltsurv

#endif
