#ifndef LTSURV_DISCRETE_LAW_HPP
#define LTSURV_DISCRETE_LAW_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "nuisance.hpp"

namespace ltsurv {

// A fully discrete observed-data law over atoms o = (y, delta, w, a, z).
// Used as an exact oracle: every functional of P (hazards, at-risk process,
// the parameter Psi, the EIF inner products) can be computed by enumeration.
struct DiscreteAtom {
    double y = 0.0;
    int delta = 1;
    double w = 0.0;
    int a = 1;
    int z_id = 0;
    double p = 0.0;
};

struct DiscreteLaw {
    std::vector<std::vector<double>> z_patterns;
    std::vector<DiscreteAtom> atoms;

    double total_mass() const {
        double s = 0.0;
        for (const DiscreteAtom& o : atoms) s += o.p;
        return s;
    }

    void normalize() {
        const double s = total_mass();
        if (s <= 0.0) throw std::logic_error("DiscreteLaw: non-positive total mass");
        for (DiscreteAtom& o : atoms) o.p /= s;
    }

    void compact(double tol = 0.0) {
        std::vector<DiscreteAtom> out;
        for (const DiscreteAtom& o : atoms) {
            if (o.p > tol) out.push_back(o);
        }
        atoms = std::move(out);
    }
};

// Mixture path P_eps = (1 - eps) P0 + eps P1 over the union support.
inline DiscreteLaw mix_laws(const DiscreteLaw& p0, const DiscreteLaw& p1, double eps) {
    auto key = [](const DiscreteAtom& o) {
        return std::make_tuple(o.a, o.z_id, o.w, o.y, o.delta);
    };
    std::map<std::tuple<int, int, double, double, int>, DiscreteAtom> acc;
    for (const DiscreteAtom& o : p0.atoms) {
        DiscreteAtom c = o;
        c.p = (1.0 - eps) * o.p;
        acc[key(o)] = c;
    }
    for (const DiscreteAtom& o : p1.atoms) {
        auto it = acc.find(key(o));
        if (it == acc.end()) {
            DiscreteAtom c = o;
            c.p = eps * o.p;
            acc[key(o)] = c;
        } else {
            it->second.p += eps * o.p;
        }
    }
    DiscreteLaw out;
    out.z_patterns = p0.z_patterns;
    for (const auto& [k, o] : acc) out.atoms.push_back(o);
    return out;
}

// Score-direction perturbation P_eps(o) = P(o) {1 + eps h(o)} with sum h P = 0.
inline DiscreteLaw perturb_law(const DiscreteLaw& p, const std::vector<double>& h, double eps) {
    if (h.size() != p.atoms.size()) throw std::invalid_argument("perturb_law: direction size mismatch");
    DiscreteLaw out = p;
    for (std::size_t i = 0; i < h.size(); ++i) {
        out.atoms[i].p = p.atoms[i].p * (1.0 + eps * h[i]);
        if (out.atoms[i].p < 0.0) throw std::invalid_argument("perturb_law: negative mass");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Observed law induced by ideal-data nuisances: entry atoms from the
// observable G, events from S_X tilted by censoring survival, censorings from
// the jumps of Q. Events precede censorings at ties (delta = 1 when T = C).
// ---------------------------------------------------------------------------
inline DiscreteLaw law_from_nuisances(const NuisanceSet& eta) {
    DiscreteLaw law;
    law.z_patterns = eta.z_patterns;
    for (const auto& [key, s] : eta.strata) {
        const int a = key.first;
        const int zid = key.second;
        const double stratum_mass = eta.H[static_cast<std::size_t>(zid)] * eta.pi_a(a, zid);
        if (stratum_mass <= 0.0) continue;

        std::vector<DiscreteAtom> local;
        const auto g_atoms = step_atoms(s.G);
        for (const auto& [w, gmass] : g_atoms) {
            const double sw = s.S_X.left_limit(w);
            if (sw <= 0.0) throw SupportViolation("S_X vanishes at a truncation atom");
            const StepFunction qc = [&]() {
                switch (s.Q.mode) {
                    case CensoringMode::single:
                        return s.Q.curves[0];
                    case CensoringMode::quantile_bins: {
                        std::size_t b = 0;
                        while (b + 1 < s.Q.bin_edges.size() && w > s.Q.bin_edges[b]) ++b;
                        return s.Q.curves[b];
                    }
                    case CensoringMode::elapsed: {
                        StepFunction shifted = s.Q.curves[0];
                        for (double& t : shifted.times) t += w;
                        return shifted;
                    }
                    case CensoringMode::by_w: {
                        auto it = std::lower_bound(s.Q.w_atoms.begin(), s.Q.w_atoms.end(), w);
                        if (it == s.Q.w_atoms.end() || *it != w) {
                            if (it == s.Q.w_atoms.end()) --it;
                        }
                        return s.Q.curves[static_cast<std::size_t>(it - s.Q.w_atoms.begin())];
                    }
                }
                return StepFunction::constant(1.0);
            }();
            const double qnorm = qc.left_limit(w); // P(C >= w | w); conditions on C >= W
            if (qnorm <= 0.0) throw SupportViolation("Q vanishes before the entry atom");
            double cond_mass = 0.0;
            // event atoms: y at S_X jumps with y >= w, kept when C >= y
            double prev_s = s.S_X.initial_value;
            for (std::size_t i = 0; i < s.S_X.times.size(); ++i) {
                const double y = s.S_X.times[i];
                const double f_mass = prev_s - s.S_X.values[i];
                prev_s = s.S_X.values[i];
                if (y < w || f_mass <= 0.0) continue;
                const double pr = gmass * f_mass * (qc.left_limit(y) / qnorm) / sw;
                if (pr > 0.0) {
                    local.push_back({y, 1, w, a, zid, pr});
                    cond_mass += pr / gmass;
                }
            }
            // censoring atoms: y at jumps of Q(. | w) with y >= w, kept when T > y
            for (const auto& [y, dq] : step_atoms(qc)) {
                if (y < w || dq >= 0.0) continue;
                const double pr = gmass * (-dq / qnorm) * s.S_X(y) / sw;
                if (pr > 0.0) {
                    local.push_back({y, 0, w, a, zid, pr});
                    cond_mass += pr / gmass;
                }
            }
            // leftover mass (neither curve exhausted): administrative censoring
            // at the end of the joint support, so the law stays proper without
            // disturbing G or the event hazard.
            const double leftover = 1.0 - cond_mass;
            if (leftover > 1e-14) {
                const double y_end = std::max({s.S_X.last_time(), qc.last_time(), w});
                local.push_back({y_end, 0, w, a, zid, gmass * leftover});
            }
        }
        for (DiscreteAtom o : local) {
            o.p *= stratum_mass;
            law.atoms.push_back(o);
        }
    }
    // merge duplicate atoms (entry atoms can collide with event atoms)
    std::map<std::tuple<int, int, double, double, int>, double> merged;
    for (const DiscreteAtom& o : law.atoms) {
        merged[{o.a, o.z_id, o.w, o.y, o.delta}] += o.p;
    }
    law.atoms.clear();
    for (const auto& [k, p] : merged) {
        law.atoms.push_back({std::get<3>(k), std::get<4>(k), std::get<2>(k), std::get<0>(k),
                             std::get<1>(k), p});
    }
    return law;
}

// ---------------------------------------------------------------------------
// Exact identification of eta from an observed discrete law: product-limit
// hazards from (F1, R), reversed product-integration for Q per entry atom.
// ---------------------------------------------------------------------------
inline NuisanceSet nuisances_from_law(const DiscreteLaw& law, int a0, bool degenerate_exposure = false) {
    NuisanceSet eta;
    eta.z_patterns = law.z_patterns;
    eta.a0 = a0;
    eta.degenerate_exposure = degenerate_exposure;
    const std::size_t nz = law.z_patterns.size();
    eta.H.assign(nz, 0.0);
    eta.pi.assign(nz, 0.0);

    std::map<std::pair<int, int>, std::vector<const DiscreteAtom*>> strata;
    for (const DiscreteAtom& o : law.atoms) {
        eta.H[static_cast<std::size_t>(o.z_id)] += o.p;
        if (o.a == a0) eta.pi[static_cast<std::size_t>(o.z_id)] += o.p;
        strata[{o.a, o.z_id}].push_back(&o);
    }
    for (std::size_t z = 0; z < nz; ++z) {
        if (eta.H[z] > 0.0) eta.pi[z] /= eta.H[z];
        if (degenerate_exposure) eta.pi[z] = 1.0;
    }

    for (const auto& [key, members] : strata) {
        double mass = 0.0;
        for (const DiscreteAtom* o : members) mass += o->p;
        StratumNuisance s;

        // truncation CDF
        std::map<double, double> wmass;
        for (const DiscreteAtom* o : members) wmass[o->w] += o->p / mass;
        s.G.initial_value = 0.0;
        double acc = 0.0;
        for (const auto& [w, m] : wmass) {
            acc += m;
            s.G.times.push_back(w);
            s.G.values.push_back(acc);
        }
        s.G.values.back() = 1.0;

        // event hazard from F1 and the exact at-risk probability
        std::map<double, double> f1;
        for (const DiscreteAtom* o : members) {
            if (o->delta == 1) f1[o->y] += o->p / mass;
        }
        s.no_events = f1.empty();
        s.S_X.initial_value = 1.0;
        double cur = 1.0;
        for (const auto& [u, df] : f1) {
            double r = 0.0;
            for (const DiscreteAtom* o : members) {
                if (o->w <= u && u <= o->y) r += o->p / mass;
            }
            if (r <= 0.0) throw SupportViolation("at-risk probability vanishes at an event atom");
            cur *= 1.0 - df / r;
            if (cur < 0.0) cur = 0.0;
            s.S_X.times.push_back(u);
            s.S_X.values.push_back(cur);
        }

        // censoring survival per entry atom, events preceding censorings
        s.Q.mode = CensoringMode::by_w;
        for (const auto& [w, wm] : wmass) {
            std::map<double, double> c0, c1, yg; // censor mass, event mass, Y >= u helper
            double wtotal = 0.0;
            for (const DiscreteAtom* o : members) {
                if (o->w != w) continue;
                wtotal += o->p;
                if (o->delta == 0) {
                    c0[o->y] += o->p;
                } else {
                    c1[o->y] += o->p;
                }
            }
            std::set<double> times;
            for (const auto& [t, m] : c0) times.insert(t);
            StepFunction q;
            q.initial_value = 1.0;
            double qc = 1.0;
            for (double u : times) {
                double surv_mass = 0.0; // P(Y >= u | W = w)
                for (const DiscreteAtom* o : members) {
                    if (o->w == w && o->y >= u) surv_mass += o->p;
                }
                const double ev_at_u = c1.count(u) != 0 ? c1[u] : 0.0;
                const double denom = surv_mass - ev_at_u;
                if (denom <= 0.0) {
                    qc = 0.0;
                } else {
                    qc *= 1.0 - c0[u] / denom;
                }
                if (qc < 0.0) qc = 0.0;
                q.times.push_back(u);
                q.values.push_back(qc);
            }
            s.Q.w_atoms.push_back(w);
            s.Q.curves.push_back(q);
        }

        s.tau_bar = 0.0;
        for (const DiscreteAtom* o : members) s.tau_bar = std::max(s.tau_bar, o->y);
        eta.strata[key] = std::move(s);
    }
    return eta;
}

} // namespace ltsurv

#endif
