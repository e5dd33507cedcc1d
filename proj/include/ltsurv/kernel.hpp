#ifndef LTSURV_KERNEL_HPP
#define LTSURV_KERNEL_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltsurv {

struct PredictionOutOfRange : std::runtime_error {
    PredictionOutOfRange() : std::runtime_error("Brier prediction must map into [0,1]") {}
};
struct UnboundedKernelVariation : std::runtime_error {
    UnboundedKernelVariation() : std::runtime_error("kernel t-variation exceeds declared bound") {}
};

// A survival-integral kernel phi(t, z), represented per covariate value as a
// signed measure in t: a finite set of atoms plus an optional absolutely
// continuous density on a window. Atoms are "closed" by default, meaning the
// atom at tau switches on at t >= tau (phi right-continuous there); the
// "open" variant switches on at t > tau and is used to represent CDF-style
// evaluation functionals I(t <= t0) exactly on jump grids.
struct Kernel {
    struct Atom {
        double t = 0.0;
        std::function<double(const std::vector<double>&)> mass; // per-z atom size
        bool open = false;
    };

    std::string id;
    std::function<double(const std::vector<double>&)> base; // phi(0, z)
    std::vector<Atom> atoms;

    // Optional absolutely continuous part d phi(t,z)/dt on [ac_lo, ac_hi].
    std::function<double(double, const std::vector<double>&)> density;
    double ac_lo = 0.0;
    double ac_hi = 0.0;

    double constant_tail_from = 0.0; // phi(.,z) constant beyond this time, all z
    double variation_bound = 0.0;    // sup_z total variation of t -> phi(t,z)

    bool has_density() const { return static_cast<bool>(density); }

    // Pointwise evaluation reconstructed from the measure decomposition:
    // phi(t,z) = phi(0,z) + sum of switched-on atoms + integral of density.
    double eval(double t, const std::vector<double>& z, double quad_step = 1e-3) const {
        double v = base(z);
        for (const Atom& a : atoms) {
            if (a.open ? (t > a.t) : (t >= a.t)) v += a.mass(z);
        }
        if (has_density() && t > ac_lo) {
            const double hi = std::min(t, ac_hi);
            const std::size_t m = std::max<std::size_t>(2, static_cast<std::size_t>((hi - ac_lo) / quad_step) + 1);
            const double h = (hi - ac_lo) / static_cast<double>(m - 1);
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double u = ac_lo + h * static_cast<double>(i);
                const double wgt = (i == 0 || i + 1 == m) ? 0.5 : 1.0;
                acc += wgt * density(u, z);
            }
            v += acc * h;
        }
        return v;
    }
};

inline Kernel kernel_constant(double c) {
    Kernel k;
    k.id = "constant(" + std::to_string(c) + ")";
    k.base = [c](const std::vector<double>&) { return c; };
    k.constant_tail_from = 0.0;
    k.variation_bound = 0.0;
    return k;
}

// phi_tau(t, z) = I(t >= tau): the survival probability P(T >= tau).
inline Kernel kernel_survival(double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("kernel_survival: tau must be positive");
    Kernel k;
    k.id = "survival(" + std::to_string(tau) + ")";
    k.base = [](const std::vector<double>&) { return 0.0; };
    k.atoms.push_back({tau, [](const std::vector<double>&) { return 1.0; }, false});
    k.constant_tail_from = tau;
    k.variation_bound = 1.0;
    return k;
}

// phi(t, z) = I(t > tau): the open variant P(T > tau).
inline Kernel kernel_survival_open(double tau) {
    Kernel k;
    k.id = "survival_open(" + std::to_string(tau) + ")";
    k.base = [](const std::vector<double>&) { return 0.0; };
    k.atoms.push_back({tau, [](const std::vector<double>&) { return 1.0; }, true});
    k.constant_tail_from = tau;
    k.variation_bound = 1.0;
    return k;
}

// phi(t, z) = I(t <= t0) = 1 - I(t > t0): CDF evaluation functional.
inline Kernel kernel_cdf(double t0) {
    Kernel k;
    k.id = "cdf(" + std::to_string(t0) + ")";
    k.base = [](const std::vector<double>&) { return 1.0; };
    k.atoms.push_back({t0, [](const std::vector<double>&) { return -1.0; }, true});
    k.constant_tail_from = t0;
    k.variation_bound = 1.0;
    return k;
}

// Brier score kernel phi(t, z) = {I(t >= tau) - b(z)}^2 with atom 1 - 2 b(z).
inline Kernel kernel_brier(double tau, std::function<double(const std::vector<double>&)> b) {
    if (!(tau > 0.0)) throw std::invalid_argument("kernel_brier: tau must be positive");
    Kernel k;
    k.id = "brier(" + std::to_string(tau) + ")";
    auto checked = [b](const std::vector<double>& z) {
        const double v = b(z);
        if (v < 0.0 || v > 1.0) throw PredictionOutOfRange();
        return v;
    };
    k.base = [checked](const std::vector<double>& z) {
        const double bz = checked(z);
        return bz * bz;
    };
    k.atoms.push_back({tau, [checked](const std::vector<double>& z) { return 1.0 - 2.0 * checked(z); }, false});
    k.constant_tail_from = tau;
    k.variation_bound = 1.0;
    return k;
}

// c1 * ka + c2 * kb (shared z-domain; densities not combined in v1).
inline Kernel kernel_linear(double c1, const Kernel& ka, double c2, const Kernel& kb) {
    if (ka.has_density() || kb.has_density()) {
        throw std::invalid_argument("kernel_linear: densities not supported");
    }
    Kernel k;
    k.id = "linear(" + ka.id + "," + kb.id + ")";
    auto ba = ka.base, bb = kb.base;
    k.base = [c1, c2, ba, bb](const std::vector<double>& z) { return c1 * ba(z) + c2 * bb(z); };
    for (const Kernel::Atom& a : ka.atoms) {
        auto m = a.mass;
        k.atoms.push_back({a.t, [c1, m](const std::vector<double>& z) { return c1 * m(z); }, a.open});
    }
    for (const Kernel::Atom& a : kb.atoms) {
        auto m = a.mass;
        k.atoms.push_back({a.t, [c2, m](const std::vector<double>& z) { return c2 * m(z); }, a.open});
    }
    k.constant_tail_from = std::max(ka.constant_tail_from, kb.constant_tail_from);
    k.variation_bound = std::fabs(c1) * ka.variation_bound + std::fabs(c2) * kb.variation_bound;
    return k;
}

// Checks eval/measure coherence on a grid: phi(t,z) must equal
// phi(0,z) + measure((0,t]) everywhere it is probed.
inline bool kernel_consistent(const Kernel& k, const std::vector<double>& z,
                              const std::vector<double>& grid,
                              std::function<double(double, const std::vector<double>&)> reference,
                              double tol = 1e-10) {
    for (double t : grid) {
        if (std::fabs(k.eval(t, z) - reference(t, z)) > tol) return false;
    }
    return true;
}

} // namespace ltsurv

#endif
