#ifndef LTSURV_FUNCTIONALS_HPP
#define LTSURV_FUNCTIONALS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "estimators.hpp"

namespace ltsurv {

struct NoRoot : std::runtime_error {
    NoRoot() : std::runtime_error("estimating equation has no sign change on the solve grid") {}
};
struct NonMonotone : std::runtime_error {
    NonMonotone() : std::runtime_error("estimating-equation path is not monotone on the solve grid") {}
};
struct BoundaryViolation : std::runtime_error {
    BoundaryViolation() : std::runtime_error("estimated CDF touches {0,1} on the weight support") {}
};
struct DerivativeEvaluationFailure : std::runtime_error {
    explicit DerivativeEvaluationFailure(const std::string& why)
        : std::runtime_error("derivative evaluation failure: " + why) {}
};

struct FunctionalSpec {
    enum class Kind { survival_integral, estimating_equation, hadamard };
    Kind kind = Kind::survival_integral;
    Kernel kernel; // survival_integral
    int a0 = 1;
    // estimating_equation: family m -> kernel of int U_m dF + solve grid
    std::function<Kernel(double)> u_family;
    std::vector<double> solve_grid;
    double target = 0.0;
    // hadamard: paired (Theta, dTheta) evaluators over a surface grid
    std::vector<double> surface_grid;
    std::function<double(const std::vector<double>&)> theta;
    std::function<std::vector<double>(const std::vector<double>&)> dtheta;
};

inline FunctionalSpec counterfactual_survival(double tau, int a0) {
    FunctionalSpec fs;
    fs.kind = FunctionalSpec::Kind::survival_integral;
    fs.kernel = kernel_survival(tau);
    fs.a0 = a0;
    return fs;
}

// ---------------------------------------------------------------------------
// Cross-fitted estimation of a family of survival integrals with shared
// nuisance fits (one fit per fold, one kernel table per estimand).
// ---------------------------------------------------------------------------
struct FamilyEstimate {
    std::size_t n = 0;
    std::vector<double> psi_plugin, psi_onestep, psi_ee; // per estimand
    std::vector<std::vector<double>> phi1, mu;           // [s][record]
    std::vector<double> b;                               // [record]
    std::vector<int> fold_i;
    std::vector<double> gamma_k;
    std::vector<std::string> flags;
    bool support_flag = false;

    std::vector<double> influence(std::size_t s, double psi) const {
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = phi1[s][i] +
                     (mu[s][i] - psi) * b[i] / gamma_k[static_cast<std::size_t>(fold_i[i])];
        }
        return out;
    }
    double se(std::size_t s, double psi) const {
        const std::vector<double> phi = influence(s, psi);
        double mean = 0.0;
        for (double p : phi) mean += p;
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (double p : phi) ss += (p - mean) * (p - mean);
        return std::sqrt(ss / static_cast<double>(n));
    }
    // slope of the estimating equation in psi (the Wald sandwich denominator
    // for the estimating-equation estimator); converges to 1
    double ee_slope() const {
        double slope = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            slope += b[i] / gamma_k[static_cast<std::size_t>(fold_i[i])];
        }
        slope /= static_cast<double>(n);
        return slope > 0.0 ? slope : 1.0;
    }
};

inline FamilyEstimate estimate_family(const Dataset& data, const std::vector<Kernel>& kernels,
                                      const EstimatorConfig& cfg) {
    const std::size_t n = data.records.size();
    const std::size_t S = kernels.size();
    if (n == 0) throw EmptyDataset();
    FamilyEstimate fam;
    fam.n = n;
    fam.psi_plugin.assign(S, 0.0);
    fam.psi_onestep.assign(S, 0.0);
    fam.psi_ee.assign(S, 0.0);
    fam.phi1.assign(S, std::vector<double>(n, 0.0));
    fam.mu.assign(S, std::vector<double>(n, 0.0));
    fam.b.assign(n, 0.0);
    fam.fold_i.assign(n, 0);
    fam.gamma_k.assign(static_cast<std::size_t>(cfg.K), 0.0);

    try {
        const NuisanceSet eta_full =
            cfg.fixed_nuisance ? *cfg.fixed_nuisance : fit_nuisances(data, cfg.nuisance);
        const EvalModel m_full = EvalModel::from_nuisances(eta_full);
        for (std::size_t s = 0; s < S; ++s) {
            fam.psi_plugin[s] = compute_psi_plugin(m_full, build_kernel_eval(m_full, kernels[s]));
        }
    } catch (const std::exception& e) {
        throw EstimationFailure(std::string("full-sample plug-in: ") + e.what());
    }

    const FoldPlan plan = make_folds(n, cfg.K, cfg.seed);
    std::vector<double> ee_num(S, 0.0), ee_den(S, 0.0);
    for (int kk = 0; kk < cfg.K; ++kk) {
        Dataset train;
        train.covariate_alphabet = data.covariate_alphabet;
        std::vector<std::size_t> eval_idx;
        for (std::size_t i = 0; i < n; ++i) {
            if (plan.assignment[i] == kk) {
                eval_idx.push_back(i);
            } else {
                train.records.push_back(data.records[i]);
            }
        }
        if (eval_idx.empty()) continue;
        try {
            const NuisanceSet eta =
                cfg.fixed_nuisance ? *cfg.fixed_nuisance : fit_nuisances(train, cfg.nuisance);
            for (const std::string& f : eta.flags) {
                fam.flags.push_back("fold" + std::to_string(kk) + ":" + f);
            }
            const EvalModel m = EvalModel::from_nuisances(eta);
            fam.gamma_k[static_cast<std::size_t>(kk)] = m.gamma_scalar;
            std::vector<ObservedRecord> evals;
            for (std::size_t i : eval_idx) evals.push_back(data.records[i]);
            const double nk = static_cast<double>(eval_idx.size());
            for (std::size_t s = 0; s < S; ++s) {
                const KernelEval ke = build_kernel_eval(m, kernels[s]);
                const double psi_k = compute_psi_plugin(m, ke);
                const EifComponents eif = compute_eif(m, ke, psi_k, evals);
                if (eif.support_flag) fam.support_flag = true;
                double phibar = 0.0, num = 0.0, den = 0.0;
                for (std::size_t j = 0; j < eval_idx.size(); ++j) {
                    const std::size_t i = eval_idx[j];
                    fam.phi1[s][i] = eif.phi1[j];
                    fam.mu[s][i] = eif.mu_i[j];
                    if (s == 0) {
                        fam.b[i] = eif.b[j];
                        fam.fold_i[i] = kk;
                    }
                    phibar += eif.phi[j];
                    num += m.gamma_scalar * eif.phi1[j] + eif.mu_i[j] * eif.b[j];
                    den += eif.b[j];
                }
                phibar /= nk;
                fam.psi_onestep[s] += nk / static_cast<double>(n) * (psi_k + phibar);
                if (den == 0.0) throw EstimationFailure("estimating-equation denominator is zero");
                fam.psi_ee[s] += nk / static_cast<double>(n) * (num / den);
            }
        } catch (const EstimationFailure&) {
            throw;
        } catch (const std::exception& e) {
            throw EstimationFailure("fold " + std::to_string(kk) + ": " + e.what());
        }
    }
    return fam;
}

// ---------------------------------------------------------------------------
// Counterfactual survival curve over a time grid with optional isotonic
// projection and uniform band.
// ---------------------------------------------------------------------------
struct CurveReport {
    std::vector<double> times, est, est_isotonic, se;
    BandReport band;
    bool has_band = false;
};

inline CurveReport cf_survival_curve(const Dataset& data, const std::vector<double>& times, int a0,
                                     EstimatorConfig cfg, const BandConfig* band_cfg = nullptr) {
    cfg.nuisance.a0 = a0;
    std::vector<Kernel> kernels;
    for (double t : times) kernels.push_back(kernel_survival(t));
    const FamilyEstimate fam = estimate_family(data, kernels, cfg);
    CurveReport rep;
    rep.times = times;
    rep.est = fam.psi_onestep;
    rep.est_isotonic = isotonic_project(fam.psi_onestep);
    rep.se.resize(times.size());
    for (std::size_t s = 0; s < times.size(); ++s) rep.se[s] = fam.se(s, fam.psi_onestep[s]);
    if (band_cfg != nullptr) {
        std::vector<std::vector<double>> phi;
        for (std::size_t s = 0; s < times.size(); ++s) {
            phi.push_back(fam.influence(s, fam.psi_onestep[s]));
        }
        rep.band = uniform_band(phi, fam.psi_onestep, *band_cfg);
        rep.has_band = true;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Estimating-equation functionals. The median of the counterfactual event
// distribution uses U_m(t,z) = I(t <= m) - 1/2, i.e. the CDF kernel, with the
// smallest-crossing convention on the solve grid.
// ---------------------------------------------------------------------------
inline FunctionalSpec median_functional(int a0) {
    FunctionalSpec fs;
    fs.kind = FunctionalSpec::Kind::estimating_equation;
    fs.a0 = a0;
    fs.target = 0.5;
    fs.u_family = [](double m) { return kernel_cdf(m); };
    return fs;
}

struct RootReport {
    double m_hat = 0.0;
    double se = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
    double derivative = 0.0; // difference-quotient density estimate
    double value_at_root = 0.0;
    double alpha = 0.05;
};

struct RootConfig {
    double bandwidth_c = 1.0;    // h = c n^{-1/5} IQR
    double monotone_tol = 1e-3;  // allowed non-monotonicity of the CDF path
};

inline RootReport solve_estimating_equation(const Dataset& data, const FunctionalSpec& spec,
                                            EstimatorConfig cfg, const RootConfig& rcfg = {}) {
    if (spec.kind != FunctionalSpec::Kind::estimating_equation || !spec.u_family) {
        throw std::invalid_argument("solve_estimating_equation: wrong functional kind");
    }
    cfg.nuisance.a0 = spec.a0;
    // solve grid: event times in the target arm (or user-provided), capped at
    // the 0.95 quantile so grid atoms stay inside every stratum's support
    std::vector<double> grid = spec.solve_grid;
    if (grid.empty()) {
        std::vector<double> g;
        for (const ObservedRecord& r : data.records) {
            if (r.delta == 1 && (cfg.nuisance.degenerate_exposure || r.a == spec.a0)) {
                g.push_back(r.y);
            }
        }
        std::sort(g.begin(), g.end());
        if (!g.empty()) {
            const double cap = g[static_cast<std::size_t>(0.95 * (static_cast<double>(g.size()) - 1.0))];
            std::set<double> uniq;
            for (double t : g) {
                if (t <= cap) uniq.insert(t);
            }
            grid.assign(uniq.begin(), uniq.end());
        }
    }
    if (grid.empty()) throw NoRoot();

    std::vector<Kernel> kernels;
    for (double m : grid) kernels.push_back(spec.u_family(m));
    const FamilyEstimate fam = estimate_family(data, kernels, cfg);

    // monotonicity check along the solve grid
    for (std::size_t s = 1; s < grid.size(); ++s) {
        if (fam.psi_onestep[s] < fam.psi_onestep[s - 1] - rcfg.monotone_tol) throw NonMonotone();
    }
    std::size_t root = grid.size();
    for (std::size_t s = 0; s < grid.size(); ++s) {
        if (fam.psi_onestep[s] >= spec.target) {
            root = s;
            break;
        }
    }
    if (root == grid.size()) throw NoRoot();

    RootReport rep;
    rep.alpha = cfg.alpha;
    rep.m_hat = grid[root];
    rep.value_at_root = fam.psi_onestep[root];

    // delta-method SE: sd(psi at m_hat) / derivative, derivative by a
    // symmetric difference quotient of the estimated CDF path
    std::vector<double> times;
    for (const ObservedRecord& r : data.records) {
        if (r.delta == 1 && (cfg.nuisance.degenerate_exposure || r.a == spec.a0)) times.push_back(r.y);
    }
    std::sort(times.begin(), times.end());
    const double q1 = times[static_cast<std::size_t>(0.25 * (static_cast<double>(times.size()) - 1.0))];
    const double q3 = times[static_cast<std::size_t>(0.75 * (static_cast<double>(times.size()) - 1.0))];
    const double h = rcfg.bandwidth_c *
                     std::pow(static_cast<double>(data.records.size()), -0.2) * std::max(q3 - q1, 1e-8);
    const double m_lo = std::max(rep.m_hat - h, 0.0);
    const double m_hi = std::min(rep.m_hat + h, grid.back());
    if (!(m_hi > m_lo)) throw DerivativeEvaluationFailure("degenerate difference-quotient window");
    const FamilyEstimate side =
        estimate_family(data, {spec.u_family(m_lo), spec.u_family(m_hi)}, cfg);
    rep.derivative = (side.psi_onestep[1] - side.psi_onestep[0]) / (m_hi - m_lo);
    if (!(rep.derivative > 0.0)) {
        throw DerivativeEvaluationFailure("non-positive difference-quotient density");
    }
    const double se_psi = fam.se(root, fam.psi_onestep[root]);
    const double rootn = std::sqrt(static_cast<double>(data.records.size()));
    rep.se = se_psi / rep.derivative;
    const double q = normal_quantile(1.0 - cfg.alpha / 2.0);
    rep.ci_lo = rep.m_hat - q * rep.se / rootn;
    rep.ci_hi = rep.m_hat + q * rep.se / rootn;
    return rep;
}

// ---------------------------------------------------------------------------
// Log-log dependence contrast between the two exposure arms:
//   L(a) = int omega(t) log[-log P{T(a) > t}] dt,  contrast = L(1) - L(0).
// ---------------------------------------------------------------------------
struct LoglogReport {
    double contrast = 0.0;
    double se = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
    std::vector<double> grid, omega;
    double alpha = 0.05;
};

// trapezoid weights for a grid
namespace detail {
inline std::vector<double> trapezoid_weights(const std::vector<double>& g) {
    const std::size_t m = g.size();
    std::vector<double> w(m, 0.0);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double h = g[i + 1] - g[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}
} // namespace detail

inline LoglogReport loglog_contrast(const Dataset& data, const EstimatorConfig& cfg,
                                    std::vector<double> grid = {}, std::vector<double> omega = {},
                                    int arm1 = 1, int arm0 = 0) {
    // default grid: inner quantile window [q0.1, q0.6] of pooled follow-up times
    if (grid.empty()) {
        std::vector<double> ys;
        for (const ObservedRecord& r : data.records) ys.push_back(r.y);
        std::sort(ys.begin(), ys.end());
        const double lo = ys[static_cast<std::size_t>(0.10 * (static_cast<double>(ys.size()) - 1.0))];
        const double hi = ys[static_cast<std::size_t>(0.60 * (static_cast<double>(ys.size()) - 1.0))];
        const std::size_t m = 21;
        for (std::size_t i = 0; i < m; ++i) {
            grid.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1));
        }
    }
    if (omega.empty()) omega.assign(grid.size(), 1.0);
    if (omega.size() != grid.size()) throw std::invalid_argument("loglog_contrast: omega/grid mismatch");
    const std::vector<double> tw = detail::trapezoid_weights(grid);
    double total = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (omega[i] < 0.0) throw std::invalid_argument("loglog_contrast: omega must be nonnegative");
        total += omega[i] * tw[i];
    }
    if (total <= 0.0) throw std::invalid_argument("loglog_contrast: omega integrates to zero");
    for (double& o : omega) o /= total;

    std::vector<Kernel> kernels;
    for (double t : grid) kernels.push_back(kernel_survival(t));
    EstimatorConfig c1 = cfg, c0 = cfg;
    c1.nuisance.a0 = arm1;
    c0.nuisance.a0 = arm0;
    const FamilyEstimate f1 = estimate_family(data, kernels, c1);
    const FamilyEstimate f0 = estimate_family(data, kernels, c0);

    LoglogReport rep;
    rep.alpha = cfg.alpha;
    rep.grid = grid;
    rep.omega = omega;
    const std::size_t n = data.records.size();
    std::vector<double> infl(n, 0.0);
    auto gfun = [](double s) { return std::log(-std::log(s)); };
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double s1 = f1.psi_onestep[i], s0 = f0.psi_onestep[i];
        if (s1 <= 0.0 || s1 >= 1.0 || s0 <= 0.0 || s0 >= 1.0) throw BoundaryViolation();
        rep.contrast += omega[i] * tw[i] * (gfun(s1) - gfun(s0));
        const double d1 = 1.0 / (s1 * std::log(s1)), d0 = 1.0 / (s0 * std::log(s0));
        const std::vector<double> p1 = f1.influence(i, s1);
        const std::vector<double> p0 = f0.influence(i, s0);
        for (std::size_t j = 0; j < n; ++j) {
            infl[j] += omega[i] * tw[i] * (d1 * p1[j] - d0 * p0[j]);
        }
    }
    double mean = 0.0;
    for (double v : infl) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : infl) ss += (v - mean) * (v - mean);
    rep.se = std::sqrt(ss / static_cast<double>(n));
    const double q = normal_quantile(1.0 - cfg.alpha / 2.0);
    const double rootn = std::sqrt(static_cast<double>(n));
    rep.ci_lo = rep.contrast - q * rep.se / rootn;
    rep.ci_hi = rep.contrast + q * rep.se / rootn;
    return rep;
}

// ---------------------------------------------------------------------------
// Hadamard delta method over an estimated surface: theta_hat = Theta(psi),
// per-record influence = <dTheta(psi), influence surface>.
// ---------------------------------------------------------------------------
struct HadamardReport {
    double theta = 0.0;
    double se = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
    double alpha = 0.05;
};

inline HadamardReport hadamard_delta(const FunctionalSpec& spec, const FamilyEstimate& fam,
                                     double alpha = 0.05) {
    if (spec.kind != FunctionalSpec::Kind::hadamard || !spec.theta || !spec.dtheta) {
        throw DerivativeEvaluationFailure("missing Theta/dTheta evaluators");
    }
    HadamardReport rep;
    rep.alpha = alpha;
    rep.theta = spec.theta(fam.psi_onestep);
    const std::vector<double> grad = spec.dtheta(fam.psi_onestep);
    if (grad.size() != fam.psi_onestep.size()) {
        throw DerivativeEvaluationFailure("gradient size mismatch");
    }
    std::vector<double> infl(fam.n, 0.0);
    for (std::size_t s = 0; s < grad.size(); ++s) {
        if (grad[s] == 0.0) continue;
        const std::vector<double> p = fam.influence(s, fam.psi_onestep[s]);
        for (std::size_t j = 0; j < fam.n; ++j) infl[j] += grad[s] * p[j];
    }
    double mean = 0.0;
    for (double v : infl) mean += v;
    mean /= static_cast<double>(fam.n);
    double ss = 0.0;
    for (double v : infl) ss += (v - mean) * (v - mean);
    rep.se = std::sqrt(ss / static_cast<double>(fam.n));
    const double q = normal_quantile(1.0 - alpha / 2.0);
    const double rootn = std::sqrt(static_cast<double>(fam.n));
    rep.ci_lo = rep.theta - q * rep.se / rootn;
    rep.ci_hi = rep.theta + q * rep.se / rootn;
    return rep;
}

// ---------------------------------------------------------------------------
// Estimand id parser for the CLI catalog:
//   survival(tau=...), brier(tau=...,b=...), cf_survival(tau=...,a0=...),
//   median(a0=...), loglog(lo=...,hi=...,points=...)
// ---------------------------------------------------------------------------
struct EstimandRequest {
    enum class Type { survival, brier, cf_survival, median, loglog } type = Type::survival;
    double tau = 0.0;
    double b = 0.0;
    int a0 = 1;
    double lo = 0.0, hi = 0.0;
    int points = 21;
    bool has_window = false;
};

inline EstimandRequest parse_estimand(const std::string& id) {
    const auto open = id.find('(');
    const auto close = id.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open) {
        throw std::invalid_argument("bad estimand id: " + id);
    }
    const std::string name = id.substr(0, open);
    EstimandRequest req;
    if (name == "survival") {
        req.type = EstimandRequest::Type::survival;
    } else if (name == "brier") {
        req.type = EstimandRequest::Type::brier;
    } else if (name == "cf_survival") {
        req.type = EstimandRequest::Type::cf_survival;
    } else if (name == "median") {
        req.type = EstimandRequest::Type::median;
    } else if (name == "loglog") {
        req.type = EstimandRequest::Type::loglog;
    } else {
        throw std::invalid_argument("unknown estimand: " + name);
    }
    std::string args = id.substr(open + 1, close - open - 1);
    std::size_t pos = 0;
    while (pos < args.size()) {
        const auto comma = args.find(',', pos);
        const std::string tok = args.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        pos = comma == std::string::npos ? args.size() : comma + 1;
        if (tok.empty()) continue;
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("bad estimand argument: " + tok);
        const std::string key = tok.substr(0, eq);
        const double val = std::stod(tok.substr(eq + 1));
        if (key == "tau") {
            req.tau = val;
        } else if (key == "b") {
            req.b = val;
        } else if (key == "a0") {
            req.a0 = static_cast<int>(val);
        } else if (key == "lo") {
            req.lo = val;
            req.has_window = true;
        } else if (key == "hi") {
            req.hi = val;
            req.has_window = true;
        } else if (key == "points") {
            req.points = static_cast<int>(val);
        } else {
            throw std::invalid_argument("unknown estimand argument: " + key);
        }
    }
    return req;
}

} // namespace ltsurv

#endif
