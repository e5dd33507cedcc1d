#ifndef LTSURV_SIMULATION_HPP
#define LTSURV_SIMULATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "estimators.hpp"
#include "functionals.hpp"
#include "math_utils.hpp"

namespace ltsurv {

struct NoBracket : std::runtime_error {
    NoBracket() : std::runtime_error("censoring fraction cannot be bracketed in the shape parameter") {}
};
struct ReplicateFailureRate : std::runtime_error {
    explicit ReplicateFailureRate(std::size_t fails, std::size_t reps)
        : std::runtime_error("replicate failure rate too high: " + std::to_string(fails) + "/" +
                             std::to_string(reps)) {}
};

enum class TruncationLevel { none, low_25, high_50 };
enum class CensoringLevel { low_25, high_50 };
enum class DgpVariant { standard, independent_coarsening, robustness_corruption };

inline std::string to_string(TruncationLevel t) {
    switch (t) {
        case TruncationLevel::none: return "none";
        case TruncationLevel::low_25: return "low_25";
        case TruncationLevel::high_50: return "high_50";
    }
    return "?";
}
inline std::string to_string(CensoringLevel c) {
    return c == CensoringLevel::low_25 ? "low_25" : "high_50";
}

struct Scenario {
    TruncationLevel truncation = TruncationLevel::low_25;
    CensoringLevel censoring = CensoringLevel::low_25;
    DgpVariant variant = DgpVariant::standard;
    std::size_t n = 500;
    int reps = 1000;
    std::uint64_t seed = 1;
    std::vector<double> eval_times;              // empty: population quintiles
    std::vector<std::string> estimators = {"km", "onestep", "ee"};
    EstimatorConfig est_cfg;
    double censoring_shape = 0.0;                // 0: calibrate
    double treatment_log_hr = 0.5;               // robustness variant only
    int a0 = 1;

    std::string name() const {
        std::string v;
        if (variant == DgpVariant::independent_coarsening) v = "_indep";
        if (variant == DgpVariant::robustness_corruption) v = "_robust";
        return "trunc_" + to_string(truncation) + "_cens_" + to_string(censoring) + v;
    }
};

namespace detail {

inline double trunc_alpha(TruncationLevel lvl, double z1) {
    if (lvl == TruncationLevel::high_50) return 1.0 + (z1 > 0.0 ? 1.0 : 0.0);
    return 1.0;
}
inline double trunc_beta(TruncationLevel lvl, double z1) {
    if (lvl == TruncationLevel::low_25) return 1.0 + (z1 < 0.0 ? 2.0 : 0.0);
    return 1.0;
}
// Entry support [entry_lo, entry_hi]. The robustness variant delays entry
// until after the early-death component's support (see early_death_prob
// below): no observed unit is ever at risk during the sharp survival drop, so
// the influence-function martingale terms stay tame, while the differential
// retention of early deaths still produces a strong treated/control contrast
// in the truncation weights. The shortened window also keeps the
// inverse-survival weights bounded.
inline double entry_lo(DgpVariant variant) {
    return variant == DgpVariant::robustness_corruption ? 0.5 : 0.0;
}
inline double entry_hi(DgpVariant variant) {
    return variant == DgpVariant::robustness_corruption ? 2.5 : 10.0;
}
// In the robustness variant the exposure causes "early death": with
// probability q(z) a treated unit draws its event time from a fast Gamma
// whose mass sits below the entry window. This keeps the conditional event
// survival roughly flat (at about 1 - q) over the entry support, so the
// inverse-survival weights stay bounded while the treated/control contrast
// in the truncation weights gamma(a, z) is large.
inline double early_death_prob(int a, const std::vector<double>& z) {
    if (a != 1) return 0.0;
    return 0.5 + 0.15 * z[0] + 0.1 * z[1];
}
constexpr double kFastEventScale = 0.02;

struct IdealDraw {
    std::vector<double> z;
    double w = 0.0, t = 0.0, c = 0.0;
    int a = 1;
};

// One ideal-data unit (before the T >= W retention filter).
inline IdealDraw draw_unit(const Scenario& sc, double k_shape, Rng& rng) {
    IdealDraw u;
    u.z.resize(3);
    for (int j = 0; j < 3; ++j) u.z[j] = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double zsum = u.z[0] + u.z[1] + u.z[2];
    const bool indep = sc.variant == DgpVariant::independent_coarsening;

    u.a = 1;
    double scale_t = std::exp(zsum / 10.0);
    bool early = false;
    if (sc.variant == DgpVariant::robustness_corruption) {
        const double pa = 1.0 / (1.0 + std::exp(-0.8 * u.z[0]));
        u.a = rng.bernoulli(pa) ? 1 : 0;
        scale_t *= std::exp(-sc.treatment_log_hr * static_cast<double>(u.a));
        early = rng.bernoulli(early_death_prob(u.a, u.z));
    }
    u.t = rng.gamma(6.0, early ? kFastEventScale : scale_t);

    if (sc.truncation == TruncationLevel::none) {
        u.w = 0.0;
    } else {
        const double z1 = indep ? 0.0 : u.z[0];
        // the z-free control uses the z1 = +1 branch parameters for everyone
        const double a_par = indep ? trunc_alpha(sc.truncation, 1.0) : trunc_alpha(sc.truncation, z1);
        const double b_par = indep ? trunc_beta(sc.truncation, 1.0) : trunc_beta(sc.truncation, z1);
        u.w = entry_lo(sc.variant) +
              (entry_hi(sc.variant) - entry_lo(sc.variant)) * rng.beta(a_par, b_par);
    }
    const double scale_c = indep ? 1.0 : std::exp(-zsum / 10.0);
    u.c = u.w + rng.gamma(k_shape, scale_c);
    return u;
}

} // namespace detail

// Monte Carlo bisection for the censoring-shape parameter k such that the
// retained-population censoring fraction matches the scenario target.
inline double calibrate_censoring_shape(double target, TruncationLevel truncation,
                                        DgpVariant variant = DgpVariant::standard,
                                        double tolerance = 0.005, std::size_t draws = 1000000,
                                        std::uint64_t seed = 20260823) {
    if (!(target > 0.0 && target < 1.0)) {
        throw std::invalid_argument("calibrate_censoring_shape: target must be in (0,1)");
    }
    static std::map<std::tuple<double, int, int>, double> cache;
    static std::mutex mtx;
    const auto key = std::make_tuple(target, static_cast<int>(truncation), static_cast<int>(variant));
    {
        std::lock_guard<std::mutex> lock(mtx);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    Scenario sc;
    sc.truncation = truncation;
    sc.censoring = CensoringLevel::low_25;
    sc.variant = variant;
    auto frac = [&](double k) {
        Rng rng = Rng::substream(seed, {0xCAFE, static_cast<std::uint64_t>(k * 1e6)});
        std::size_t kept = 0, cens = 0;
        while (kept < draws) {
            const detail::IdealDraw u = detail::draw_unit(sc, k, rng);
            if (u.t < u.w) continue;
            ++kept;
            if (u.t > u.c) ++cens;
        }
        return static_cast<double>(cens) / static_cast<double>(draws);
    };
    double lo = 1e-3, hi = 100.0;
    if (!(frac(lo) > target && frac(hi) < target)) throw NoBracket();
    double k = 0.0;
    for (int it = 0; it < 60; ++it) {
        k = 0.5 * (lo + hi);
        const double f = frac(k);
        if (std::fabs(f - target) <= tolerance) break;
        if (f > target) {
            lo = k;
        } else {
            hi = k;
        }
    }
    {
        std::lock_guard<std::mutex> lock(mtx);
        cache[key] = k;
    }
    return k;
}

inline double censoring_target(CensoringLevel lvl) {
    return lvl == CensoringLevel::low_25 ? 0.25 : 0.50;
}

inline double scenario_censoring_shape(const Scenario& sc) {
    if (sc.censoring_shape > 0.0) return sc.censoring_shape;
    return calibrate_censoring_shape(censoring_target(sc.censoring), sc.truncation, sc.variant);
}

// Left truncation by rejection: draw ideal units until n satisfy T >= W.
inline Dataset sample_scenario(const Scenario& sc, int rep) {
    const double k = scenario_censoring_shape(sc);
    Rng rng = Rng::substream(sc.seed, {0x5A3B, static_cast<std::uint64_t>(rep)});
    Dataset data;
    data.covariate_alphabet = {{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}};
    while (data.records.size() < sc.n) {
        const detail::IdealDraw u = detail::draw_unit(sc, k, rng);
        if (u.t < u.w) continue;
        ObservedRecord r;
        r.z = u.z;
        r.w = u.w;
        r.a = u.a;
        r.y = std::min(u.t, u.c);
        r.delta = u.t <= u.c ? 1 : 0;
        data.records.push_back(r);
    }
    return data;
}

// Population marginal (or counterfactual, for the robustness variant)
// survival of the event time: an 8-stratum Gamma mixture.
inline double population_survival(const Scenario& sc, double t) {
    double acc = 0.0;
    const double z[2] = {-1.0, 1.0};
    for (double z1 : z) {
        for (double z2 : z) {
            for (double z3 : z) {
                double scale = std::exp((z1 + z2 + z3) / 10.0);
                if (sc.variant == DgpVariant::robustness_corruption) {
                    scale *= std::exp(-sc.treatment_log_hr * static_cast<double>(sc.a0));
                    const double q = detail::early_death_prob(sc.a0, {z1, z2, z3});
                    acc += q * gamma_survival(6.0, detail::kFastEventScale, t) +
                           (1.0 - q) * gamma_survival(6.0, scale, t);
                    continue;
                }
                acc += gamma_survival(6.0, scale, t);
            }
        }
    }
    return acc / 8.0;
}

// Times of the first four quintiles of the population event distribution.
inline std::vector<double> population_quintiles(const Scenario& sc) {
    std::vector<double> out;
    for (double q : {0.8, 0.6, 0.4, 0.2}) {
        double lo = 0.0, hi = 60.0;
        while (population_survival(sc, hi) > q) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (population_survival(sc, mid) > q) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push_back(0.5 * (lo + hi));
    }
    return out;
}

// Analytic ("oracle") nuisance set: the closed-form DGP curves discretized
// onto uniform grids. H and pi are the observable (post-retention) laws, so
// the set slots directly into the estimand and influence machinery. Curve
// values at grid points are exact; between grid points the step convention
// applies.
inline NuisanceSet oracle_nuisances(const Scenario& sc, std::size_t grid_points = 800,
                                    double t_max = 25.0,
                                    const std::vector<double>& extra_times = {}) {
    std::vector<double> tgrid;
    for (std::size_t i = 1; i <= grid_points; ++i) {
        tgrid.push_back(t_max * static_cast<double>(i) / static_cast<double>(grid_points));
    }
    if (sc.variant == DgpVariant::robustness_corruption) {
        // the early-death component concentrates the event survival drop near
        // zero, so that region needs a much finer grid than the uniform one
        const double fast_span = 30.0 * detail::kFastEventScale;
        for (std::size_t i = 1; i <= 2 * grid_points; ++i) {
            tgrid.push_back(fast_span * static_cast<double>(i) /
                            static_cast<double>(2 * grid_points));
        }
    }
    for (double t : extra_times) {
        if (t > 0.0 && t <= t_max) {
            tgrid.push_back(t);
            // a point just below t makes left limits at t grid-exact
            tgrid.push_back(std::nextafter(t, 0.0));
        }
    }
    std::sort(tgrid.begin(), tgrid.end());
    tgrid.erase(std::unique(tgrid.begin(), tgrid.end()), tgrid.end());
    const double k_shape = scenario_censoring_shape(sc);
    const bool indep = sc.variant == DgpVariant::independent_coarsening;
    const bool robust = sc.variant == DgpVariant::robustness_corruption;
    NuisanceSet eta;
    const double zv[2] = {-1.0, 1.0};
    for (double z1 : zv) {
        for (double z2 : zv) {
            for (double z3 : zv) eta.z_patterns.push_back({z1, z2, z3});
        }
    }
    std::sort(eta.z_patterns.begin(), eta.z_patterns.end());
    eta.a0 = sc.a0;
    eta.degenerate_exposure = !robust;
    const std::size_t nz = eta.z_patterns.size();
    eta.H.assign(nz, 0.0);
    eta.pi.assign(nz, 1.0);

    // entry-time density: W = wlo + (whi - wlo) * Beta(a_par, b_par)
    const double wlo = detail::entry_lo(sc.variant);
    const double whi = detail::entry_hi(sc.variant);
    const double wspan = whi - wlo;
    auto entry_pdf = [&](const std::vector<double>& z, double w) {
        if (sc.truncation == TruncationLevel::none) return 0.0;
        const double z1 = indep ? 1.0 : z[0];
        const double a_par = detail::trunc_alpha(sc.truncation, z1);
        const double b_par = detail::trunc_beta(sc.truncation, z1);
        const double x = (w - wlo) / wspan;
        if (x <= 0.0 || x >= 1.0) return 0.0;
        const double lognorm = std::lgamma(a_par + b_par) - std::lgamma(a_par) - std::lgamma(b_par);
        return std::exp(lognorm + (a_par - 1.0) * std::log(x) + (b_par - 1.0) * std::log1p(-x)) /
               wspan;
    };
    auto event_survival = [&](const std::vector<double>& z, int a, double t) {
        double s = std::exp((z[0] + z[1] + z[2]) / 10.0);
        if (!robust) return gamma_survival(6.0, s, t);
        s *= std::exp(-sc.treatment_log_hr * static_cast<double>(a));
        const double q = detail::early_death_prob(a, z);
        return q * gamma_survival(6.0, detail::kFastEventScale, t) +
               (1.0 - q) * gamma_survival(6.0, s, t);
    };
    // retention probability alpha(a, z) = P(T >= W | a, z) and the observable
    // entry CDF, by midpoint quadrature of f_W(w) S_T(w | a, z)
    const std::size_t qm = 20000;
    auto retention_masses = [&](const std::vector<double>& z, int a) {
        std::vector<double> mass(qm, 0.0);
        if (sc.truncation == TruncationLevel::none) return mass;
        const double h = wspan / static_cast<double>(qm);
        for (std::size_t j = 0; j < qm; ++j) {
            const double w = wlo + h * (static_cast<double>(j) + 0.5);
            mass[j] = entry_pdf(z, w) * event_survival(z, a, w) * h;
        }
        return mass;
    };

    std::vector<int> arms = robust ? std::vector<int>{0, 1} : std::vector<int>{sc.a0};
    std::vector<double> alpha_z(nz, 0.0);
    for (std::size_t zid = 0; zid < nz; ++zid) {
        const std::vector<double>& z = eta.z_patterns[zid];
        double num_a0 = 0.0, denom = 0.0;
        for (int a : arms) {
            const double p1 = 1.0 / (1.0 + std::exp(-0.8 * z[0]));
            const double pa = robust ? (a == 1 ? p1 : 1.0 - p1) : 1.0;
            double alpha = 0.0;
            if (sc.truncation == TruncationLevel::none) {
                alpha = 1.0;
            } else {
                for (double m : retention_masses(z, a)) alpha += m;
            }
            denom += pa * alpha;
            if (a == sc.a0) num_a0 = pa * alpha;

            StratumNuisance s;
            s.S_X.initial_value = 1.0;
            for (double t : tgrid) {
                s.S_X.times.push_back(t);
                s.S_X.values.push_back(event_survival(z, a, t));
            }
            // inverse survival with times shifted one grid cell down, so that
            // left_limit at a grid point t equals 1/S evaluated on the cell
            // ending at t; cells carrying entry mass store the exact
            // mass-weighted average of 1/S, making gamma = int dG / S(w-)
            // exact under the cell-aggregated G below
            s.S_X_inv.initial_value = 1.0;
            s.has_S_X_inv = true;
            std::vector<double> inv_cell(tgrid.size());
            for (std::size_t i = 0; i + 1 < tgrid.size(); ++i) {
                inv_cell[i + 1] = 1.0 / event_survival(z, a, tgrid[i + 1]);
            }
            inv_cell[0] = 1.0 / event_survival(z, a, tgrid[0]);
            if (sc.truncation != TruncationLevel::none) {
                const double hq = wspan / static_cast<double>(qm);
                std::size_t jq = 0;
                for (std::size_t i = 0; i < tgrid.size() && tgrid[i] <= whi + hq; ++i) {
                    double fmass = 0.0, fsmass = 0.0;
                    while (jq < qm && wlo + hq * (static_cast<double>(jq) + 0.5) <= tgrid[i]) {
                        const double w = wlo + hq * (static_cast<double>(jq) + 0.5);
                        const double fw = entry_pdf(z, w) * hq;
                        fmass += fw;
                        fsmass += fw * event_survival(z, a, w);
                        ++jq;
                    }
                    if (fsmass > 0.0) inv_cell[i] = fmass / fsmass;
                }
            }
            s.S_X_inv.initial_value = inv_cell[0];
            for (std::size_t i = 0; i + 1 < tgrid.size(); ++i) {
                s.S_X_inv.times.push_back(tgrid[i]);
                s.S_X_inv.values.push_back(inv_cell[i + 1]);
            }
            s.G.initial_value = 0.0;
            if (sc.truncation == TruncationLevel::none) {
                s.G.times.push_back(0.0);
                s.G.values.push_back(1.0);
            } else {
                // entry atoms on the survival grid (exact 1/S left-limits)
                const std::vector<double> mass = retention_masses(z, a);
                const double h = wspan / static_cast<double>(qm);
                double acc = 0.0;
                std::size_t j = 0;
                for (double t : tgrid) {
                    if (t > whi) break;
                    while (j < qm && wlo + h * (static_cast<double>(j) + 0.5) <= t) {
                        acc += mass[j];
                        ++j;
                    }
                    s.G.times.push_back(t);
                    s.G.values.push_back(std::min(1.0, acc / alpha));
                }
                while (j < qm) acc += mass[j++];
                if (s.G.times.empty() || s.G.times.back() < whi) {
                    s.G.times.push_back(whi);
                    s.G.values.push_back(1.0);
                }
                s.G.values.back() = 1.0;
            }
            s.Q.mode = CensoringMode::elapsed;
            const double sc_c = indep ? 1.0 : std::exp(-(z[0] + z[1] + z[2]) / 10.0);
            StepFunction qc;
            qc.initial_value = 1.0;
            for (double d : tgrid) {
                qc.times.push_back(d);
                qc.values.push_back(gamma_survival(k_shape, sc_c, d));
            }
            s.Q.curves.push_back(std::move(qc));
            s.tau_bar = t_max;
            eta.strata[{a, static_cast<int>(zid)}] = std::move(s);
        }
        alpha_z[zid] = denom;
        eta.pi[zid] = robust ? num_a0 / denom : 1.0;
    }
    double tot = 0.0;
    for (double a : alpha_z) tot += a;
    for (std::size_t zid = 0; zid < nz; ++zid) eta.H[zid] = alpha_z[zid] / tot;
    eta.check();
    return eta;
}

// ---------------------------------------------------------------------------
// Marginal risk-set product-limit baseline (ignores covariates) with
// Greenwood variance and Wald CIs.
// ---------------------------------------------------------------------------
struct KmEstimate {
    std::vector<double> times, est, se, ci_lo, ci_hi;
};

inline KmEstimate km_baseline(const Dataset& data, const std::vector<double>& eval_times,
                              double alpha = 0.05) {
    std::vector<Wyd> obs;
    for (const ObservedRecord& r : data.records) obs.push_back({r.w, r.y, r.delta});
    std::vector<double> ws, ys;
    std::map<double, double> events;
    for (const Wyd& o : obs) {
        ws.push_back(o.w);
        ys.push_back(o.y);
        if (o.delta == 1) events[o.y] += 1.0;
    }
    std::sort(ws.begin(), ws.end());
    std::sort(ys.begin(), ys.end());
    auto risk = [&](double u) {
        const auto wle = std::upper_bound(ws.begin(), ws.end(), u) - ws.begin();
        const auto ylt = std::lower_bound(ys.begin(), ys.end(), u) - ys.begin();
        return static_cast<double>(wle - ylt);
    };
    StepFunction S;
    std::vector<double> gw_times, gw_vals; // cumulative Greenwood sum
    double cur = 1.0, gw = 0.0;
    for (const auto& [u, d] : events) {
        const double r = risk(u);
        if (r <= 0.0) continue;
        cur *= 1.0 - d / r;
        if (cur < 0.0) cur = 0.0;
        if (r > d) gw += d / (r * (r - d));
        S.times.push_back(u);
        S.values.push_back(cur);
        gw_times.push_back(u);
        gw_vals.push_back(gw);
    }
    const double q = normal_quantile(1.0 - alpha / 2.0);
    KmEstimate out;
    out.times = eval_times;
    for (double t : eval_times) {
        const double s = S(t);
        auto it = std::upper_bound(gw_times.begin(), gw_times.end(), t);
        const double g = it == gw_times.begin() ? 0.0 : gw_vals[static_cast<std::size_t>(it - gw_times.begin()) - 1];
        const double se = s * std::sqrt(g);
        out.est.push_back(s);
        out.se.push_back(se);
        out.ci_lo.push_back(s - q * se);
        out.ci_hi.push_back(s + q * se);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo metric suite.
// ---------------------------------------------------------------------------
struct MetricsRow {
    std::string scenario, estimator;
    int time_index = 0;
    std::size_t n = 0;
    double scaled_bias = 0.0, scaled_bias_mc_se = 0.0;
    double scaled_var = 0.0;
    double coverage = 0.0, coverage_mc_se = 0.0;
    bool variance_na = false;
};

struct MetricsTable {
    std::vector<MetricsRow> rows;
    std::size_t reps = 0, failures = 0;
    std::vector<std::string> flags;

    std::string to_csv() const {
        std::string out =
            "scenario,estimator,time_index,n,scaled_bias,scaled_bias_mc_se,scaled_var,coverage,"
            "coverage_mc_se\n";
        char buf[512];
        for (const MetricsRow& r : rows) {
            if (r.variance_na) {
                std::snprintf(buf, sizeof(buf), "%s,%s,%d,%zu,%.10g,%.10g,NA,%.10g,%.10g\n",
                              r.scenario.c_str(), r.estimator.c_str(), r.time_index, r.n,
                              r.scaled_bias, r.scaled_bias_mc_se, r.coverage, r.coverage_mc_se);
            } else {
                std::snprintf(buf, sizeof(buf), "%s,%s,%d,%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                              r.scenario.c_str(), r.estimator.c_str(), r.time_index, r.n,
                              r.scaled_bias, r.scaled_bias_mc_se, r.scaled_var, r.coverage,
                              r.coverage_mc_se);
            }
            out += buf;
        }
        return out;
    }
};

inline MetricsTable run_monte_carlo(const Scenario& sc) {
    Scenario scenario = sc;
    if (scenario.eval_times.empty()) scenario.eval_times = population_quintiles(scenario);
    const std::size_t T = scenario.eval_times.size();
    std::vector<double> truth(T);
    for (std::size_t t = 0; t < T; ++t) {
        truth[t] = population_survival(scenario, scenario.eval_times[t]);
    }

    EstimatorConfig cfg = scenario.est_cfg;
    if (scenario.variant != DgpVariant::robustness_corruption) {
        cfg.nuisance.degenerate_exposure = true;
    }
    cfg.nuisance.a0 = scenario.a0;

    std::vector<Kernel> kernels;
    for (double t : scenario.eval_times) kernels.push_back(kernel_survival(t));

    // rep-indexed storage: estimate and CI per (estimator, time, rep)
    const std::size_t E = scenario.estimators.size();
    std::vector<std::vector<std::vector<double>>> est(E), lo(E), hi(E);
    for (std::size_t e = 0; e < E; ++e) {
        est[e].assign(T, {});
        lo[e].assign(T, {});
        hi[e].assign(T, {});
    }
    std::size_t failures = 0;
    const double q = normal_quantile(1.0 - cfg.alpha / 2.0);
    for (int rep = 0; rep < scenario.reps; ++rep) {
        const Dataset data = sample_scenario(scenario, rep);
        try {
            cfg.seed = mix_keys(scenario.seed, {0xF01D, static_cast<std::uint64_t>(rep)});
            bool need_debiased = false;
            for (const std::string& id : scenario.estimators) {
                if (id != "km") need_debiased = true;
            }
            FamilyEstimate fam;
            if (need_debiased) fam = estimate_family(data, kernels, cfg);
            KmEstimate km;
            for (std::size_t e = 0; e < E; ++e) {
                const std::string& id = scenario.estimators[e];
                if (id == "km") {
                    if (km.times.empty()) km = km_baseline(data, scenario.eval_times, cfg.alpha);
                    for (std::size_t t = 0; t < T; ++t) {
                        est[e][t].push_back(km.est[t]);
                        lo[e][t].push_back(km.ci_lo[t]);
                        hi[e][t].push_back(km.ci_hi[t]);
                    }
                } else if (id == "onestep" || id == "ee") {
                    const std::vector<double>& psi =
                        id == "onestep" ? fam.psi_onestep : fam.psi_ee;
                    const double slope = id == "ee" ? fam.ee_slope() : 1.0;
                    const double rootn = std::sqrt(static_cast<double>(scenario.n));
                    for (std::size_t t = 0; t < T; ++t) {
                        const double se = fam.se(t, psi[t]) / slope;
                        est[e][t].push_back(psi[t]);
                        lo[e][t].push_back(psi[t] - q * se / rootn);
                        hi[e][t].push_back(psi[t] + q * se / rootn);
                    }
                } else {
                    throw std::invalid_argument("unknown estimator id: " + id);
                }
            }
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            ++failures;
        }
    }
    const std::size_t reps = static_cast<std::size_t>(scenario.reps);
    if (failures * 100 > reps) throw ReplicateFailureRate(failures, reps);

    MetricsTable table;
    table.reps = reps;
    table.failures = failures;
    if (failures > 0) {
        table.flags.push_back("replicate_failures:" + std::to_string(failures));
    }
    const double rootn = std::sqrt(static_cast<double>(scenario.n));
    for (std::size_t e = 0; e < E; ++e) {
        for (std::size_t t = 0; t < T; ++t) {
            const std::vector<double>& v = est[e][t];
            const double m = static_cast<double>(v.size());
            if (m == 0.0) continue;
            MetricsRow row;
            row.scenario = scenario.name();
            row.estimator = scenario.estimators[e];
            row.time_index = static_cast<int>(t);
            row.n = scenario.n;
            const double mean = sample_mean(v);
            row.scaled_bias = rootn * (mean - truth[t]);
            if (v.size() > 1) {
                const double var = sample_variance(v); // unbiased
                row.scaled_var = static_cast<double>(scenario.n) * var;
                row.scaled_bias_mc_se = rootn * std::sqrt(var / m);
            } else {
                row.variance_na = true;
                table.flags.push_back("variance_na:single_replicate");
            }
            double cov = 0.0;
            for (std::size_t r = 0; r < v.size(); ++r) {
                if (lo[e][t][r] <= truth[t] && truth[t] <= hi[e][t][r]) cov += 1.0;
            }
            cov /= m;
            row.coverage = cov;
            row.coverage_mc_se = std::sqrt(cov * (1.0 - cov) / m);
            table.rows.push_back(row);
        }
    }
    return table;
}

} // namespace ltsurv

#endif
