#ifndef LTSURV_NUISANCE_HPP
#define LTSURV_NUISANCE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "step_function.hpp"

namespace ltsurv {

struct EmptyStratum : std::runtime_error {
    EmptyStratum() : std::runtime_error("stratum has no observations") {}
};
struct SupportViolation : std::runtime_error {
    explicit SupportViolation(const std::string& what) : std::runtime_error("support violation: " + what) {}
};

// One observation projected to the pieces the survival fitters need.
struct Wyd {
    double w;
    double y;
    int delta;
};

// ---------------------------------------------------------------------------
// Risk-set product-limit estimator under left truncation / right censoring.
// Risk set at u is {i : w_i <= u <= y_i}; tied events at u share one factor
// (1 - d_u / r_u); events precede censorings at ties.
// ---------------------------------------------------------------------------
struct ProductLimitFit {
    StepFunction survival;
    // Debiased inverse survival: cumulative product of (r+1)/(r-d+1) over
    // event times. Conditionally on the risk history, each factor has
    // expectation {1 - lam^(r+1)} / (1 - lam), so the product is a nearly
    // unbiased estimate of 1/S(t) -- unlike 1/survival, whose inverted
    // factors r/(r-d) are Jensen-inflated and blow up when d = r.
    StepFunction inv_survival;
    bool no_events = false;
};

inline ProductLimitFit product_limit(const std::vector<Wyd>& obs) {
    if (obs.empty()) throw EmptyStratum();
    std::vector<double> ws, ys;
    ws.reserve(obs.size());
    ys.reserve(obs.size());
    std::map<double, int> event_counts;
    for (const Wyd& o : obs) {
        ws.push_back(o.w);
        ys.push_back(o.y);
        if (o.delta == 1) ++event_counts[o.y];
    }
    if (event_counts.empty()) {
        return {StepFunction::constant(1.0), StepFunction::constant(1.0), true};
    }
    std::sort(ws.begin(), ws.end());
    std::sort(ys.begin(), ys.end());
    StepFunction s;
    s.initial_value = 1.0;
    StepFunction v;
    v.initial_value = 1.0;
    double cur = 1.0;
    double inv = 1.0;
    for (const auto& [u, d] : event_counts) {
        const auto entered = std::upper_bound(ws.begin(), ws.end(), u) - ws.begin();
        const auto left = std::lower_bound(ys.begin(), ys.end(), u) - ys.begin();
        const double r = static_cast<double>(entered - left);
        if (r <= 0.0) continue; // empty risk set: no information, curve flat
        cur *= 1.0 - static_cast<double>(d) / r;
        if (cur < 0.0) cur = 0.0;
        inv *= (r + 1.0) / (r - static_cast<double>(d) + 1.0);
        s.times.push_back(u);
        s.values.push_back(cur);
        v.times.push_back(u);
        v.values.push_back(inv);
    }
    return {s, v, false};
}

inline ProductLimitFit fit_event_survival(const std::vector<Wyd>& obs) { return product_limit(obs); }

// ---------------------------------------------------------------------------
// Pooled sieve hazard fitter: a piecewise-exponential Poisson regression with
// event-quantile time bins shared across covariate strata and time-block
// covariate coefficients,
//   log rate(u | z) = alpha_j + beta_block(j)' z,   u in bin j.
// Sharing the bin intercepts across strata borrows strength the way the
// pooled machine-learning hazard learners do, cutting the per-stratum
// estimation variance (and with it the second-order remainder of debiased
// estimators) while the time-block coefficients absorb covariate effects
// that drift over time. Delayed entry is handled through exact person-time
// exposure within bins.
// ---------------------------------------------------------------------------
struct PooledObservation {
    double w;
    double y;
    int delta;
    std::vector<double> z;
};

namespace detail_pooled {

// Solve A x = b in place by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_linear(std::vector<std::vector<double>> A, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::fabs(A[r][c]) > std::fabs(A[piv][c])) piv = r;
        }
        if (std::fabs(A[piv][c]) < 1e-14) throw std::runtime_error("singular hazard design");
        std::swap(A[c], A[piv]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = A[r][c] / A[c][c];
            if (f == 0.0) continue;
            for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t ri = n; ri-- > 0;) {
        double acc = b[ri];
        for (std::size_t k = ri + 1; k < n; ++k) acc -= A[ri][k] * x[k];
        x[ri] = acc / A[ri][ri];
    }
    return x;
}

} // namespace detail_pooled

// Returns one fitted curve pair per distinct covariate pattern (in the order
// given by `z_patterns`). `bins` is the target number of event-quantile time
// bins; `beta_blocks` the number of time blocks with their own coefficients.
inline std::vector<ProductLimitFit> fit_pooled_hazard(const std::vector<PooledObservation>& obs,
                                                      const std::vector<std::vector<double>>& z_patterns,
                                                      std::size_t bins, std::size_t beta_blocks,
                                                      std::size_t refine = 6) {
    if (obs.empty()) throw EmptyStratum();
    std::vector<double> events;
    for (const PooledObservation& o : obs) {
        if (o.delta == 1) events.push_back(o.y);
    }
    const std::size_t nz = z_patterns.size();
    if (events.empty()) {
        return std::vector<ProductLimitFit>(
            nz, {StepFunction::constant(1.0), StepFunction::constant(1.0), true});
    }
    std::sort(events.begin(), events.end());
    const std::size_t ne = events.size();
    const std::size_t J0 = std::max<std::size_t>(1, std::min(bins, ne / 2));
    // bin edges at event quantiles; curves stay flat before the first event
    std::vector<double> edges;
    edges.push_back(std::nextafter(events.front(), 0.0));
    for (std::size_t j = 1; j < J0; ++j) {
        const double e = events[(ne * j) / J0];
        if (e > edges.back()) edges.push_back(e);
    }
    if (events.back() > edges.back()) edges.push_back(events.back());
    const std::size_t J = edges.size() - 1;
    const std::size_t zdim = z_patterns.empty() ? 0 : z_patterns[0].size();
    const std::size_t B = std::max<std::size_t>(1, std::min(beta_blocks, J));
    auto block_of = [&](std::size_t j) { return (j * B) / J; };
    const std::size_t P = J + B * zdim;

    // aggregate events and person-time exposure per (pattern, bin) cell
    auto zid_of = [&](const std::vector<double>& z) {
        const auto it = std::lower_bound(z_patterns.begin(), z_patterns.end(), z);
        if (it == z_patterns.end() || *it != z) throw std::logic_error("unknown covariate pattern");
        return static_cast<std::size_t>(it - z_patterns.begin());
    };
    std::vector<std::vector<double>> d(nz, std::vector<double>(J, 0.0));
    std::vector<std::vector<double>> expo(nz, std::vector<double>(J, 0.0));
    for (const PooledObservation& o : obs) {
        const std::size_t zi = zid_of(o.z);
        for (std::size_t j = 0; j < J; ++j) {
            const double lo = edges[j], hi = edges[j + 1];
            expo[zi][j] += std::max(0.0, std::min(o.y, hi) - std::max(o.w, lo));
            if (o.delta == 1 && o.y > lo && o.y <= hi) d[zi][j] += 1.0;
        }
    }

    // Poisson IRLS for theta = (alpha_1..alpha_J, beta_1..beta_B)
    std::vector<double> theta(P, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
        double dj = 0.0, ej = 0.0;
        for (std::size_t zi = 0; zi < nz; ++zi) {
            dj += d[zi][j];
            ej += expo[zi][j];
        }
        theta[j] = std::log((dj + 0.5) / std::max(ej, 1e-12));
    }
    auto eta_cell = [&](std::size_t zi, std::size_t j) {
        double e = theta[j];
        const std::size_t b0 = J + block_of(j) * zdim;
        for (std::size_t k = 0; k < zdim; ++k) e += theta[b0 + k] * z_patterns[zi][k];
        return e;
    };
    for (int it = 0; it < 50; ++it) {
        std::vector<double> grad(P, 0.0);
        std::vector<std::vector<double>> hess(P, std::vector<double>(P, 0.0));
        std::vector<std::size_t> cols(1 + zdim);
        for (std::size_t zi = 0; zi < nz; ++zi) {
            for (std::size_t j = 0; j < J; ++j) {
                if (expo[zi][j] <= 0.0) continue;
                const double mu = expo[zi][j] * std::exp(eta_cell(zi, j));
                const double r = d[zi][j] - mu;
                cols[0] = j;
                const std::size_t b0 = J + block_of(j) * zdim;
                for (std::size_t k = 0; k < zdim; ++k) cols[k + 1] = b0 + k;
                for (std::size_t a = 0; a < cols.size(); ++a) {
                    const double xa = a == 0 ? 1.0 : z_patterns[zi][a - 1];
                    grad[cols[a]] += r * xa;
                    for (std::size_t b = 0; b < cols.size(); ++b) {
                        const double xb = b == 0 ? 1.0 : z_patterns[zi][b - 1];
                        hess[cols[a]][cols[b]] += mu * xa * xb;
                    }
                }
            }
        }
        // light ridge keeps the step well-posed when a bin has scant exposure
        for (std::size_t p = 0; p < P; ++p) hess[p][p] += 1e-8;
        const std::vector<double> step = detail_pooled::solve_linear(hess, grad);
        double mx = 0.0;
        for (std::size_t p = 0; p < P; ++p) {
            const double delta = std::clamp(step[p], -4.0, 4.0);
            theta[p] += delta;
            mx = std::max(mx, std::fabs(delta));
        }
        if (mx < 1e-10) break;
    }

    // per-pattern curves on a sub-bin grid; constant hazard within bins
    std::vector<ProductLimitFit> out(nz);
    for (std::size_t zi = 0; zi < nz; ++zi) {
        StepFunction s, v;
        s.initial_value = 1.0;
        v.initial_value = 1.0;
        double lam = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            const double rate = std::exp(eta_cell(zi, j));
            const double lo = edges[j], hi = edges[j + 1];
            const std::size_t m = std::max<std::size_t>(1, refine);
            for (std::size_t k = 1; k <= m; ++k) {
                const double t = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(m);
                const double cum = lam + rate * (t - lo);
                s.times.push_back(t);
                s.values.push_back(std::exp(-cum));
                v.times.push_back(t);
                v.values.push_back(std::exp(cum));
            }
            lam += rate * (hi - lo);
        }
        out[zi].survival = std::move(s);
        out[zi].inv_survival = std::move(v);
        out[zi].no_events = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Observable conditional censoring survival Q(c | w, a, z).
// ---------------------------------------------------------------------------
enum class CensoringMode { single, quantile_bins, elapsed, by_w };

struct CensoringModel {
    CensoringMode mode = CensoringMode::single;
    std::vector<StepFunction> curves;
    std::vector<double> bin_edges; // quantile_bins: upper edges of the w bins
    std::vector<double> w_atoms;   // by_w: supported entry values

    double eval(double c, double w) const {
        switch (mode) {
            case CensoringMode::single:
                return curves[0](c);
            case CensoringMode::quantile_bins: {
                std::size_t b = 0;
                while (b + 1 < bin_edges.size() && w > bin_edges[b]) ++b;
                return curves[b](c);
            }
            case CensoringMode::elapsed:
                return c < w ? 1.0 : curves[0](c - w);
            case CensoringMode::by_w: {
                auto it = std::lower_bound(w_atoms.begin(), w_atoms.end(), w);
                if (it == w_atoms.end() || *it != w) {
                    // fall back to the nearest known entry value
                    if (it == w_atoms.end()) --it;
                }
                return curves[static_cast<std::size_t>(it - w_atoms.begin())](c);
            }
        }
        return 1.0;
    }

    double eval_left(double c, double w) const {
        switch (mode) {
            case CensoringMode::single:
                return curves[0].left_limit(c);
            case CensoringMode::quantile_bins: {
                std::size_t b = 0;
                while (b + 1 < bin_edges.size() && w > bin_edges[b]) ++b;
                return curves[b].left_limit(c);
            }
            case CensoringMode::elapsed:
                return c <= w ? 1.0 : curves[0].left_limit(c - w);
            case CensoringMode::by_w: {
                auto it = std::lower_bound(w_atoms.begin(), w_atoms.end(), w);
                if (it == w_atoms.end() || *it != w) {
                    if (it == w_atoms.end()) --it;
                }
                return curves[static_cast<std::size_t>(it - w_atoms.begin())].left_limit(c);
            }
        }
        return 1.0;
    }
};

// Reversed-delta product-limit fits of Q. The single-bin mode equals
// fit_event_survival applied after delta -> 1 - delta and w -> 0.
inline CensoringModel fit_censoring_survival(const std::vector<Wyd>& obs, CensoringMode mode,
                                             std::size_t w_bins = 1) {
    if (obs.empty()) throw EmptyStratum();
    CensoringModel q;
    q.mode = mode;
    auto reversed = [](std::vector<Wyd> v) {
        for (Wyd& o : v) {
            o.delta = 1 - o.delta;
            o.w = 0.0;
        }
        return v;
    };
    switch (mode) {
        case CensoringMode::single: {
            q.curves.push_back(product_limit(reversed(obs)).survival);
            break;
        }
        case CensoringMode::quantile_bins: {
            std::vector<double> ws;
            for (const Wyd& o : obs) ws.push_back(o.w);
            std::sort(ws.begin(), ws.end());
            const std::size_t B = std::max<std::size_t>(1, w_bins);
            for (std::size_t b = 1; b <= B; ++b) {
                const std::size_t idx = std::min(ws.size() - 1, (b * ws.size()) / B == 0
                                                                    ? 0
                                                                    : (b * ws.size()) / B - 1);
                q.bin_edges.push_back(ws[idx]);
            }
            q.bin_edges.back() = std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < B; ++b) {
                const double lo = b == 0 ? -std::numeric_limits<double>::infinity() : q.bin_edges[b - 1];
                std::vector<Wyd> grp;
                for (const Wyd& o : obs) {
                    if (o.w > lo && o.w <= q.bin_edges[b]) grp.push_back(o);
                }
                if (grp.empty()) grp = obs;
                q.curves.push_back(product_limit(reversed(grp)).survival);
            }
            break;
        }
        case CensoringMode::elapsed: {
            std::vector<Wyd> shifted;
            shifted.reserve(obs.size());
            for (const Wyd& o : obs) shifted.push_back({0.0, o.y - o.w, 1 - o.delta});
            q.curves.push_back(product_limit(shifted).survival);
            break;
        }
        case CensoringMode::by_w: {
            std::set<double> atoms;
            for (const Wyd& o : obs) atoms.insert(o.w);
            for (double w : atoms) {
                std::vector<Wyd> grp;
                for (const Wyd& o : obs) {
                    if (o.w == w) grp.push_back(o);
                }
                q.w_atoms.push_back(w);
                q.curves.push_back(product_limit(reversed(grp)).survival);
            }
            break;
        }
    }
    return q;
}

// Stratified empirical distribution function of the entry time.
inline StepFunction fit_truncation_cdf(const std::vector<double>& ws) {
    if (ws.empty()) throw EmptyStratum();
    std::map<double, std::size_t> counts;
    for (double w : ws) ++counts[w];
    StepFunction g;
    g.initial_value = 0.0;
    double acc = 0.0;
    for (const auto& [w, c] : counts) {
        acc += static_cast<double>(c) / static_cast<double>(ws.size());
        g.times.push_back(w);
        g.values.push_back(acc);
    }
    if (!g.values.empty()) g.values.back() = 1.0;
    return g;
}

// ---------------------------------------------------------------------------
// The fitted nuisance tuple eta = (H, pi, G, Q, S_X) with stratum storage.
// ---------------------------------------------------------------------------
struct StratumNuisance {
    StepFunction S_X;     // target conditional event-time survival
    StepFunction S_X_inv; // debiased inverse survival 1/S_X (fitted curves only)
    bool has_S_X_inv = false;
    StepFunction G;   // observable truncation CDF
    CensoringModel Q; // observable censoring survival
    // Training-stratum entry/exit times (sorted): carries the empirical
    // at-risk proportion R_n(u) = #{w_i <= u <= y_i} / n, the direct plug-in
    // for the observable at-risk probability. It agrees with the
    // product-limit fit's own risk counts at every event time.
    std::vector<double> w_sorted, y_sorted;
    double tau_bar = 0.0;
    bool no_events = false;

    bool has_empirical_risk() const { return !y_sorted.empty(); }
    double empirical_at_risk(double u) const {
        const auto in = std::upper_bound(w_sorted.begin(), w_sorted.end(), u) - w_sorted.begin();
        const auto out = std::lower_bound(y_sorted.begin(), y_sorted.end(), u) - y_sorted.begin();
        return static_cast<double>(in - out) / static_cast<double>(y_sorted.size());
    }
};

struct NuisanceSet {
    std::vector<std::vector<double>> z_patterns; // lexicographic order
    std::vector<double> H;                       // covariate mass per z pattern
    std::vector<double> pi;                      // P(A = a0 | z) per z pattern
    int a0 = 1;
    bool degenerate_exposure = false;
    std::map<std::pair<int, int>, StratumNuisance> strata; // (a, z_id) -> fit
    std::vector<std::string> flags;
    std::size_t pi_clip_events = 0;

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

    const StratumNuisance* stratum(int a, int zid) const {
        auto it = strata.find({a, zid});
        return it == strata.end() ? nullptr : &it->second;
    }

    void check() const {
        double hsum = 0.0;
        for (double h : H) hsum += h;
        if (std::fabs(hsum - 1.0) > 1e-12) throw std::logic_error("NuisanceSet: H must sum to 1");
        for (const auto& [key, s] : strata) {
            if (!s.G.is_cdf()) throw std::logic_error("NuisanceSet: G is not a CDF curve");
            if (!s.S_X.is_survival()) throw std::logic_error("NuisanceSet: S_X is not a survival curve");
        }
    }
};

// Exact at-risk probability reconstruction
//   R(u | a, z) = S_X(u- | a,z) * sum_{w <= u} Q(u- | w, a, z) G({w}) / S_X(w- | a,z).
inline double at_risk_at(const StratumNuisance& s, double u) {
    const double s_left = s.S_X.left_limit(u);
    if (s_left <= 0.0) return 0.0;
    double acc = 0.0;
    double prev = s.G.initial_value;
    for (std::size_t i = 0; i < s.G.times.size(); ++i) {
        const double w = s.G.times[i];
        if (w > u) break;
        const double mass = s.G.values[i] - prev;
        prev = s.G.values[i];
        if (mass <= 0.0) continue;
        double inv_sw;
        if (s.has_S_X_inv) {
            inv_sw = s.S_X_inv.left_limit(w);
        } else {
            const double sw = s.S_X.left_limit(w);
            if (sw <= 0.0) throw SupportViolation("S_X vanishes at a truncation atom");
            inv_sw = 1.0 / sw;
        }
        acc += mass * s.Q.eval_left(u, w) * inv_sw;
    }
    return s_left * acc;
}

inline StepFunction reconstruct_at_risk(const NuisanceSet& eta, int a, int zid) {
    const StratumNuisance* s = eta.stratum(a, zid);
    if (s == nullptr) throw EmptyStratum();
    std::vector<double> grid = union_grid({&s->S_X, &s->G});
    for (const StepFunction& q : s->Q.curves) {
        for (double t : q.times) grid.push_back(t);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    StepFunction r;
    r.initial_value = 0.0;
    for (double u : grid) {
        r.times.push_back(u);
        r.values.push_back(at_risk_at(*s, u));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Assembly of the full nuisance tuple from a training split.
// ---------------------------------------------------------------------------
struct NuisanceConfig {
    CensoringMode censoring_mode = CensoringMode::single;
    std::size_t w_bins = 1;
    double pi_clip = 0.01;
    int a0 = 1;
    bool degenerate_exposure = false;
    // deliberate misspecification switches for robustness experiments
    bool misspecify_q_one = false;
    std::optional<double> misspecify_pi_const;
    // use the debiased inverse-survival curve for 1/S_X(w-) instead of
    // inverting the product-limit curve (which is Jensen-inflated)
    bool inverse_debias = true;
    // 0: per-stratum product-limit event fit; > 0: pooled piecewise-
    // exponential Poisson sieve with this many event-quantile time bins
    // shared across covariate strata (fit separately per treatment arm)
    std::size_t pooled_hazard_bins = 0;
    // number of time blocks with their own covariate coefficients in the
    // pooled sieve
    std::size_t pooled_beta_blocks = 4;
};

inline NuisanceSet fit_nuisances(const Dataset& train, const NuisanceConfig& cfg) {
    if (train.records.empty()) throw EmptyDataset();
    const StratumIndex idx(train);
    NuisanceSet eta;
    eta.z_patterns = idx.z_patterns;
    eta.a0 = cfg.a0;
    eta.degenerate_exposure = cfg.degenerate_exposure;
    const std::size_t nz = eta.z_patterns.size();
    eta.H.assign(nz, 0.0);
    eta.pi.assign(nz, 0.0);

    std::vector<std::size_t> z_count(nz, 0), a0_count(nz, 0);
    for (std::size_t i = 0; i < train.records.size(); ++i) {
        const std::size_t zid = static_cast<std::size_t>(idx.z_id[i]);
        ++z_count[zid];
        if (train.records[i].a == cfg.a0) ++a0_count[zid];
    }
    for (std::size_t zid = 0; zid < nz; ++zid) {
        eta.H[zid] = static_cast<double>(z_count[zid]) / static_cast<double>(train.records.size());
        double p = cfg.degenerate_exposure
                       ? 1.0
                       : static_cast<double>(a0_count[zid]) / static_cast<double>(z_count[zid]);
        if (cfg.misspecify_pi_const) {
            p = *cfg.misspecify_pi_const;
            if (eta.flags.empty() || eta.flags.back() != "misspecified:pi") {
                eta.flags.push_back("misspecified:pi");
            }
        }
        if (p < cfg.pi_clip) {
            p = cfg.pi_clip;
            ++eta.pi_clip_events;
        }
        if (p > 1.0) p = 1.0;
        eta.pi[zid] = p;
    }
    if (eta.pi_clip_events > 0) eta.flags.push_back("pi_clipped");

    // Optional pooled sieve: fit one hazard model per treatment arm across
    // all covariate strata, then hand each stratum its implied curve pair.
    std::map<std::pair<int, int>, ProductLimitFit> pooled;
    std::map<std::pair<int, int>, ProductLimitFit> pooled_cens;
    const bool pool_censoring = cfg.pooled_hazard_bins > 0 &&
                                cfg.censoring_mode == CensoringMode::elapsed &&
                                !cfg.misspecify_q_one;
    if (cfg.pooled_hazard_bins > 0) {
        std::map<int, std::vector<PooledObservation>> by_arm;
        for (std::size_t i = 0; i < train.records.size(); ++i) {
            const ObservedRecord& r = train.records[i];
            by_arm[r.a].push_back({r.w, r.y, r.delta, r.z});
        }
        for (const auto& [arm, pobs] : by_arm) {
            const std::vector<ProductLimitFit> fits = fit_pooled_hazard(
                pobs, eta.z_patterns, cfg.pooled_hazard_bins, cfg.pooled_beta_blocks);
            for (std::size_t zid = 0; zid < nz; ++zid) {
                pooled[{arm, static_cast<int>(zid)}] = fits[zid];
            }
            if (pool_censoring) {
                // censoring acts on elapsed time since entry, with events and
                // censorings swapping roles; no delayed entry on that scale
                std::vector<PooledObservation> cobs;
                cobs.reserve(pobs.size());
                for (const PooledObservation& o : pobs) {
                    cobs.push_back({0.0, o.y - o.w, 1 - o.delta, o.z});
                }
                const std::vector<ProductLimitFit> cfits = fit_pooled_hazard(
                    cobs, eta.z_patterns, cfg.pooled_hazard_bins, cfg.pooled_beta_blocks);
                for (std::size_t zid = 0; zid < nz; ++zid) {
                    pooled_cens[{arm, static_cast<int>(zid)}] = cfits[zid];
                }
            }
        }
    }

    for (const auto& [key, members] : idx.members) {
        std::vector<Wyd> obs;
        std::vector<double> ws;
        obs.reserve(members.size());
        for (std::size_t i : members) {
            const ObservedRecord& r = train.records[i];
            obs.push_back({r.w, r.y, r.delta});
            ws.push_back(r.w);
        }
        StratumNuisance s;
        const ProductLimitFit fit =
            cfg.pooled_hazard_bins > 0 ? pooled.at(key) : product_limit(obs);
        s.S_X = fit.survival;
        s.S_X_inv = fit.inv_survival;
        s.has_S_X_inv = cfg.inverse_debias;
        s.no_events = fit.no_events;
        if (fit.no_events) {
            eta.flags.push_back("no_events:a=" + std::to_string(key.first) +
                                ",z=" + std::to_string(key.second));
        }
        s.G = fit_truncation_cdf(ws);
        if (cfg.misspecify_q_one) {
            s.Q.mode = CensoringMode::single;
            s.Q.curves.push_back(StepFunction::constant(1.0));
        } else if (pool_censoring) {
            s.Q.mode = CensoringMode::elapsed;
            s.Q.curves.push_back(pooled_cens.at(key).survival);
        } else {
            s.Q = fit_censoring_survival(obs, cfg.censoring_mode, cfg.w_bins);
        }
        s.tau_bar = 0.0;
        for (const Wyd& o : obs) s.tau_bar = std::max(s.tau_bar, o.y);
        // With the pooled sieve, the at-risk probability is reconstructed
        // from the smooth fitted curves; otherwise carry the raw risk sets.
        if (!pool_censoring) {
            s.w_sorted = ws;
            std::sort(s.w_sorted.begin(), s.w_sorted.end());
            s.y_sorted.reserve(obs.size());
            for (const Wyd& o : obs) s.y_sorted.push_back(o.y);
            std::sort(s.y_sorted.begin(), s.y_sorted.end());
        }
        eta.strata[key] = std::move(s);
    }
    if (cfg.misspecify_q_one) eta.flags.push_back("misspecified:Q");
    eta.check();
    return eta;
}

} // namespace ltsurv

#endif
