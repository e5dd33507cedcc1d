#ifndef LTSURV_ESTIMATORS_HPP
#define LTSURV_ESTIMATORS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "influence.hpp"
#include "kernel.hpp"
#include "math_utils.hpp"
#include "nuisance.hpp"

namespace ltsurv {

struct EstimationFailure : std::runtime_error {
    explicit EstimationFailure(const std::string& why)
        : std::runtime_error("estimation failure: " + why) {}
};

struct EstimatorConfig {
    int K = 5;
    std::uint64_t seed = 1;
    double alpha = 0.05;
    NuisanceConfig nuisance;
    // When set, this nuisance set is used verbatim for every fold instead of
    // fitting on the training split (truth injection / deliberately
    // misspecified plugins for robustness experiments).
    std::shared_ptr<const NuisanceSet> fixed_nuisance;
};

// Plug-in estimator from a fitted nuisance set.
inline double plug_in(const NuisanceSet& eta, const Kernel& k) {
    const EvalModel m = EvalModel::from_nuisances(eta);
    const KernelEval ke = build_kernel_eval(m, k);
    return compute_psi_plugin(m, ke);
}

struct FoldEstimate {
    int fold = 0;
    std::size_t n_k = 0;
    double psi_plugin = 0.0;
    double psi_onestep = 0.0;
    double psi_ee = 0.0;
    double gamma_k = 0.0;
    double ee_residual = 0.0;
};

struct EstimateReport {
    double psi_plugin = 0.0; // full-sample plug-in
    double psi_onestep = 0.0;
    double psi_ee = 0.0;
    double se_simple_onestep = 0.0, se_crossfit_onestep = 0.0;
    double se_simple_ee = 0.0, se_crossfit_ee = 0.0;
    double ci_lo_onestep = 0.0, ci_hi_onestep = 0.0;
    double ci_lo_ee = 0.0, ci_hi_ee = 0.0;
    double alpha = 0.05;
    int K = 5;
    std::size_t n = 0;
    std::vector<FoldEstimate> folds;
    std::vector<std::string> flags;
    bool support_flag = false;

    // per-record influence pieces (data order), affine in the reference value
    std::vector<double> phi1_i, b_i, mu_i;
    std::vector<int> fold_i;
    std::vector<double> gamma_k; // per fold

    double phi_value(std::size_t i, double psi) const {
        return phi1_i[i] + (mu_i[i] - psi) * b_i[i] / gamma_k[static_cast<std::size_t>(fold_i[i])];
    }
    std::vector<double> influence_values(double psi) const {
        std::vector<double> out(phi1_i.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = phi_value(i, psi);
        return out;
    }
};

namespace detail {

struct VarianceSummary {
    double simple = 0.0;
    double crossfit = 0.0;
};

inline VarianceSummary influence_variance(const EstimateReport& r, double psi) {
    const std::vector<double> phi = r.influence_values(psi);
    VarianceSummary v;
    const double n = static_cast<double>(phi.size());
    double mean = 0.0;
    for (double p : phi) mean += p;
    mean /= n;
    for (double p : phi) v.simple += (p - mean) * (p - mean);
    v.simple /= n;
    // fold-wise centering
    const std::size_t K = r.gamma_k.size();
    std::vector<double> fsum(K, 0.0), fcnt(K, 0.0);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        fsum[static_cast<std::size_t>(r.fold_i[i])] += phi[i];
        fcnt[static_cast<std::size_t>(r.fold_i[i])] += 1.0;
    }
    std::vector<double> fss(K, 0.0);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const auto k = static_cast<std::size_t>(r.fold_i[i]);
        const double d = phi[i] - fsum[k] / fcnt[k];
        fss[k] += d * d;
    }
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < K; ++k) {
        if (fcnt[k] > 0.0) {
            acc += fss[k] / fcnt[k];
            ++used;
        }
    }
    v.crossfit = used > 0 ? acc / static_cast<double>(used) : 0.0;
    return v;
}

} // namespace detail

// Cross-fitted one-step and estimating-equation estimators with Wald CIs.
template <typename KernelEvalFactory>
inline EstimateReport estimate_core(const Dataset& data, const Kernel& k,
                                    const EstimatorConfig& cfg, KernelEvalFactory&& make_ke) {
    const std::size_t n = data.records.size();
    if (n == 0) throw EmptyDataset();
    EstimateReport rep;
    rep.alpha = cfg.alpha;
    rep.K = cfg.K;
    rep.n = n;
    rep.phi1_i.assign(n, 0.0);
    rep.b_i.assign(n, 0.0);
    rep.mu_i.assign(n, 0.0);
    rep.fold_i.assign(n, 0);
    rep.gamma_k.assign(static_cast<std::size_t>(cfg.K), 0.0);

    // full-sample plug-in
    try {
        const NuisanceSet eta_full =
            cfg.fixed_nuisance ? *cfg.fixed_nuisance : fit_nuisances(data, cfg.nuisance);
        for (const std::string& f : eta_full.flags) rep.flags.push_back(f);
        const EvalModel m_full = EvalModel::from_nuisances(eta_full);
        rep.psi_plugin = compute_psi_plugin(m_full, make_ke(m_full));
    } catch (const std::exception& e) {
        throw EstimationFailure(std::string("full-sample plug-in: ") + e.what());
    }

    const FoldPlan plan = make_folds(n, cfg.K, cfg.seed);
    double onestep_acc = 0.0, ee_acc = 0.0;
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
                rep.flags.push_back("fold" + std::to_string(kk) + ":" + f);
            }
            const EvalModel m = EvalModel::from_nuisances(eta);
            const KernelEval ke = make_ke(m);
            const double psi_k = compute_psi_plugin(m, ke);
            std::vector<ObservedRecord> evals;
            for (std::size_t i : eval_idx) evals.push_back(data.records[i]);
            const EifComponents eif = compute_eif(m, ke, psi_k, evals);
            if (eif.support_flag || m.support_flag) rep.support_flag = true;

            const double nk = static_cast<double>(eval_idx.size());
            double phibar = 0.0, num_ee = 0.0, den_ee = 0.0;
            for (std::size_t j = 0; j < eval_idx.size(); ++j) {
                const std::size_t i = eval_idx[j];
                rep.phi1_i[i] = eif.phi1[j];
                rep.b_i[i] = eif.b[j];
                rep.mu_i[i] = eif.mu_i[j];
                rep.fold_i[i] = kk;
                phibar += eif.phi[j];
                num_ee += m.gamma_scalar * eif.phi1[j] + eif.mu_i[j] * eif.b[j];
                den_ee += eif.b[j];
            }
            phibar /= nk;
            rep.gamma_k[static_cast<std::size_t>(kk)] = m.gamma_scalar;

            FoldEstimate fe;
            fe.fold = kk;
            fe.n_k = eval_idx.size();
            fe.gamma_k = m.gamma_scalar;
            fe.psi_plugin = psi_k;
            fe.psi_onestep = psi_k + phibar;
            if (den_ee == 0.0) throw EstimationFailure("estimating-equation denominator is zero");
            fe.psi_ee = num_ee / den_ee;
            // residual of the fold estimating equation at the solution
            double resid = 0.0;
            for (std::size_t j = 0; j < eval_idx.size(); ++j) {
                const std::size_t i = eval_idx[j];
                resid += rep.phi1_i[i] + (rep.mu_i[i] - fe.psi_ee) * rep.b_i[i] / m.gamma_scalar;
            }
            fe.ee_residual = resid / nk;
            rep.folds.push_back(fe);
            onestep_acc += nk / static_cast<double>(n) * fe.psi_onestep;
            ee_acc += nk / static_cast<double>(n) * fe.psi_ee;
        } catch (const EstimationFailure&) {
            throw;
        } catch (const std::exception& e) {
            throw EstimationFailure("fold " + std::to_string(kk) + ": " + e.what());
        }
    }
    rep.psi_onestep = onestep_acc;
    rep.psi_ee = ee_acc;

    const auto v1 = detail::influence_variance(rep, rep.psi_onestep);
    const auto v2 = detail::influence_variance(rep, rep.psi_ee);
    const double q = normal_quantile(1.0 - cfg.alpha / 2.0);
    const double rootn = std::sqrt(static_cast<double>(n));
    // sandwich slope of the estimating equation in psi: mean(b_i / gamma_k)
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        slope += rep.b_i[i] / rep.gamma_k[static_cast<std::size_t>(rep.fold_i[i])];
    }
    slope /= static_cast<double>(n);
    if (!(slope > 0.0)) {
        slope = 1.0;
        rep.flags.push_back("ee_slope_nonpositive");
    }
    rep.se_simple_onestep = std::sqrt(v1.simple);
    rep.se_crossfit_onestep = std::sqrt(v1.crossfit);
    rep.se_simple_ee = std::sqrt(v2.simple) / slope;
    rep.se_crossfit_ee = std::sqrt(v2.crossfit) / slope;
    rep.ci_lo_onestep = rep.psi_onestep - q * rep.se_crossfit_onestep / rootn;
    rep.ci_hi_onestep = rep.psi_onestep + q * rep.se_crossfit_onestep / rootn;
    rep.ci_lo_ee = rep.psi_ee - q * rep.se_crossfit_ee / rootn;
    rep.ci_hi_ee = rep.psi_ee + q * rep.se_crossfit_ee / rootn;
    return rep;
}

inline EstimateReport estimate(const Dataset& data, const Kernel& k, const EstimatorConfig& cfg) {
    return estimate_core(data, k, cfg,
                         [&k](const EvalModel& m) { return build_kernel_eval(m, k); });
}

// ---------------------------------------------------------------------------
// Uniform confidence band over a finite family of estimands via the Gaussian
// multiplier bootstrap of the sup of the estimated influence process.
// ---------------------------------------------------------------------------
struct BandConfig {
    double alpha = 0.05;
    int draws = 20000;
    std::uint64_t seed = 1;
    bool studentized = false;
};

struct BandReport {
    std::vector<double> psi, lo, hi, se;
    double crit = 0.0;      // bootstrap quantile of the sup statistic
    double halfwidth = 0.0; // fixed-width bands: crit / sqrt(n)
    double alpha = 0.05;
    int draws = 0;
    bool studentized = false;
    bool singular_covariance = false;
};

// phi[s][i]: influence value of record i for estimand s (already at psi[s]).
inline BandReport uniform_band(const std::vector<std::vector<double>>& phi,
                               const std::vector<double>& psi, const BandConfig& cfg) {
    const std::size_t S = phi.size();
    if (S == 0 || psi.size() != S) throw std::invalid_argument("uniform_band: bad inputs");
    const std::size_t n = phi[0].size();
    BandReport rep;
    rep.alpha = cfg.alpha;
    rep.draws = cfg.draws;
    rep.studentized = cfg.studentized;
    rep.psi = psi;

    std::vector<std::vector<double>> centered(S, std::vector<double>(n));
    rep.se.assign(S, 0.0);
    std::vector<double> scale(S, 1.0);
    for (std::size_t s = 0; s < S; ++s) {
        if (phi[s].size() != n) throw std::invalid_argument("uniform_band: ragged influence matrix");
        double mean = 0.0;
        for (double p : phi[s]) mean += p;
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            centered[s][i] = phi[s][i] - mean;
            ss += centered[s][i] * centered[s][i];
        }
        const double var = ss / static_cast<double>(n);
        rep.se[s] = std::sqrt(var);
        if (cfg.studentized) {
            if (rep.se[s] <= 1e-12) {
                rep.singular_covariance = true;
            } else {
                scale[s] = rep.se[s];
            }
        }
        if (rep.se[s] <= 1e-12) rep.singular_covariance = true;
    }

    std::vector<double> sups(static_cast<std::size_t>(cfg.draws));
    const double rootn = std::sqrt(static_cast<double>(n));
    std::vector<double> g(n);
    for (int d = 0; d < cfg.draws; ++d) {
        Rng rng = Rng::substream(cfg.seed, {0xBA4D, static_cast<std::uint64_t>(d)});
        for (std::size_t i = 0; i < n; ++i) g[i] = rng.normal();
        double sup = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += g[i] * centered[s][i];
            sup = std::max(sup, std::fabs(acc) / (rootn * scale[s]));
        }
        sups[static_cast<std::size_t>(d)] = sup;
    }
    std::sort(sups.begin(), sups.end());
    const auto idx = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(cfg.draws) - 1.0,
                         std::ceil((1.0 - cfg.alpha) * static_cast<double>(cfg.draws)) - 1.0));
    rep.crit = sups[idx];
    rep.halfwidth = rep.crit / rootn;
    rep.lo.resize(S);
    rep.hi.resize(S);
    for (std::size_t s = 0; s < S; ++s) {
        const double hw = cfg.studentized ? rep.crit * scale[s] / rootn : rep.halfwidth;
        rep.lo[s] = psi[s] - hw;
        rep.hi[s] = psi[s] + hw;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Pool-adjacent-violators projection onto non-increasing sequences
// (used to monotonize survival-curve estimates across a time grid).
// ---------------------------------------------------------------------------
inline std::vector<double> isotonic_project(const std::vector<double>& y,
                                            const std::vector<double>& w = {}) {
    const std::size_t n = y.size();
    std::vector<double> wt = w.empty() ? std::vector<double>(n, 1.0) : w;
    if (wt.size() != n) throw std::invalid_argument("isotonic_project: weight size mismatch");
    // PAVA for a non-increasing fit: negate, fit non-decreasing, negate back.
    std::vector<double> level, weight;
    std::vector<std::size_t> count;
    for (std::size_t i = 0; i < n; ++i) {
        level.push_back(-y[i]);
        weight.push_back(wt[i]);
        count.push_back(1);
        while (level.size() > 1 && level[level.size() - 2] > level.back()) {
            const double wsum = weight[weight.size() - 2] + weight.back();
            const double merged =
                (level[level.size() - 2] * weight[weight.size() - 2] + level.back() * weight.back()) /
                wsum;
            level.pop_back();
            weight.pop_back();
            const std::size_t c = count.back();
            count.pop_back();
            level.back() = merged;
            weight.back() = wsum;
            count.back() += c;
        }
    }
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t b = 0; b < level.size(); ++b) {
        for (std::size_t c = 0; c < count[b]; ++c) out.push_back(-level[b]);
    }
    return out;
}

} // namespace ltsurv

#endif
