#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include <ltsurv/simulation.hpp>

using namespace ltsurv;

namespace {

Scenario small_scenario() {
    Scenario sc;
    sc.truncation = TruncationLevel::none;
    sc.censoring = CensoringLevel::low_25;
    sc.censoring_shape = 10.0; // fixed: no Monte Carlo calibration in unit tests
    sc.n = 150;
    sc.reps = 3;
    sc.seed = 5;
    sc.eval_times = {2.0, 4.0};
    sc.est_cfg.K = 2;
    return sc;
}

} // namespace

TEST_CASE("scenario naming") {
    Scenario sc;
    CHECK(sc.name() == "trunc_low_25_cens_low_25");
    sc.truncation = TruncationLevel::high_50;
    sc.censoring = CensoringLevel::high_50;
    CHECK(sc.name() == "trunc_high_50_cens_high_50");
    sc.variant = DgpVariant::independent_coarsening;
    CHECK(sc.name() == "trunc_high_50_cens_high_50_indep");
    sc.variant = DgpVariant::robustness_corruption;
    CHECK(sc.name() == "trunc_high_50_cens_high_50_robust");
    sc.truncation = TruncationLevel::none;
    CHECK(sc.name() == "trunc_none_cens_high_50_robust");
}

TEST_CASE("population survival is the eight-stratum mixture") {
    Scenario sc;
    CHECK(population_survival(sc, 0.0) == doctest::Approx(1.0));
    // direct mixture oracle
    for (double t : {1.0, 4.0, 8.0, 15.0}) {
        double acc = 0.0;
        for (double z1 : {-1.0, 1.0}) {
            for (double z2 : {-1.0, 1.0}) {
                for (double z3 : {-1.0, 1.0}) {
                    acc += gamma_survival(6.0, std::exp((z1 + z2 + z3) / 10.0), t);
                }
            }
        }
        CHECK(population_survival(sc, t) == doctest::Approx(acc / 8.0).epsilon(1e-12));
    }
    // monotone decreasing
    double prev = 1.0;
    for (double t = 0.5; t < 25.0; t += 0.5) {
        const double s = population_survival(sc, t);
        CHECK(s <= prev + 1e-12);
        prev = s;
    }
    // robustness variant shifts the counterfactual distribution downward at a0 = 1
    Scenario rb;
    rb.variant = DgpVariant::robustness_corruption;
    rb.a0 = 1;
    CHECK(population_survival(rb, 6.0) < population_survival(sc, 6.0));
    rb.a0 = 0;
    CHECK(population_survival(rb, 6.0) == doctest::Approx(population_survival(sc, 6.0)));
}

TEST_CASE("population quintiles invert the survival function") {
    Scenario sc;
    const std::vector<double> q = population_quintiles(sc);
    REQUIRE(q.size() == 4);
    const double targets[4] = {0.8, 0.6, 0.4, 0.2};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(population_survival(sc, q[i]) == doctest::Approx(targets[i]).epsilon(1e-8));
        if (i > 0) CHECK(q[i] > q[i - 1]);
    }
}

TEST_CASE("scenario sampling is deterministic and well-formed") {
    const Scenario sc = small_scenario();
    const Dataset a = sample_scenario(sc, 0);
    const Dataset b = sample_scenario(sc, 0);
    REQUIRE(a.records.size() == sc.n);
    REQUIRE(b.records.size() == sc.n);
    for (std::size_t i = 0; i < sc.n; ++i) {
        CHECK(a.records[i].y == b.records[i].y);
        CHECK(a.records[i].w == b.records[i].w);
        CHECK(a.records[i].delta == b.records[i].delta);
        CHECK(a.records[i].z == b.records[i].z);
        CHECK(a.records[i].w <= a.records[i].y);
        CHECK(a.records[i].w == 0.0); // truncation: none
        CHECK((a.records[i].delta == 0 || a.records[i].delta == 1));
        CHECK(a.records[i].a == 1);
    }
    const Dataset c = sample_scenario(sc, 1);
    bool differs = false;
    for (std::size_t i = 0; i < sc.n; ++i) differs = differs || c.records[i].y != a.records[i].y;
    CHECK(differs);
    CHECK_NOTHROW(a.validate());
}

TEST_CASE("truncation levels produce ordered rejection rates") {
    Rng rng = Rng::substream(77, {0x7121C});
    auto reject_frac = [&](TruncationLevel lvl) {
        Scenario sc;
        sc.truncation = lvl;
        std::size_t rejected = 0;
        const std::size_t draws = 20000;
        for (std::size_t i = 0; i < draws; ++i) {
            const detail::IdealDraw u = detail::draw_unit(sc, 10.0, rng);
            if (u.t < u.w) ++rejected;
        }
        return static_cast<double>(rejected) / static_cast<double>(draws);
    };
    const double none = reject_frac(TruncationLevel::none);
    const double low = reject_frac(TruncationLevel::low_25);
    const double high = reject_frac(TruncationLevel::high_50);
    CHECK(none == doctest::Approx(0.0));
    CHECK(low == doctest::Approx(0.25).epsilon(0.2));
    CHECK(high == doctest::Approx(0.50).epsilon(0.2));
    CHECK(low < high);
}

TEST_CASE("robustness variant draws a nondegenerate exposure") {
    Scenario sc;
    sc.variant = DgpVariant::robustness_corruption;
    Rng rng = Rng::substream(78, {0xAB});
    std::size_t a1 = 0, n1 = 0, a1_zpos = 0, n_zpos = 0;
    for (int i = 0; i < 20000; ++i) {
        const detail::IdealDraw u = detail::draw_unit(sc, 10.0, rng);
        ++n1;
        a1 += static_cast<std::size_t>(u.a);
        if (u.z[0] > 0.0) {
            ++n_zpos;
            a1_zpos += static_cast<std::size_t>(u.a);
        }
    }
    const double p_zpos = static_cast<double>(a1_zpos) / static_cast<double>(n_zpos);
    CHECK(p_zpos == doctest::Approx(1.0 / (1.0 + std::exp(-0.8))).epsilon(0.03));
    const double p_all = static_cast<double>(a1) / static_cast<double>(n1);
    CHECK(p_all > 0.4);
    CHECK(p_all < 0.8);
}

TEST_CASE("marginal product-limit baseline collapses on complete data") {
    Dataset d;
    d.covariate_alphabet = {{1.0}};
    Rng rng = Rng::substream(6, {0x4B});
    for (int i = 0; i < 100; ++i) {
        d.records.push_back({rng.gamma(6.0, 1.0), 1, 0.0, 1, {1.0}});
    }
    const std::vector<double> times = {3.0, 5.0, 7.0};
    const KmEstimate km = km_baseline(d, times);
    for (std::size_t t = 0; t < times.size(); ++t) {
        double frac = 0.0;
        for (const ObservedRecord& r : d.records) {
            if (r.y > times[t]) frac += 1.0;
        }
        frac /= 100.0;
        CHECK(km.est[t] == doctest::Approx(frac).epsilon(1e-12));
        CHECK(km.ci_lo[t] <= km.est[t]);
        CHECK(km.ci_hi[t] >= km.est[t]);
        if (km.est[t] > 0.0 && km.est[t] < 1.0) CHECK(km.se[t] > 0.0);
    }
}

TEST_CASE("monte carlo metrics table") {
    const Scenario sc = small_scenario();
    const MetricsTable table = run_monte_carlo(sc);
    REQUIRE(table.rows.size() == 3 * 2); // estimators x eval times
    CHECK(table.reps == 3);
    CHECK(table.failures == 0);
    for (const MetricsRow& r : table.rows) {
        CHECK(r.scenario == "trunc_none_cens_low_25");
        CHECK(r.n == sc.n);
        CHECK(r.coverage >= 0.0);
        CHECK(r.coverage <= 1.0);
        CHECK_FALSE(r.variance_na);
        CHECK(r.scaled_var > 0.0);
        CHECK(std::isfinite(r.scaled_bias));
    }
    const std::string csv = table.to_csv();
    CHECK(csv.rfind("scenario,estimator,time_index,n,scaled_bias,scaled_bias_mc_se,scaled_var,"
                    "coverage,coverage_mc_se\n",
                    0) == 0);
    // byte-identical rerun
    const MetricsTable again = run_monte_carlo(sc);
    CHECK(again.to_csv() == csv);
}

TEST_CASE("single replicate reports NA variance") {
    Scenario sc = small_scenario();
    sc.reps = 1;
    sc.estimators = {"onestep"};
    const MetricsTable table = run_monte_carlo(sc);
    REQUIRE(table.rows.size() == 2);
    for (const MetricsRow& r : table.rows) CHECK(r.variance_na);
    bool flagged = false;
    for (const std::string& f : table.flags) {
        if (f == "variance_na:single_replicate") flagged = true;
    }
    CHECK(flagged);
    const std::string csv = table.to_csv();
    CHECK(csv.find(",NA,") != std::string::npos);
    Scenario bad = small_scenario();
    bad.estimators = {"ghost"};
    CHECK_THROWS_AS(run_monte_carlo(bad), std::invalid_argument);
}
