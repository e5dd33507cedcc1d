#include <doctest.h>

#include <cmath>
#include <vector>

#include <ltsurv/discrete_law.hpp>
#include <ltsurv/math_utils.hpp>

using namespace ltsurv;

namespace {

// A nondegenerate two-stratum nuisance set used as a reference model.
NuisanceSet toy_eta() {
    NuisanceSet eta;
    eta.z_patterns = {{-1.0}, {1.0}};
    eta.H = {0.4, 0.6};
    eta.pi = {1.0, 1.0};
    eta.a0 = 1;
    eta.degenerate_exposure = true;
    StratumNuisance s0;
    s0.S_X = StepFunction(1.0, {1.0, 2.0, 4.0}, {0.7, 0.3, 0.0});
    s0.G = StepFunction(0.0, {0.0, 1.5}, {0.5, 1.0});
    s0.Q.mode = CensoringMode::single;
    s0.Q.curves.push_back(StepFunction(1.0, {2.5}, {0.5}));
    s0.tau_bar = 4.0;
    StratumNuisance s1;
    s1.S_X = StepFunction(1.0, {1.0, 3.0, 4.0}, {0.8, 0.5, 0.0});
    s1.G = StepFunction(0.0, {0.0, 0.5}, {0.6, 1.0});
    s1.Q.mode = CensoringMode::single;
    s1.Q.curves.push_back(StepFunction(1.0, {3.5}, {0.4}));
    s1.tau_bar = 4.0;
    eta.strata[{1, 0}] = s0;
    eta.strata[{1, 1}] = s1;
    eta.check();
    return eta;
}

} // namespace

TEST_CASE("induced law is a probability measure") {
    const DiscreteLaw law = law_from_nuisances(toy_eta());
    CHECK(law.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    for (const DiscreteAtom& o : law.atoms) {
        CHECK(o.p > 0.0);
        CHECK(o.w <= o.y + 1e-12);
    }
}

TEST_CASE("nuisances round-trip through the law") {
    const NuisanceSet eta = toy_eta();
    const DiscreteLaw law = law_from_nuisances(eta);
    const NuisanceSet back = nuisances_from_law(law, 1, true);
    REQUIRE(back.z_patterns == eta.z_patterns);
    for (std::size_t z = 0; z < 2; ++z) {
        CHECK(back.H[z] == doctest::Approx(eta.H[z]).epsilon(1e-12));
        const StratumNuisance& a = eta.strata.at({1, static_cast<int>(z)});
        const StratumNuisance* b = back.stratum(1, static_cast<int>(z));
        REQUIRE(b != nullptr);
        for (double t : {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0}) {
            CHECK(b->S_X(t) == doctest::Approx(a.S_X(t)).epsilon(1e-10));
            CHECK(b->G(t) == doctest::Approx(a.G(t)).epsilon(1e-10));
        }
        // censoring survival recovered per entry atom on [w, tau)
        for (const auto& [w, gm] : step_atoms(a.G)) {
            for (double t : {1.0, 2.0, 3.0, 3.75}) {
                if (t < w || a.S_X(t) <= 0.0) continue;
                CHECK(b->Q.eval(t, w) == doctest::Approx(a.Q.eval(t, w)).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("mixture path endpoints and mass") {
    const DiscreteLaw p0 = law_from_nuisances(toy_eta());
    NuisanceSet alt = toy_eta();
    alt.strata.at({1, 0}).S_X = StepFunction(1.0, {1.0, 2.0, 4.0}, {0.6, 0.25, 0.0});
    const DiscreteLaw p1 = law_from_nuisances(alt);

    const DiscreteLaw m0 = mix_laws(p0, p1, 0.0);
    CHECK(m0.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    const DiscreteLaw mh = mix_laws(p0, p1, 0.3);
    CHECK(mh.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    // eps = 0 reproduces p0 atom-by-atom on p0's support
    double diff = 0.0;
    for (const DiscreteAtom& o : p0.atoms) {
        for (const DiscreteAtom& q : m0.atoms) {
            if (q.y == o.y && q.w == o.w && q.delta == o.delta && q.z_id == o.z_id && q.a == o.a) {
                diff = std::max(diff, std::fabs(q.p - o.p));
            }
        }
    }
    CHECK(diff < 1e-14);
}

TEST_CASE("score perturbation preserves mass for mean-zero directions") {
    DiscreteLaw p = law_from_nuisances(toy_eta());
    Rng rng = Rng::substream(3, {0xD1});
    std::vector<double> h(p.atoms.size());
    double ip = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] = rng.uniform() - 0.5;
        ip += h[i] * p.atoms[i].p;
    }
    for (double& v : h) v -= ip; // center against P
    const DiscreteLaw q = perturb_law(p, h, 0.01);
    CHECK(q.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(perturb_law(p, std::vector<double>(p.atoms.size(), -1000.0), 0.01),
                    std::invalid_argument);
    CHECK_THROWS_AS(perturb_law(p, {1.0}, 0.01), std::invalid_argument);
}
