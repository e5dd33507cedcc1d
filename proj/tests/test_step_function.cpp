#include <doctest.h>

#include <stdexcept>

#include <ltsurv/step_function.hpp>

using namespace ltsurv;

TEST_CASE("right continuity, left limits and constant extension") {
    const StepFunction f(1.0, {2.0}, {0.5});
    CHECK(f(2.0) == doctest::Approx(0.5));
    CHECK(f.left_limit(2.0) == doctest::Approx(1.0));
    CHECK(f(1.999) == doctest::Approx(1.0));
    CHECK(f(100.0) == doctest::Approx(0.5)); // constant beyond the last jump
    CHECK(f.jump_at(2.0) == doctest::Approx(-0.5));
    CHECK(f.jump_at(1.0) == doctest::Approx(0.0));
}

TEST_CASE("piecewise values on a grid") {
    const StepFunction f(0.0, {1.0, 2.0, 5.0}, {0.25, 0.75, 1.0});
    CHECK(f(0.5) == doctest::Approx(0.0));
    CHECK(f(1.0) == doctest::Approx(0.25));
    CHECK(f(1.5) == doctest::Approx(0.25));
    CHECK(f(2.0) == doctest::Approx(0.75));
    CHECK(f(4.999) == doctest::Approx(0.75));
    CHECK(f(5.0) == doctest::Approx(1.0));
    CHECK(f.left_limit(5.0) == doctest::Approx(0.75));
}

TEST_CASE("validation rejects unsorted jump grids") {
    CHECK_THROWS_AS(StepFunction(1.0, {2.0, 1.0}, {0.5, 0.2}), std::invalid_argument);
    CHECK_THROWS_AS(StepFunction(1.0, {1.0, 1.0}, {0.5, 0.2}), std::invalid_argument);
    CHECK_THROWS_AS(StepFunction(1.0, {1.0}, {0.5, 0.2}), std::invalid_argument);
}

TEST_CASE("survival and cdf classification") {
    CHECK(StepFunction(1.0, {1.0, 2.0}, {0.5, 0.0}).is_survival());
    CHECK_FALSE(StepFunction(1.0, {1.0, 2.0}, {0.5, 0.7}).is_survival());
    CHECK_FALSE(StepFunction(0.9, {1.0}, {0.5}).is_survival());
    CHECK(StepFunction(0.0, {1.0, 2.0}, {0.4, 1.0}).is_cdf());
    CHECK_FALSE(StepFunction(0.0, {1.0, 2.0}, {0.4, 0.3}).is_cdf());
    CHECK(StepFunction::constant(1.0).is_survival());
}

TEST_CASE("step atoms recover the jump measure") {
    const StepFunction f(0.0, {1.0, 2.0, 5.0}, {0.25, 0.75, 1.0});
    const auto atoms = step_atoms(f);
    REQUIRE(atoms.size() == 3);
    CHECK(atoms[0].first == doctest::Approx(1.0));
    CHECK(atoms[0].second == doctest::Approx(0.25));
    CHECK(atoms[1].second == doctest::Approx(0.5));
    CHECK(atoms[2].second == doctest::Approx(0.25));
    // zero jumps are dropped
    const StepFunction g(1.0, {1.0, 2.0}, {1.0, 0.5});
    CHECK(step_atoms(g).size() == 1);
}

TEST_CASE("union grid merges and dedupes") {
    const StepFunction a(1.0, {1.0, 3.0}, {0.5, 0.2});
    const StepFunction b(1.0, {2.0, 3.0}, {0.9, 0.1});
    const auto g = union_grid({&a, &b});
    REQUIRE(g.size() == 3);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 2.0);
    CHECK(g[2] == 3.0);
}
