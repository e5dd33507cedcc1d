#ifndef LTSURV_STEP_FUNCTION_HPP
#define LTSURV_STEP_FUNCTION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ltsurv {

// Right-continuous piecewise-constant function with left limits. Carrier for
// survival curves, CDFs and cumulative hazards. Immutable in practice: build
// once, share freely across threads.
struct StepFunction {
    double initial_value = 1.0;
    std::vector<double> times;  // strictly increasing jump locations
    std::vector<double> values; // value on [times[i], times[i+1])

    StepFunction() = default;
    StepFunction(double init, std::vector<double> t, std::vector<double> v)
        : initial_value(init), times(std::move(t)), values(std::move(v)) {
        validate();
    }

    static StepFunction constant(double c) { return StepFunction(c, {}, {}); }

    void validate() const {
        if (times.size() != values.size()) {
            throw std::invalid_argument("StepFunction: times/values size mismatch");
        }
        for (std::size_t i = 1; i < times.size(); ++i) {
            if (!(times[i] > times[i - 1])) {
                throw std::invalid_argument("StepFunction: jump times must be strictly increasing");
            }
        }
    }

    // Index of last jump time <= t, or -1 when t precedes every jump.
    std::ptrdiff_t index_at(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        return static_cast<std::ptrdiff_t>(it - times.begin()) - 1;
    }

    double operator()(double t) const {
        const std::ptrdiff_t i = index_at(t);
        return i < 0 ? initial_value : values[static_cast<std::size_t>(i)];
    }

    double left_limit(double t) const {
        auto it = std::lower_bound(times.begin(), times.end(), t);
        const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(it - times.begin()) - 1;
        return i < 0 ? initial_value : values[static_cast<std::size_t>(i)];
    }

    double jump_at(double t) const { return (*this)(t)-left_limit(t); }

    bool is_survival(double tol = 1e-12) const {
        if (std::fabs(initial_value - 1.0) > tol) return false;
        double prev = initial_value;
        for (double v : values) {
            if (v > prev + tol || v < -tol) return false;
            prev = v;
        }
        return true;
    }

    bool is_cdf(double tol = 1e-12) const {
        if (initial_value < -tol || initial_value > 1.0 + tol) return false;
        double prev = initial_value;
        for (double v : values) {
            if (v < prev - tol || v > 1.0 + tol) return false;
            prev = v;
        }
        return true;
    }

    double last_value() const { return values.empty() ? initial_value : values.back(); }
    double last_time() const { return times.empty() ? 0.0 : times.back(); }
};

// Atoms of the measure dF induced by a (monotone) step function.
inline std::vector<std::pair<double, double>> step_atoms(const StepFunction& f, double tol = 0.0) {
    std::vector<std::pair<double, double>> out;
    double prev = f.initial_value;
    for (std::size_t i = 0; i < f.times.size(); ++i) {
        const double d = f.values[i] - prev;
        if (std::fabs(d) > tol) out.emplace_back(f.times[i], d);
        prev = f.values[i];
    }
    return out;
}

// Sorted union of the jump grids of several step functions.
inline std::vector<double> union_grid(std::initializer_list<const StepFunction*> fs) {
    std::vector<double> g;
    for (const StepFunction* f : fs) g.insert(g.end(), f->times.begin(), f->times.end());
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
}

} // namespace ltsurv

#endif
