#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

// Data-parallel kernels used by the sheet integrator, the residual
// sup-norm evaluators and the quadrature routines. Every kernel has a
// serial path (the reference implementation the tests compare against)
// and an OpenMP path selected at runtime. Results are identical in both
// modes: max-reductions are exactly associative, and sum-reductions fill
// a per-index buffer that is always accumulated in serial order.

namespace nonholo::par {

enum class Mode { Serial, Parallel };

Mode default_mode();
void set_default_mode(Mode m);

template <class F>
void for_each_index(std::size_t n, F&& f, Mode mode) {
#ifdef _OPENMP
    if (mode == Mode::Parallel) {
        #pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(n); ++i)
            f(static_cast<std::size_t>(i));
        return;
    }
#else
    (void)mode;
#endif
    for (std::size_t i = 0; i < n; ++i) f(i);
}

template <class F>
void for_each_index(std::size_t n, F&& f) {
    for_each_index(n, std::forward<F>(f), default_mode());
}

template <class F>
double max_over(std::size_t n, F&& f, Mode mode) {
    double m = 0.0;
#ifdef _OPENMP
    if (mode == Mode::Parallel) {
        #pragma omp parallel for schedule(static) reduction(max : m)
        for (long long i = 0; i < static_cast<long long>(n); ++i)
            m = std::max(m, f(static_cast<std::size_t>(i)));
        return m;
    }
#else
    (void)mode;
#endif
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, f(i));
    return m;
}

template <class F>
double max_over(std::size_t n, F&& f) {
    return max_over(n, std::forward<F>(f), default_mode());
}

// Deterministic sum: values land in a buffer (possibly filled in parallel),
// then are accumulated left to right.
template <class F>
double sum_over(std::size_t n, F&& f, Mode mode) {
    std::vector<double> buf(n);
    for_each_index(n, [&](std::size_t i) { buf[i] = f(i); }, mode);
    double s = 0.0;
    for (double v : buf) s += v;
    return s;
}

template <class F>
double sum_over(std::size_t n, F&& f) {
    return sum_over(n, std::forward<F>(f), default_mode());
}

} // namespace nonholo::par
