#include "nonholo/parallel.hpp"

#include <atomic>

namespace nonholo::par {

namespace {

std::atomic<Mode> g_mode{
#ifdef _OPENMP
    Mode::Parallel
#else
    Mode::Serial
#endif
};

} // namespace

Mode default_mode() { return g_mode.load(std::memory_order_relaxed); }
void set_default_mode(Mode m) { g_mode.store(m, std::memory_order_relaxed); }

} // namespace nonholo::par
