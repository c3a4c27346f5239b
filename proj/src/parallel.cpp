#include "csaseg/parallel.hpp"

#include <atomic>
#include <cstdlib>

namespace csaseg {

static std::atomic<unsigned> g_thread_cap{0};

void set_thread_cap(unsigned n) { g_thread_cap.store(n); }

unsigned effective_threads() {
    unsigned cap = g_thread_cap.load();
    if (cap == 0) {
        static const unsigned env_cap = [] {
            const char* v = std::getenv("CSA_THREADS");
            if (!v) return 0u;
            const long parsed = std::strtol(v, nullptr, 10);
            return parsed > 0 ? unsigned(parsed) : 0u;
        }();
        cap = env_cap;
    }
    if (cap == 0) cap = std::thread::hardware_concurrency();
    return cap == 0 ? 1u : cap;
}

} // namespace csaseg
