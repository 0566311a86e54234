#include "veloreg/counters.hpp"

#include <atomic>

namespace veloreg::counters {

namespace {
std::atomic<long long> g_ffts{0};
std::atomic<long long> g_interps{0};
}  // namespace

void reset() {
    g_ffts.store(0, std::memory_order_relaxed);
    g_interps.store(0, std::memory_order_relaxed);
}

void addFft(long long k) { g_ffts.fetch_add(k, std::memory_order_relaxed); }
void addInterp(long long k) { g_interps.fetch_add(k, std::memory_order_relaxed); }

Snapshot snapshot() {
    return {g_ffts.load(std::memory_order_relaxed), g_interps.load(std::memory_order_relaxed)};
}

}  // namespace veloreg::counters
