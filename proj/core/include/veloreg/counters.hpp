#ifndef VELOREG_COUNTERS_HPP
#define VELOREG_COUNTERS_HPP

// Process-wide operation counters. One "fft" is a single forward or inverse
// 2D transform of one scalar field; one "interp" is one scattered evaluation
// of one scalar field at a full point set.

namespace veloreg::counters {

struct Snapshot {
    long long ffts = 0;
    long long interps = 0;
    Snapshot operator-(const Snapshot& o) const { return {ffts - o.ffts, interps - o.interps}; }
};

void reset();
void addFft(long long k = 1);
void addInterp(long long k = 1);
Snapshot snapshot();

}  // namespace veloreg::counters

#endif
