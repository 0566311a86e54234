#include "veloreg/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>

#include "veloreg/counters.hpp"

namespace veloreg::fft {

namespace {

// FFTW plan creation is not thread-safe; execution via the new-array API is.
// Plans are created with FFTW_UNALIGNED so they can run on any buffer.
struct PlanPair {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    PlanPair get(const Grid& g) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_pair(g.n[0], g.n[1]);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;

        const int n1 = g.n[0], n2 = g.n[1];
        std::vector<double> real(static_cast<std::size_t>(n1) * n2);
        std::vector<fftw_complex> cplx(static_cast<std::size_t>(n1) * (n2 / 2 + 1));
        PlanPair p;
        p.fwd = fftw_plan_dft_r2c_2d(n1, n2, real.data(), cplx.data(),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
        p.bwd = fftw_plan_dft_c2r_2d(n1, n2, cplx.data(), real.data(),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!p.fwd || !p.bwd) throw std::runtime_error("fftw plan creation failed");
        plans_[key] = p;
        return p;
    }

private:
    std::mutex mutex_;
    std::map<std::pair<int, int>, PlanPair> plans_;
};

}  // namespace

int specCols(const Grid& g) { return g.n[1] / 2 + 1; }

Spectrum forward(const ScalarField& u) {
    PlanPair p = PlanCache::instance().get(u.grid);
    Spectrum out(static_cast<std::size_t>(u.grid.n[0]) * specCols(u.grid));
    // r2c with FFTW_PRESERVE_INPUT semantics needs a scratch copy of the input
    std::vector<double> in(u.v);
    fftw_execute_dft_r2c(p.fwd, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    counters::addFft();
    return out;
}

ScalarField inverse(const Spectrum& s, const Grid& g) {
    if (s.size() != static_cast<std::size_t>(g.n[0]) * specCols(g))
        throw std::invalid_argument("fft::inverse: spectrum size mismatch");
    PlanPair p = PlanCache::instance().get(g);
    Spectrum scratch(s);  // c2r destroys its input
    ScalarField out(g);
    fftw_execute_dft_c2r(p.bwd, reinterpret_cast<fftw_complex*>(scratch.data()), out.v.data());
    const double inv = 1.0 / static_cast<double>(g.points());
    for (double& x : out.v) x *= inv;
    counters::addFft();
    return out;
}

int wavenumber(int idx, int n) { return idx <= n / 2 ? idx : idx - n; }

bool isNyquist(int idx, int n) { return idx == n / 2; }

}  // namespace veloreg::fft
