#include "veloreg/io.hpp"

#include <cstdint>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "veloreg/spectral.hpp"

namespace veloreg::io {

namespace {

constexpr char kMagic[4] = {'V', 'R', 'F', '1'};

static_assert(sizeof(double) == 8, "binary64 samples expected");

bool hostIsLittleEndian() {
    const std::uint32_t probe = 1;
    std::uint8_t b;
    std::memcpy(&b, &probe, 1);
    return b == 1;
}

void putU32(std::ostream& os, std::uint32_t x) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(x >> 8),
                         static_cast<std::uint8_t>(x >> 16), static_cast<std::uint8_t>(x >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t getU32(std::istream& is) {
    std::uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void writeSamples(std::ostream& os, const std::vector<double>& v) {
    if (hostIsLittleEndian()) {
        os.write(reinterpret_cast<const char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double)));
        return;
    }
    for (double x : v) {
        std::uint64_t u;
        std::memcpy(&u, &x, 8);
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(u >> (8 * i));
        os.write(reinterpret_cast<const char*>(b), 8);
    }
}

void readSamples(std::istream& is, std::vector<double>& v) {
    if (hostIsLittleEndian()) {
        is.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
        return;
    }
    for (double& x : v) {
        std::uint8_t b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        std::memcpy(&x, &u, 8);
    }
}

void writeFieldHeader(std::ostream& os, const Grid& g, int components) {
    os.write(kMagic, 4);
    putU32(os, static_cast<std::uint32_t>(g.n[0]));
    putU32(os, static_cast<std::uint32_t>(g.n[1]));
    putU32(os, static_cast<std::uint32_t>(components));
}

struct FieldHeader {
    Grid grid;
    int components;
};

FieldHeader readFieldHeader(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": not a VRF1 field file");
    const std::uint32_t n1 = getU32(is), n2 = getU32(is), nc = getU32(is);
    if (!is || nc < 1 || nc > 16) throw std::runtime_error(path + ": corrupt field header");
    return {Grid(static_cast<int>(n1), static_cast<int>(n2)), static_cast<int>(nc)};
}

int pgmReadToken(std::istream& is) {
    // skips whitespace and '#' comments per the netpbm grammar
    int c = is.get();
    while (is && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (is && is.get() != '\n') {}
        c = is.get();
    }
    int value = 0;
    bool any = false;
    while (is && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = is.get();
    }
    if (!any) throw std::runtime_error("graymap: malformed header");
    return value;
}

}  // namespace

void writeField(const std::string& path, const ScalarField& u) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error(path + ": cannot open for writing");
    writeFieldHeader(os, u.grid, 1);
    writeSamples(os, u.v);
    if (!os) throw std::runtime_error(path + ": write failed");
}

void writeField(const std::string& path, const VectorField& u) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error(path + ": cannot open for writing");
    writeFieldHeader(os, u.grid(), kDim);
    for (int i = 0; i < kDim; ++i) writeSamples(os, u[i].v);
    if (!os) throw std::runtime_error(path + ": write failed");
}

int fieldComponents(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error(path + ": cannot open");
    return readFieldHeader(is, path).components;
}

ScalarField readScalarField(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error(path + ": cannot open");
    FieldHeader h = readFieldHeader(is, path);
    if (h.components != 1) throw std::runtime_error(path + ": expected a one-component field");
    ScalarField out(h.grid);
    readSamples(is, out.v);
    if (!is) throw std::runtime_error(path + ": truncated field file");
    return out;
}

VectorField readVectorField(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error(path + ": cannot open");
    FieldHeader h = readFieldHeader(is, path);
    if (h.components != kDim) throw std::runtime_error(path + ": expected a two-component field");
    VectorField out(h.grid);
    for (int i = 0; i < kDim; ++i) readSamples(is, out[i].v);
    if (!is) throw std::runtime_error(path + ": truncated field file");
    return out;
}

void writeGraymap(const std::string& path, const ScalarField& u) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error(path + ": cannot open for writing");
    os << "P5\n" << u.grid.n[1] << " " << u.grid.n[0] << "\n65535\n";
    for (double x : u.v) {
        const double clamped = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
        const auto s = static_cast<std::uint16_t>(clamped * 65535.0 + 0.5);
        const std::uint8_t b[2] = {static_cast<std::uint8_t>(s >> 8),
                                   static_cast<std::uint8_t>(s & 0xff)};  // big-endian per P5
        os.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!os) throw std::runtime_error(path + ": write failed");
}

ScalarField readGraymap(const std::string& path, const Grid& target) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error(path + ": cannot open");
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '5') throw std::runtime_error(path + ": not a binary graymap (P5)");
    const int width = pgmReadToken(is);
    const int height = pgmReadToken(is);
    const int maxval = pgmReadToken(is);
    if (width < 1 || height < 1 || maxval < 1 || maxval > 65535)
        throw std::runtime_error(path + ": unsupported graymap header");

    // the image is taken as one period of a periodic field (no mirroring);
    // sharp borders alias and should be smoothed downstream
    std::vector<double> raw(static_cast<std::size_t>(width) * height);
    if (maxval < 256) {
        std::vector<std::uint8_t> buf(raw.size());
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = buf[i] / static_cast<double>(maxval);
    } else {
        std::vector<std::uint8_t> buf(raw.size() * 2);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const int s = (buf[2 * i] << 8) | buf[2 * i + 1];
            raw[i] = s / static_cast<double>(maxval);
        }
    }
    if (!is) throw std::runtime_error(path + ": truncated graymap");

    if (height == target.n[0] && width == target.n[1]) {
        ScalarField out(target);
        out.v = std::move(raw);
        return out;
    }
    if (height % 2 != 0 || width % 2 != 0 || height < 4 || width < 4)
        throw std::runtime_error(path + ": graymap size must be even and >= 4 to resample");
    ScalarField src{};
    src.grid = Grid(height, width);
    src.v = std::move(raw);
    return spectral::resample(src, target);
}

ScalarField readImage(const std::string& path, const Grid& target) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error(path + ": cannot open");
    char magic[4] = {0, 0, 0, 0};
    is.read(magic, 4);
    is.close();
    if (std::memcmp(magic, kMagic, 4) == 0) {
        ScalarField f = readScalarField(path);
        return f.grid == target ? f : spectral::resample(f, target);
    }
    return readGraymap(path, target);
}

std::string solverReportCsv(const inverse::SolverReport& report) {
    std::ostringstream os;
    os << "iter,grad_inf,grad_rel,objective,mismatch,inner_iters,ls_steps,step_length,"
          "wall_time_sec,ffts,interps\n";
    os.precision(12);
    os << std::scientific;
    for (const auto& r : report.iterations) {
        os << r.iter << "," << r.gradNormInf << "," << r.gradNormRel << "," << r.objective << ","
           << r.mismatch << "," << r.innerIterations << "," << r.lineSearchSteps << ","
           << r.stepLength << "," << r.wallTimeSec << "," << r.ffts << "," << r.interps << "\n";
    }
    return os.str();
}

}  // namespace veloreg::io
