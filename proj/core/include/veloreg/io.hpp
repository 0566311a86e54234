#ifndef VELOREG_IO_HPP
#define VELOREG_IO_HPP

#include <string>

#include "veloreg/field.hpp"
#include "veloreg/inverse.hpp"

namespace veloreg::io {

// Field container: magic "VRF1", then little-endian u32 n1, n2, component
// count, then row-major IEEE-754 binary64 little-endian samples per component.
void writeField(const std::string& path, const ScalarField& u);
void writeField(const std::string& path, const VectorField& u);
int fieldComponents(const std::string& path);
ScalarField readScalarField(const std::string& path);
VectorField readVectorField(const std::string& path);

/// 16-bit binary graymap (P5, maxval 65535, big-endian samples) scaled from
/// [0,1]; values outside [0,1] are clamped.
void writeGraymap(const std::string& path, const ScalarField& u);

/// Reads 8- or 16-bit binary graymaps, mapping the sample range to [0,1].
/// Arbitrary sizes embed periodically and resample spectrally onto `target`.
ScalarField readGraymap(const std::string& path, const Grid& target);

/// Reads either container by sniffing the magic; graymaps need `target`.
ScalarField readImage(const std::string& path, const Grid& target);

std::string solverReportCsv(const inverse::SolverReport& report);

}  // namespace veloreg::io

#endif
