#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "tomo/grid.hpp"
#include "tomo/linear_operator.hpp"

namespace tomo {

// Binary formats: one ASCII header line, then a little-endian payload.
//   TOMO-IMG 1 <nx> <ny> <dx> <dy>\n  + nx*ny float64
//   TOMO-SIN 1 <nangles> <nbins>\n    + nangles float64 angles + payload
//   TOMO-MSK 1 <nx> <ny> <label>\n    + nx*ny bytes (0/1)
//   TOMO-CSR 1 <nrows> <ncols> <nnz>\n + offsets, indices (int64), weights (float64)

std::string encode_image(const Image& img);
Image decode_image(const std::string& bytes);
std::string encode_sinogram(const Sinogram& sino);
Sinogram decode_sinogram(const std::string& bytes);
std::string encode_mask(const RegionMask& mask);
RegionMask decode_mask(const std::string& bytes);

void write_image(const std::filesystem::path& path, const Image& img);
Image read_image(const std::filesystem::path& path);
void write_sinogram(const std::filesystem::path& path, const Sinogram& sino);
Sinogram read_sinogram(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const RegionMask& mask);
RegionMask read_mask(const std::filesystem::path& path);

void write_csr(const std::filesystem::path& path, const CsrMatrix& m);
CsrMatrix read_csr(const std::filesystem::path& path);

/// 16-bit binary PGM, min-max scaled, top row = highest y. The scaling is
/// written next to it as <path>.scale.txt. View-only; lossy.
void write_pgm(const std::filesystem::path& path, const Image& img);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

using KeyValues = std::map<std::string, std::string>;
/// Flat "key=value" text; '#' starts a comment.
KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& kv);

} // namespace tomo
