#pragma once

// Clip file formats.
//   CSV:    header "m,t,value", one row per sample, shortest round-trip decimal;
//           sidecar "<stem>.json" holds {"M", "T", "fps"}.
//   Binary: "SPSC", u32 M, u32 T, then M*T little-endian f64 in row-major (m, t).
// Both formats reproduce every double bit-exactly.

#include "spinshield/spectral.hpp"

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace spinshield::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_double(double value);
/// Parses a full token as a double; nullopt on malformed text.
std::optional<double> parse_double(std::string_view token);

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

void write_clip_csv(const std::filesystem::path& csv_path, const PatchSignalClip& clip);
PatchSignalClip read_clip_csv(const std::filesystem::path& csv_path);

void write_clip_binary(const std::filesystem::path& path, const PatchSignalClip& clip);
PatchSignalClip read_clip_binary(const std::filesystem::path& path);

// Record-level helpers shared with the labeled dataset formats.
void write_binary_record(std::ostream& out, const PatchSignalClip& clip);
/// Returns nullopt at a clean end of stream; throws on truncation or bad magic.
std::optional<PatchSignalClip> read_binary_record(std::istream& in);

void write_u32(std::ostream& out, std::uint32_t value);
std::uint32_t read_u32(std::istream& in, const char* what);

}  // namespace spinshield::io
