#pragma once

// Deterministic text output helpers shared by the CLI and the fixture store.

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace contlab {

/// 64-bit FNV-1a hash.
std::uint64_t fnv1a64(std::string_view bytes);
/// Lower-case, zero-padded 16-digit hexadecimal form of fnv1a64.
std::string digest_hex(std::string_view bytes);

/// Shortest decimal that round-trips to the same double; "nan", "inf", "-inf".
std::string format_double(double x);
/// Inverse of format_double; throws std::runtime_error on malformed input.
double parse_double(const std::string& cell);

void write_csv_row(std::ostream& os, const std::vector<std::string>& cells);
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace contlab
