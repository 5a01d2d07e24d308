#pragma once

#include <filesystem>
#include <iosfwd>

#include "blockshampoo/matrix.hpp"

namespace blockshampoo {

// Text format: first line "rows cols", then `rows` lines of `cols`
// whitespace-separated decimal values.

/// Throws std::runtime_error on malformed input (bad header, short data,
/// non-numeric or non-finite tokens).
Matrix read_matrix(std::istream& in);
Matrix read_matrix_file(const std::filesystem::path& path);

/// Writes with 17 significant digits so values round-trip exactly.
void write_matrix(std::ostream& out, const Matrix& m);
void write_matrix_file(const std::filesystem::path& path, const Matrix& m);

}  // namespace blockshampoo
