#pragma once

#include <filesystem>

#include "cgir/types.hpp"

namespace cgir {

/// Binary matrix container: "CGIRMAT1", u32 rows, u32 cols (little endian),
/// followed by a row-major float32 little-endian payload.
inline constexpr char kMatrixMagic[8] = {'C', 'G', 'I', 'R', 'M', 'A', 'T', '1'};

void write_matrix_binary(const std::filesystem::path& path, const Matrix& m);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

/// Reads either format; the binary one is recognised by its magic bytes.
Matrix read_matrix(const std::filesystem::path& path);

Matrix read_matrix_binary(const std::filesystem::path& path);
Matrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace cgir
