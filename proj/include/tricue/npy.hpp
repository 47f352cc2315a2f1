#pragma once

#include "tricue/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tricue::npy {

// Minimal NPY reader/writer. Writes format version 1.0, little-endian,
// C order. Reads versions 1.0-3.0 with the same restrictions.

enum class DType { f4, f8, i8 };

template <class T>
struct Array {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  [[nodiscard]] std::size_t size() const { return data.size(); }
};

template <class T>
void save(const std::filesystem::path& path, std::span<const T> data,
          const std::vector<std::size_t>& shape);

template <class T>
Array<T> load(const std::filesystem::path& path);

extern template void save<float>(const std::filesystem::path&, std::span<const float>,
                                 const std::vector<std::size_t>&);
extern template void save<double>(const std::filesystem::path&, std::span<const double>,
                                  const std::vector<std::size_t>&);
extern template void save<std::int64_t>(const std::filesystem::path&,
                                        std::span<const std::int64_t>,
                                        const std::vector<std::size_t>&);
extern template Array<float> load<float>(const std::filesystem::path&);
extern template Array<double> load<double>(const std::filesystem::path&);
extern template Array<std::int64_t> load<std::int64_t>(const std::filesystem::path&);

// Matrix conveniences (2-D, row-major).
void save_matrix(const std::filesystem::path& path, const RowMatrixF& m);
void save_matrix(const std::filesystem::path& path, const RowMatrixD& m);
RowMatrixF load_matrix_f(const std::filesystem::path& path);
RowMatrixD load_matrix_d(const std::filesystem::path& path);

}  // namespace tricue::npy
