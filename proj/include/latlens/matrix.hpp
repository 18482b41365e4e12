#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "latlens/error.hpp"

namespace latlens {

// Dense row-major float32 matrix. Dot products accumulate in float64.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    float at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0f;
        return m;
    }
};

double dot_f64(std::span<const float> a, std::span<const float> b);

// out[i] = sum_j m[i,j] * v[j]
std::vector<float> matvec(const Matrix& m, std::span<const float> v);

// Indices of the k largest entries, ascending by index. Ties break toward
// the lower index so the result is deterministic.
std::vector<std::size_t> topk_indices(std::span<const float> v, std::size_t k);

} // namespace latlens
