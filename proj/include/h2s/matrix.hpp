#pragma once

#include <cstddef>
#include <vector>

namespace h2s {

// Dense row-major matrix. Rows are the outer dimension.
template <typename T>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

    T& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    T* row(std::size_t r) { return data.data() + r * cols; }
    const T* row(std::size_t r) const { return data.data() + r * cols; }

    bool empty() const { return rows == 0 || cols == 0; }
    std::size_t size() const { return rows * cols; }
};

using MatF = Matrix<float>;
using MatD = Matrix<double>;

}  // namespace h2s
