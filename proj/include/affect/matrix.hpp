#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace affect {

/// Dense row-major matrix of doubles. The one value type the whole engine
/// computes with; immutable by convention once recorded on a tape.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows_init);
    static Matrix row_vector(std::span<const double> values);
    static Matrix column_vector(std::span<const double> values);

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return rows * cols; }
    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    double scalar() const { return data[0]; }

    std::string shape_str() const;
};

bool all_finite(const Matrix& m);
bool bit_equal(const Matrix& a, const Matrix& b);

// Elementwise / structural kernels. Shape mismatches throw std::invalid_argument
// naming the operation and both shapes.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix mul(const Matrix& a, const Matrix& b);
Matrix divide(const Matrix& a, const Matrix& b);
Matrix add_row(const Matrix& a, const Matrix& row);  // row is 1 x a.cols, added to each row
Matrix scale(const Matrix& a, double c);
Matrix relu(const Matrix& a);
Matrix tanh(const Matrix& a);
Matrix sigmoid(const Matrix& a);
Matrix softmax_rows(const Matrix& a);      // row-max subtracted before exponentiation
Matrix log_softmax_rows(const Matrix& a);
Matrix log(const Matrix& a);               // rejects non-positive entries
Matrix clamp(const Matrix& a, double lo, double hi);
Matrix sum(const Matrix& a);               // 1x1
Matrix mean(const Matrix& a);              // 1x1
Matrix transpose(const Matrix& a);

}  // namespace affect
