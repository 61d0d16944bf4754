#include "affect/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace affect {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                " and " + b.shape_str());
}

}  // namespace

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows_init) {
    Matrix m;
    m.rows = rows_init.size();
    m.cols = rows_init.size() == 0 ? 0 : rows_init.begin()->size();
    m.data.reserve(m.rows * m.cols);
    for (const auto& r : rows_init) {
        if (r.size() != m.cols) {
            throw std::invalid_argument("Matrix::from_rows: ragged rows");
        }
        m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
    Matrix m(1, values.size());
    std::copy(values.begin(), values.end(), m.data.begin());
    return m;
}

Matrix Matrix::column_vector(std::span<const double> values) {
    Matrix m(values.size(), 1);
    std::copy(values.begin(), values.end(), m.data.begin());
    return m;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.data.begin(), m.data.end(),
                       [](double v) { return std::isfinite(v); });
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) shape_error("matmul", a, b);
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* orow = out.data.data() + i * b.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("add", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("sub", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix mul(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("mul", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Matrix divide(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("divide", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (b.data[i] == 0.0) {
            throw std::invalid_argument("divide: zero denominator at flat index " +
                                        std::to_string(i));
        }
        out.data[i] /= b.data[i];
    }
    return out;
}

Matrix add_row(const Matrix& a, const Matrix& row) {
    if (row.rows != 1 || row.cols != a.cols) shape_error("add_row", a, row);
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            out.data[i * a.cols + j] += row.data[j];
        }
    }
    return out;
}

Matrix scale(const Matrix& a, double c) {
    Matrix out = a;
    for (double& v : out.data) v *= c;
    return out;
}

Matrix relu(const Matrix& a) {
    Matrix out = a;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Matrix tanh(const Matrix& a) {
    Matrix out = a;
    for (double& v : out.data) v = std::tanh(v);
    return out;
}

Matrix sigmoid(const Matrix& a) {
    Matrix out = a;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

Matrix softmax_rows(const Matrix& a) {
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* row = out.data.data() + i * a.cols;
        double mx = row[0];
        for (std::size_t j = 1; j < a.cols; ++j) mx = std::max(mx, row[j]);
        double total = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            total += row[j];
        }
        for (std::size_t j = 0; j < a.cols; ++j) row[j] /= total;
    }
    return out;
}

Matrix log_softmax_rows(const Matrix& a) {
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* row = out.data.data() + i * a.cols;
        double mx = row[0];
        for (std::size_t j = 1; j < a.cols; ++j) mx = std::max(mx, row[j]);
        double total = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) total += std::exp(row[j] - mx);
        const double lse = mx + std::log(total);
        for (std::size_t j = 0; j < a.cols; ++j) row[j] -= lse;
    }
    return out;
}

Matrix log(const Matrix& a) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.data[i] <= 0.0) {
            throw std::invalid_argument("log: non-positive entry " +
                                        std::to_string(out.data[i]) + " at flat index " +
                                        std::to_string(i));
        }
        out.data[i] = std::log(out.data[i]);
    }
    return out;
}

Matrix clamp(const Matrix& a, double lo, double hi) {
    Matrix out = a;
    for (double& v : out.data) v = std::clamp(v, lo, hi);
    return out;
}

Matrix sum(const Matrix& a) {
    double total = 0.0;
    for (double v : a.data) total += v;
    Matrix out(1, 1);
    out.data[0] = total;
    return out;
}

Matrix mean(const Matrix& a) {
    if (a.size() == 0) throw std::invalid_argument("mean: empty matrix");
    Matrix out = sum(a);
    out.data[0] /= static_cast<double>(a.size());
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            out.data[j * a.rows + i] = a.data[i * a.cols + j];
        }
    }
    return out;
}

}  // namespace affect
