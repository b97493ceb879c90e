#pragma once
// Row-major dense matrix of doubles, sized for networks with ~1e5 parameters.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace evoia {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative dimensions");
    }

    static Matrix from_rows(std::vector<std::vector<double>> src) {
        if (src.empty()) return Matrix();
        Matrix m(static_cast<int>(src.size()), static_cast<int>(src[0].size()));
        for (int i = 0; i < m.rows; ++i) {
            if (static_cast<int>(src[i].size()) != m.cols)
                throw std::invalid_argument("Matrix::from_rows: ragged rows");
            for (int j = 0; j < m.cols; ++j) m.at(i, j) = src[i][j];
        }
        return m;
    }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_shape(const Matrix& m, int rows, int cols, const char* what) {
    if (m.rows != rows || m.cols != cols)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + ", got " + std::to_string(m.rows) + "x" +
                                    std::to_string(m.cols));
}

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions disagree");
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[static_cast<std::size_t>(k) * b.cols];
            double* crow = &c.data[static_cast<std::size_t>(i) * c.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// C = A^T * B
inline Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_at_b: row counts disagree");
    Matrix c(a.cols, b.cols);
    for (int r = 0; r < a.rows; ++r) {
        for (int i = 0; i < a.cols; ++i) {
            const double ari = a.at(r, i);
            if (ari == 0.0) continue;
            const double* brow = &b.data[static_cast<std::size_t>(r) * b.cols];
            double* crow = &c.data[static_cast<std::size_t>(i) * c.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += ari * brow[j];
        }
    }
    return c;
}

// C = A * B^T
inline Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_a_bt: column counts disagree");
    Matrix c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.rows; ++j) {
            const double* arow = &a.data[static_cast<std::size_t>(i) * a.cols];
            const double* brow = &b.data[static_cast<std::size_t>(j) * b.cols];
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            c.at(i, j) = acc;
        }
    }
    return c;
}

inline void axpy(Matrix& dst, double scale, const Matrix& src) {
    if (!dst.same_shape(src)) throw std::invalid_argument("axpy: shape mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += scale * src.data[i];
}

}  // namespace evoia
