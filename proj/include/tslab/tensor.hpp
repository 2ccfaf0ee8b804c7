#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tslab {

// Dense row-major matrix of doubles. The only tensor shape this library
// needs: rows are samples, columns are features/logits.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Tensor2 from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return {};
        Tensor2 t(rows.size(), rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != t.cols_) throw std::invalid_argument("ragged rows");
            for (std::size_t c = 0; c < t.cols_; ++c) t(r, c) = rows[r][c];
        }
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool operator==(const Tensor2& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_shape(const Tensor2& t, std::size_t rows, std::size_t cols,
                          const char* what) {
    if (t.rows() != rows || t.cols() != cols) {
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) +
                                    "x" + std::to_string(cols) + ", got " +
                                    std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    }
}

// out = a * b
inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims differ");
    Tensor2 out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* orow = out.data() + i * out.cols();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* brow = b.data() + k * b.cols();
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

// out = a^T * b  (a: n x r, b: n x c, out: r x c)
inline Tensor2 matmul_at_b(const Tensor2& a, const Tensor2& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("matmul_at_b: row counts differ");
    Tensor2 out(a.cols(), b.cols());
    for (std::size_t n = 0; n < a.rows(); ++n) {
        const double* arow = a.data() + n * a.cols();
        const double* brow = b.data() + n * b.cols();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            double* orow = out.data() + i * out.cols();
            const double ani = arow[i];
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += ani * brow[j];
        }
    }
    return out;
}

// out = a * b^T  (a: n x c, b: m x c, out: n x m)
inline Tensor2 matmul_a_bt(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_a_bt: col counts differ");
    Tensor2 out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.data() + i * a.cols();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.data() + j * b.cols();
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
            out(i, j) = s;
        }
    }
    return out;
}

}  // namespace tslab
