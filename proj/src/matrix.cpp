#include "sft/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace sft {

Matrix::Matrix(int rows_, int cols_, float fill) : rows(rows_), cols(cols_) {
    if (rows_ < 0 || cols_ < 0)
        throw std::invalid_argument("Matrix: negative dimension " + std::to_string(rows_) + "x" +
                                    std::to_string(cols_));
    data.assign(static_cast<size_t>(rows_) * static_cast<size_t>(cols_), fill);
}

bool Matrix::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " and " +
                                    b.shape_str());
    Matrix out(a.rows, b.cols);
    // i-k-j ordering: for each output element the k contributions still arrive
    // in ascending order, so this is bit-identical to the naive i-j-k loop.
    for (int i = 0; i < a.rows; ++i) {
        float* orow = out.row_ptr(i);
        const float* arow = a.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const float aik = arow[k];
            const float* brow = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

static void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

Matrix add(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add");
    Matrix out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "sub");
    Matrix out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "hadamard");
    Matrix out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Matrix scale(const Matrix& a, float s) {
    Matrix out = a;
    for (float& v : out.data) v *= s;
    return out;
}

void add_inplace(Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add_inplace");
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

Matrix add_row_broadcast(const Matrix& x, const Matrix& row) {
    if (row.rows != 1 || row.cols != x.cols)
        throw std::invalid_argument("add_row_broadcast: bias shape " + row.shape_str() +
                                    " does not match " + x.shape_str());
    Matrix out = x;
    for (int i = 0; i < x.rows; ++i) {
        float* orow = out.row_ptr(i);
        for (int j = 0; j < x.cols; ++j) orow[j] += row.data[j];
    }
    return out;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (float v : a.data) s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
}

double relative_frobenius_error(const Matrix& approx, const Matrix& reference) {
    check_same_shape(approx, reference, "relative_frobenius_error");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < approx.data.size(); ++i) {
        const double d = static_cast<double>(approx.data[i]) - static_cast<double>(reference.data[i]);
        num += d * d;
        den += static_cast<double>(reference.data[i]) * static_cast<double>(reference.data[i]);
    }
    if (den == 0.0) return std::sqrt(num);
    return std::sqrt(num / den);
}

float max_abs_diff(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "max_abs_diff");
    float m = 0.0f;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const float d = std::fabs(a.data[i] - b.data[i]);
        if (d > m) m = d;
    }
    return m;
}

}  // namespace sft
