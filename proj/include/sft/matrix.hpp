#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sft {

// Dense row-major single-precision matrix; the one numeric carrier used by
// every module. Arithmetic is plain float with a fixed accumulation order so
// that repeated runs (and the split/local equivalence checks) are
// bit-reproducible.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(int rows_, int cols_, float fill = 0.0f);

    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const float& at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    float* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const float* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;

    std::string shape_str() const;  // e.g. "3x4"
};

// out[i,j] = sum_k a[i,k] * b[k,j], contributions added in ascending k.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// Elementwise helpers used by the layer implementations.
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, float s);
void add_inplace(Matrix& a, const Matrix& b);

// y[i,:] = x[i,:] + row (bias broadcast; row is 1xN).
Matrix add_row_broadcast(const Matrix& x, const Matrix& row);

double frobenius_norm(const Matrix& a);
double relative_frobenius_error(const Matrix& approx, const Matrix& reference);

// Largest |a-b| over all entries; shapes must match.
float max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace sft
