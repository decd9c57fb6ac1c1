#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <vector>

namespace xmtc {

// Dense row-major matrix of 64-bit floats. The single numeric carrier for
// embeddings, activations, parameters and gradients. Entries are finite
// except for the -inf sentinels written by apply_causal_mask.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

    bool all_finite() const;

    // In-place helpers used by the optimizer and gradient accumulation.
    void add_in_place(const Matrix& other);       // this += other
    void scale_in_place(double f);                // this *= f
    void fill(double v);

    static Matrix identity(std::size_t n);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

// --- forward kernels -------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double f);
Matrix hadamard(const Matrix& a, const Matrix& b);

// Elementwise tanh. Input must be finite.
Matrix tanh_map(const Matrix& m);

// Exp-normalizes each row with max-subtraction; -inf entries map to exactly 0.
// Throws NumericError on a row with no finite entry.
Matrix row_softmax(const Matrix& m);

// Sets entries (i, j) with j > i to -inf so position i attends only to
// positions <= i. Square input required.
Matrix apply_causal_mask(const Matrix& m);

// Column-block head split/merge; d_model must be divisible by h.
std::vector<Matrix> split_heads(const Matrix& m, std::size_t h);
Matrix concat_heads(const std::vector<Matrix>& heads);

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count);
Matrix concat_cols(const std::vector<Matrix>& parts);
Matrix concat_rows(const std::vector<Matrix>& parts);
Matrix mean_rows(const Matrix& m); // 1 x cols

// Central differences (f(x+eps e) - f(x-eps e)) / (2 eps) per entry.
Matrix finite_difference_grad(const std::function<double(const Matrix&)>& f,
                              const Matrix& x, double eps);

// --- binary dump format ----------------------------------------------------
// Little-endian header (rows, cols as 64-bit unsigned) followed by row-major
// 64-bit floats. Used by checkpoints and the teacher cache sidecar.

void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);

} // namespace xmtc
