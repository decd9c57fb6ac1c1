#include "xmtc/matrix.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "xmtc/errors.hpp"

namespace xmtc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) +
                         " vs " + shape_string(b));
    }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: buffer length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
    }
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Matrix::add_in_place(const Matrix& other) {
    require_same_shape(*this, other, "add_in_place");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Matrix::scale_in_place(double f) {
    for (double& v : data_) v *= f;
}

void Matrix::fill(double v) {
    for (double& x : data_) x = v;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_string(a) +
                         " times " + shape_string(b));
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.row(p);
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out.at(j, i) = m.at(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    out.add_in_place(b);
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

Matrix scale(const Matrix& m, double f) {
    Matrix out = m;
    out.scale_in_place(f);
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
    return out;
}

Matrix tanh_map(const Matrix& m) {
    Matrix out = m;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
    return out;
}

Matrix row_softmax(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* in = m.row(i);
        double* o = out.row(i);
        double mx = kNegInf;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (std::isfinite(in[j]) && in[j] > mx) mx = in[j];
        }
        if (mx == kNegInf) {
            throw NumericError("row_softmax: row " + std::to_string(i) +
                               " has no finite entry");
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            o[j] = (in[j] == kNegInf) ? 0.0 : std::exp(in[j] - mx);
            sum += o[j];
        }
        for (std::size_t j = 0; j < m.cols(); ++j) o[j] /= sum;
    }
    return out;
}

Matrix apply_causal_mask(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw ShapeError("apply_causal_mask: square matrix required, got " +
                         shape_string(m));
    }
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j) out.at(i, j) = kNegInf;
    return out;
}

std::vector<Matrix> split_heads(const Matrix& m, std::size_t h) {
    if (h == 0 || m.cols() % h != 0) {
        throw ShapeError("split_heads: " + std::to_string(m.cols()) +
                         " columns not divisible by " + std::to_string(h) + " heads");
    }
    const std::size_t dk = m.cols() / h;
    std::vector<Matrix> heads;
    heads.reserve(h);
    for (std::size_t i = 0; i < h; ++i) heads.push_back(slice_cols(m, i * dk, dk));
    return heads;
}

Matrix concat_heads(const std::vector<Matrix>& heads) {
    return concat_cols(heads);
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count) {
    if (begin + count > m.cols()) {
        throw ShapeError("slice_cols: window [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") exceeds " + shape_string(m));
    }
    Matrix out(m.rows(), count);
    for (std::size_t i = 0; i < m.rows(); ++i)
        std::memcpy(out.row(i), m.row(i) + begin, count * sizeof(double));
    return out;
}

Matrix concat_cols(const std::vector<Matrix>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no operands");
    std::size_t cols = 0;
    for (const Matrix& p : parts) {
        if (p.rows() != parts[0].rows()) {
            throw ShapeError("concat_cols: row counts differ, " + shape_string(parts[0]) +
                             " vs " + shape_string(p));
        }
        cols += p.cols();
    }
    Matrix out(parts[0].rows(), cols);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double* dst = out.row(i);
        for (const Matrix& p : parts) {
            std::memcpy(dst, p.row(i), p.cols() * sizeof(double));
            dst += p.cols();
        }
    }
    return out;
}

Matrix concat_rows(const std::vector<Matrix>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no operands");
    std::size_t rows = 0;
    for (const Matrix& p : parts) {
        if (p.cols() != parts[0].cols()) {
            throw ShapeError("concat_rows: column counts differ, " +
                             shape_string(parts[0]) + " vs " + shape_string(p));
        }
        rows += p.rows();
    }
    Matrix out(rows, parts[0].cols());
    std::size_t r = 0;
    for (const Matrix& p : parts) {
        std::memcpy(out.row(r), p.data(), p.size() * sizeof(double));
        r += p.rows();
    }
    return out;
}

Matrix mean_rows(const Matrix& m) {
    if (m.rows() == 0) throw ShapeError("mean_rows: empty matrix");
    Matrix out(1, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out.at(0, j) += m.at(i, j);
    out.scale_in_place(1.0 / static_cast<double>(m.rows()));
    return out;
}

Matrix finite_difference_grad(const std::function<double(const Matrix&)>& f,
                              const Matrix& x, double eps) {
    Matrix grad(x.rows(), x.cols());
    Matrix probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + eps;
        const double up = f(probe);
        probe.data()[i] = orig - eps;
        const double down = f(probe);
        probe.data()[i] = orig;
        grad.data()[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

// --- binary dump ------------------------------------------------------------

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw ParseError("matrix read: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

} // namespace

void write_matrix(std::ostream& out, const Matrix& m) {
    write_u64(out, m.rows());
    write_u64(out, m.cols());
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(m.size() * sizeof(double)));
    } else {
        for (std::size_t i = 0; i < m.size(); ++i)
            write_u64(out, std::bit_cast<std::uint64_t>(m.data()[i]));
    }
}

Matrix read_matrix(std::istream& in) {
    const std::uint64_t rows = read_u64(in);
    const std::uint64_t cols = read_u64(in);
    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!in) throw ParseError("matrix read: truncated payload");
    } else {
        for (std::size_t i = 0; i < m.size(); ++i) {
            unsigned char buf[8];
            in.read(reinterpret_cast<char*>(buf), 8);
            if (!in) throw ParseError("matrix read: truncated payload");
            std::uint64_t v = 0;
            for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
            m.data()[i] = std::bit_cast<double>(v);
        }
    }
    return m;
}

} // namespace xmtc
