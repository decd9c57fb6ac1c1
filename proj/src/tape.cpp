#include "xmtc/tape.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "xmtc/errors.hpp"

namespace xmtc {

Tape::Id Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

Tape::Id Tape::leaf(Matrix value) {
    return push({Op::Leaf, {}, std::move(value)});
}

Tape::Id Tape::matmul(Id a, Id b) {
    Matrix v = xmtc::matmul(nodes_[a].value, nodes_[b].value);
    return push({Op::MatMul, {a, b}, std::move(v)});
}

Tape::Id Tape::transpose(Id a) {
    return push({Op::Transpose, {a}, xmtc::transpose(nodes_[a].value)});
}

Tape::Id Tape::add(Id a, Id b) {
    return push({Op::Add, {a, b}, xmtc::add(nodes_[a].value, nodes_[b].value)});
}

Tape::Id Tape::scale(Id a, double factor) {
    Node n{Op::Scale, {a}, xmtc::scale(nodes_[a].value, factor)};
    n.factor = factor;
    return push(std::move(n));
}

Tape::Id Tape::tanh_map(Id a) {
    return push({Op::Tanh, {a}, xmtc::tanh_map(nodes_[a].value)});
}

Tape::Id Tape::row_softmax(Id a) {
    return push({Op::RowSoftmax, {a}, xmtc::row_softmax(nodes_[a].value)});
}

Tape::Id Tape::causal_mask(Id a) {
    return push({Op::CausalMask, {a}, xmtc::apply_causal_mask(nodes_[a].value)});
}

Tape::Id Tape::slice_cols(Id a, std::size_t begin, std::size_t count) {
    Node n{Op::SliceCols, {a}, xmtc::slice_cols(nodes_[a].value, begin, count)};
    n.begin = begin;
    return push(std::move(n));
}

Tape::Id Tape::concat_cols(std::vector<Id> parts) {
    std::vector<Matrix> values;
    values.reserve(parts.size());
    for (Id p : parts) values.push_back(nodes_[p].value);
    return push({Op::ConcatCols, std::move(parts), xmtc::concat_cols(values)});
}

Tape::Id Tape::concat_rows(std::vector<Id> parts) {
    std::vector<Matrix> values;
    values.reserve(parts.size());
    for (Id p : parts) values.push_back(nodes_[p].value);
    return push({Op::ConcatRows, std::move(parts), xmtc::concat_rows(values)});
}

Tape::Id Tape::mean_rows(Id a) {
    return push({Op::MeanRows, {a}, xmtc::mean_rows(nodes_[a].value)});
}

void Tape::backward(Id output, const Matrix& upstream) {
    if (!upstream.same_shape(nodes_[output].value)) {
        throw ShapeError("backward: upstream " + shape_string(upstream) +
                         " does not match output " + shape_string(nodes_[output].value));
    }
    grads_.clear();
    grads_.reserve(nodes_.size());
    for (const Node& n : nodes_) grads_.emplace_back(n.value.rows(), n.value.cols());
    grads_[output] = upstream;

    for (Id id = output + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        const Matrix& g = grads_[id];
        switch (n.op) {
        case Op::Leaf:
            break;
        case Op::MatMul: {
            const Matrix& a = nodes_[n.inputs[0]].value;
            const Matrix& b = nodes_[n.inputs[1]].value;
            grads_[n.inputs[0]].add_in_place(xmtc::matmul(g, xmtc::transpose(b)));
            grads_[n.inputs[1]].add_in_place(xmtc::matmul(xmtc::transpose(a), g));
            break;
        }
        case Op::Transpose:
            grads_[n.inputs[0]].add_in_place(xmtc::transpose(g));
            break;
        case Op::Add:
            grads_[n.inputs[0]].add_in_place(g);
            grads_[n.inputs[1]].add_in_place(g);
            break;
        case Op::Scale:
            grads_[n.inputs[0]].add_in_place(xmtc::scale(g, n.factor));
            break;
        case Op::Tanh: {
            // d tanh = 1 - y^2
            Matrix d = g;
            for (std::size_t i = 0; i < d.size(); ++i)
                d.data()[i] *= 1.0 - n.value.data()[i] * n.value.data()[i];
            grads_[n.inputs[0]].add_in_place(d);
            break;
        }
        case Op::RowSoftmax: {
            // dS_ij = y_ij (g_ij - sum_k g_ik y_ik); masked entries have
            // y = 0 and so receive exactly zero gradient.
            const Matrix& y = n.value;
            Matrix d(y.rows(), y.cols());
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j)
                    d.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
            }
            grads_[n.inputs[0]].add_in_place(d);
            break;
        }
        case Op::CausalMask: {
            Matrix d = g;
            for (std::size_t i = 0; i < d.rows(); ++i)
                for (std::size_t j = i + 1; j < d.cols(); ++j) d.at(i, j) = 0.0;
            grads_[n.inputs[0]].add_in_place(d);
            break;
        }
        case Op::SliceCols: {
            Matrix& dst = grads_[n.inputs[0]];
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    dst.at(i, n.begin + j) += g.at(i, j);
            break;
        }
        case Op::ConcatCols: {
            std::size_t offset = 0;
            for (Id input : n.inputs) {
                Matrix& dst = grads_[input];
                for (std::size_t i = 0; i < dst.rows(); ++i)
                    for (std::size_t j = 0; j < dst.cols(); ++j)
                        dst.at(i, j) += g.at(i, offset + j);
                offset += dst.cols();
            }
            break;
        }
        case Op::ConcatRows: {
            std::size_t offset = 0;
            for (Id input : n.inputs) {
                Matrix& dst = grads_[input];
                for (std::size_t i = 0; i < dst.rows(); ++i)
                    for (std::size_t j = 0; j < dst.cols(); ++j)
                        dst.at(i, j) += g.at(offset + i, j);
                offset += dst.rows();
            }
            break;
        }
        case Op::MeanRows: {
            Matrix& dst = grads_[n.inputs[0]];
            const double inv = 1.0 / static_cast<double>(dst.rows());
            for (std::size_t i = 0; i < dst.rows(); ++i)
                for (std::size_t j = 0; j < dst.cols(); ++j)
                    dst.at(i, j) += g.at(0, j) * inv;
            break;
        }
        }
    }
}

} // namespace xmtc
