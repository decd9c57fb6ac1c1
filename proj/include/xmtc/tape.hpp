#pragma once

#include <cstddef>
#include <vector>

#include "xmtc/matrix.hpp"

namespace xmtc {

// Reverse-mode differentiation tape over Matrix primitives.
//
// Ids are append-ordered, every node's inputs have smaller ids, so walking
// ids from high to low replays the primitives in exact reverse order of the
// forward pass. Values are cached per node; gradients are materialized by
// backward(). One tape serves one forward pass; independent tapes may run on
// different threads with no shared mutable state.
class Tape {
public:
    using Id = std::size_t;

    // Leaf value (input or parameter). Gradients accumulate here like for
    // any other node.
    Id leaf(Matrix value);

    Id matmul(Id a, Id b);
    Id transpose(Id a);
    Id add(Id a, Id b);
    Id scale(Id a, double factor);
    Id tanh_map(Id a);
    Id row_softmax(Id a);
    Id causal_mask(Id a);
    Id slice_cols(Id a, std::size_t begin, std::size_t count);
    Id concat_cols(std::vector<Id> parts);
    Id concat_rows(std::vector<Id> parts);
    Id mean_rows(Id a);

    std::size_t node_count() const { return nodes_.size(); }
    const Matrix& value(Id id) const { return nodes_[id].value; }

    // Seeds `output` with `upstream` and sweeps the tape in reverse.
    // Gradients of earlier backward() calls are discarded.
    void backward(Id output, const Matrix& upstream);

    // Gradient of the last backward() output w.r.t. node `id`; all-zero for
    // nodes the output does not depend on.
    const Matrix& grad(Id id) const { return grads_[id]; }

private:
    enum class Op {
        Leaf,
        MatMul,
        Transpose,
        Add,
        Scale,
        Tanh,
        RowSoftmax,
        CausalMask,
        SliceCols,
        ConcatCols,
        ConcatRows,
        MeanRows,
    };

    struct Node {
        Op op;
        std::vector<Id> inputs;
        Matrix value;
        double factor = 0.0;      // Scale
        std::size_t begin = 0;    // SliceCols
    };

    Id push(Node node);

    std::vector<Node> nodes_;
    std::vector<Matrix> grads_;
};

} // namespace xmtc
