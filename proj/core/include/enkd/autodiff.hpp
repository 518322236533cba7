#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "enkd/matrix.hpp"
#include "enkd/nn.hpp"

namespace enkd {

struct ValueId {
    std::uint32_t index = std::numeric_limits<std::uint32_t>::max();
    bool valid() const { return index != std::numeric_limits<std::uint32_t>::max(); }
};

// Reverse-mode tape over matrix-valued nodes. A fresh tape is built for every
// optimisation step; parameters are leaves tied to an external ParamStore so
// that backward() leaves d(output)/d(theta) in the store's gradient buffers.
//
// A tape must be used by a single execution context at a time.
class Tape {
  public:
    ValueId constant(Matrix value);

    // Leaf tied to store.at(index); backward() accumulates into its grad.
    ValueId param(ParamStore& store, std::size_t index);

    // x: (B, in), w: (out, in), b: (1, out) -> (B, out)
    ValueId linear(ValueId x, ValueId w, ValueId b);

    ValueId add(ValueId a, ValueId b);
    ValueId sub(ValueId a, ValueId b);
    ValueId mul(ValueId a, ValueId b);  // elementwise
    ValueId div(ValueId a, ValueId b);  // elementwise
    ValueId scale(ValueId a, double c);
    ValueId add_scalar(ValueId a, double c);
    ValueId relu(ValueId a);
    ValueId exp(ValueId a);
    ValueId log(ValueId a);
    // log(max(x, floor)); gradient is zero where the floor is active.
    ValueId log_floored(ValueId a, double floor);
    ValueId softmax_rows(ValueId logits, double temperature);
    // (B, K) -> (B, 1), entry b is x(b, labels[b]).
    ValueId pick_class(ValueId x, std::vector<int> labels);
    ValueId column(ValueId x, std::size_t j);  // (B, K) -> (B, 1)
    ValueId mul_by(ValueId a, Matrix weights);  // elementwise by a constant
    ValueId reshape(ValueId a, std::size_t rows, std::size_t cols);
    ValueId sum(ValueId a);                     // -> (1, 1)
    ValueId mean(ValueId a);                    // -> (1, 1)
    ValueId sum_squares(ValueId a);             // -> (1, 1)
    // Mean over rows of cos(a_r, b_r); rows whose norm product falls below
    // 1e-12 contribute cos = 0 with zero gradient.
    ValueId row_cosine_mean(ValueId a, ValueId b);

    const Matrix& value(ValueId id) const { return nodes_[id.index].value; }
    const Matrix& grad(ValueId id) const { return nodes_[id.index].grad; }
    double scalar_value(ValueId id) const;

    // Reverse pass from a (1, 1) node. Gradient buffers of every ParamStore
    // touched by this tape are zeroed first; repeated calls do not
    // accumulate.
    void backward(ValueId output);

    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void()> backprop;  // may be empty for leaves
    };

    ValueId push(Matrix value, std::function<void()> backprop = {});
    Node& node(ValueId id) { return nodes_[id.index]; }

    std::vector<Node> nodes_;
    std::vector<ParamStore*> stores_;
};

}  // namespace enkd
