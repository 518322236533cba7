#pragma once

// Central finite-difference harness for gradient checks. A builder
// constructs the scalar loss node from the store's current values; the
// harness compares the tape gradient against (f(x+h) - f(x-h)) / 2h for
// every parameter entry.

#include <functional>

#include "enkd/autodiff.hpp"
#include "enkd/nn.hpp"

namespace testutil {

using LossBuilder = std::function<enkd::ValueId(enkd::Tape&, enkd::ParamStore&)>;

struct FdResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

// Relative error with a unit floor so near-zero gradients are compared
// absolutely.
inline double rel_err(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1.0});
    return std::abs(a - b) / scale;
}

inline FdResult check_gradients(enkd::ParamStore& store, const LossBuilder& build,
                                double h = 1e-5) {
    using enkd::Tape;

    std::vector<enkd::Matrix> grads;
    {
        Tape tape;
        enkd::ValueId loss = build(tape, store);
        tape.backward(loss);
        for (const auto& t : store) grads.push_back(t.grad);
    }
    auto value_at = [&]() {
        Tape tape;
        return tape.scalar_value(build(tape, store));
    };

    FdResult result;
    for (std::size_t p = 0; p < store.size(); ++p) {
        auto values = store.at(p).value.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = value_at();
            values[i] = saved - h;
            const double down = value_at();
            values[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            result.max_rel_err = std::max(result.max_rel_err, rel_err(fd, grads[p].data()[i]));
            result.checked += 1;
        }
    }
    return result;
}

}  // namespace testutil
