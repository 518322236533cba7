#include "enkd/matrix.hpp"

#include <cmath>
#include <string>

namespace enkd {

Matrix affine(const Matrix& x, const Matrix& weight, const Matrix& bias) {
    if (x.cols() != weight.cols()) {
        throw ShapeError("affine: input width " + std::to_string(x.cols()) +
                         " does not match weight fan-in " + std::to_string(weight.cols()));
    }
    if (bias.rows() != 1 || bias.cols() != weight.rows()) {
        throw ShapeError("affine: bias shape does not match weight fan-out");
    }
    const std::size_t batch = x.rows();
    const std::size_t in = weight.cols();
    const std::size_t out = weight.rows();
    Matrix y(batch, out);
    for (std::size_t b = 0; b < batch; ++b) {
        std::span<const double> xb = x.row(b);
        std::span<double> yb = y.row(b);
        for (std::size_t o = 0; o < out; ++o) yb[o] = bias(0, o);
        for (std::size_t o = 0; o < out; ++o) {
            std::span<const double> w = weight.row(o);
            double acc = 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += w[i] * xb[i];
            yb[o] += acc;
        }
    }
    return y;
}

bool all_finite(const Matrix& m) {
    for (double v : m.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace enkd
