#include "enkd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "enkd/errors.hpp"

namespace enkd {

std::vector<double> linear_forward(const LinearLayer& layer, std::span<const double> x) {
    if (x.size() != layer.weight.cols()) {
        throw ShapeError("linear_forward: input length " + std::to_string(x.size()) +
                         " does not match fan-in " + std::to_string(layer.weight.cols()));
    }
    Matrix xb(1, x.size(), std::vector<double>(x.begin(), x.end()));
    Matrix y = affine(xb, layer.weight, layer.bias);
    return std::vector<double>(y.data().begin(), y.data().end());
}

std::vector<double> relu(std::span<const double> x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Matrix relu(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    std::span<const double> in = x.data();
    std::span<double> out = y.data();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    return y;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw ConfigError("softmax: temperature must be > 0");
    }
    std::vector<double> p(logits.size());
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : logits) hi = std::max(hi, v / temperature);
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] / temperature - hi);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        std::vector<double> row = softmax(logits.row(r), temperature);
        std::copy(row.begin(), row.end(), p.row(r).begin());
    }
    return p;
}

LinearLayer init_linear(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearLayer layer;
    layer.weight = Matrix(out, in);
    layer.bias = Matrix(1, out);
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    for (double& b : layer.bias.data()) b = rng.uniform(-bound, bound);
    return layer;
}

}  // namespace enkd
