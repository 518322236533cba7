#include "enkd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "enkd/errors.hpp"

namespace enkd {

namespace {
constexpr double kCosineNormFloor = 1e-12;
}

ValueId Tape::push(Matrix value, std::function<void()> backprop) {
    Node n;
    n.grad = Matrix(value.rows(), value.cols());
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return ValueId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

ValueId Tape::constant(Matrix value) { return push(std::move(value)); }

ValueId Tape::param(ParamStore& store, std::size_t index) {
    if (std::find(stores_.begin(), stores_.end(), &store) == stores_.end()) {
        stores_.push_back(&store);
    }
    ValueId id = push(store.at(index).value);
    ParamStore* s = &store;
    node(id).backprop = [this, id, s, index]() {
        Matrix& dst = s->at(index).grad;
        const Matrix& src = node(id).grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
    };
    return id;
}

ValueId Tape::linear(ValueId x, ValueId w, ValueId b) {
    Matrix y = affine(value(x), value(w), value(b));
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, x, w, b]() {
        const Matrix& dy = node(id).grad;
        const Matrix& xv = node(x).value;
        const Matrix& wv = node(w).value;
        Matrix& dx = node(x).grad;
        Matrix& dw = node(w).grad;
        Matrix& db = node(b).grad;
        const std::size_t batch = xv.rows();
        const std::size_t in = wv.cols();
        const std::size_t out = wv.rows();
        for (std::size_t r = 0; r < batch; ++r) {
            std::span<const double> dyr = dy.row(r);
            std::span<const double> xr = xv.row(r);
            std::span<double> dxr = dx.row(r);
            for (std::size_t o = 0; o < out; ++o) {
                const double g = dyr[o];
                if (g == 0.0) continue;
                std::span<const double> wo = wv.row(o);
                std::span<double> dwo = dw.row(o);
                for (std::size_t i = 0; i < in; ++i) {
                    dxr[i] += g * wo[i];
                    dwo[i] += g * xr[i];
                }
                db(0, o) += g;
            }
        }
    };
    return id;
}

ValueId Tape::add(ValueId a, ValueId b) {
    if (!value(a).same_shape(value(b))) throw ShapeError("Tape::add: shape mismatch");
    Matrix y = value(a);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += value(b).data()[i];
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a, b]() {
        const Matrix& dy = node(id).grad;
        for (std::size_t i = 0; i < dy.size(); ++i) {
            node(a).grad.data()[i] += dy.data()[i];
            node(b).grad.data()[i] += dy.data()[i];
        }
    };
    return id;
}

ValueId Tape::sub(ValueId a, ValueId b) {
    if (!value(a).same_shape(value(b))) throw ShapeError("Tape::sub: shape mismatch");
    Matrix y = value(a);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] -= value(b).data()[i];
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a, b]() {
        const Matrix& dy = node(id).grad;
        for (std::size_t i = 0; i < dy.size(); ++i) {
            node(a).grad.data()[i] += dy.data()[i];
            node(b).grad.data()[i] -= dy.data()[i];
        }
    };
    return id;
}

ValueId Tape::mul(ValueId a, ValueId b) {
    if (!value(a).same_shape(value(b))) throw ShapeError("Tape::mul: shape mismatch");
    Matrix y = value(a);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= value(b).data()[i];
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a, b]() {
        const Matrix& dy = node(id).grad;
        const Matrix& av = node(a).value;
        const Matrix& bv = node(b).value;
        for (std::size_t i = 0; i < dy.size(); ++i) {
            node(a).grad.data()[i] += dy.data()[i] * bv.data()[i];
            node(b).grad.data()[i] += dy.data()[i] * av.data()[i];
        }
    };
    return id;
}

ValueId Tape::div(ValueId a, ValueId b) {
    if (!value(a).same_shape(value(b))) throw ShapeError("Tape::div: shape mismatch");
    Matrix y = value(a);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] /= value(b).data()[i];
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a, b]() {
        const Matrix& dy = node(id).grad;
        const Matrix& yv = node(id).value;
        const Matrix& bv = node(b).value;
        for (std::size_t i = 0; i < dy.size(); ++i) {
            const double inv_b = 1.0 / bv.data()[i];
            node(a).grad.data()[i] += dy.data()[i] * inv_b;
            node(b).grad.data()[i] -= dy.data()[i] * yv.data()[i] * inv_b;
        }
    };
    return id;
}

ValueId Tape::scale(ValueId a, double c) {
    Matrix y = value(a);
    for (double& v : y.data()) v *= c;
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a, c]() {
        const Matrix& dy = node(id).grad;
        for (std::size_t i = 0; i < dy.size(); ++i) node(a).grad.data()[i] += c * dy.data()[i];
    };
    return id;
}

ValueId Tape::add_scalar(ValueId a, double c) {
    Matrix y = value(a);
    for (double& v : y.data()) v += c;
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a]() {
        const Matrix& dy = node(id).grad;
        for (std::size_t i = 0; i < dy.size(); ++i) node(a).grad.data()[i] += dy.data()[i];
    };
    return id;
}

ValueId Tape::relu(ValueId a) {
    Matrix y = value(a);
    for (double& v : y.data())
        if (v < 0.0) v = 0.0;
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a]() {
        const Matrix& dy = node(id).grad;
        const Matrix& av = node(a).value;
        for (std::size_t i = 0; i < dy.size(); ++i)
            if (av.data()[i] > 0.0) node(a).grad.data()[i] += dy.data()[i];
    };
    return id;
}

ValueId Tape::exp(ValueId a) {
    Matrix y = value(a);
    for (double& v : y.data()) v = std::exp(v);
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a]() {
        const Matrix& dy = node(id).grad;
        const Matrix& yv = node(id).value;
        for (std::size_t i = 0; i < dy.size(); ++i)
            node(a).grad.data()[i] += dy.data()[i] * yv.data()[i];
    };
    return id;
}

ValueId Tape::log(ValueId a) {
    Matrix y = value(a);
    for (double& v : y.data()) v = std::log(v);
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a]() {
        const Matrix& dy = node(id).grad;
        const Matrix& av = node(a).value;
        for (std::size_t i = 0; i < dy.size(); ++i)
            node(a).grad.data()[i] += dy.data()[i] / av.data()[i];
    };
    return id;
}

ValueId Tape::log_floored(ValueId a, double floor) {
    Matrix y = value(a);
    for (double& v : y.data()) v = std::log(std::max(v, floor));
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a, floor]() {
        const Matrix& dy = node(id).grad;
        const Matrix& av = node(a).value;
        for (std::size_t i = 0; i < dy.size(); ++i)
            if (av.data()[i] > floor) node(a).grad.data()[i] += dy.data()[i] / av.data()[i];
    };
    return id;
}

ValueId Tape::softmax_rows(ValueId logits, double temperature) {
    Matrix p = enkd::softmax_rows(value(logits), temperature);
    ValueId id = push(std::move(p));
    node(id).backprop = [this, id, logits, temperature]() {
        const Matrix& dp = node(id).grad;
        const Matrix& pv = node(id).value;
        Matrix& dl = node(logits).grad;
        for (std::size_t r = 0; r < pv.rows(); ++r) {
            std::span<const double> pr = pv.row(r);
            std::span<const double> dpr = dp.row(r);
            std::span<double> dlr = dl.row(r);
            double dot = 0.0;
            for (std::size_t k = 0; k < pr.size(); ++k) dot += dpr[k] * pr[k];
            for (std::size_t k = 0; k < pr.size(); ++k)
                dlr[k] += pr[k] * (dpr[k] - dot) / temperature;
        }
    };
    return id;
}

ValueId Tape::pick_class(ValueId x, std::vector<int> labels) {
    const Matrix& xv = value(x);
    if (labels.size() != xv.rows()) throw ShapeError("Tape::pick_class: label count mismatch");
    Matrix y(xv.rows(), 1);
    for (std::size_t r = 0; r < xv.rows(); ++r) y(r, 0) = xv(r, static_cast<std::size_t>(labels[r]));
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, x, labels = std::move(labels)]() {
        const Matrix& dy = node(id).grad;
        Matrix& dx = node(x).grad;
        for (std::size_t r = 0; r < dy.rows(); ++r)
            dx(r, static_cast<std::size_t>(labels[r])) += dy(r, 0);
    };
    return id;
}

ValueId Tape::column(ValueId x, std::size_t j) {
    const Matrix& xv = value(x);
    if (j >= xv.cols()) throw ShapeError("Tape::column: index out of range");
    Matrix y(xv.rows(), 1);
    for (std::size_t r = 0; r < xv.rows(); ++r) y(r, 0) = xv(r, j);
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, x, j]() {
        const Matrix& dy = node(id).grad;
        Matrix& dx = node(x).grad;
        for (std::size_t r = 0; r < dy.rows(); ++r) dx(r, j) += dy(r, 0);
    };
    return id;
}

ValueId Tape::mul_by(ValueId a, Matrix weights) {
    if (!value(a).same_shape(weights)) throw ShapeError("Tape::mul_by: shape mismatch");
    Matrix y = value(a);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= weights.data()[i];
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a, weights = std::move(weights)]() {
        const Matrix& dy = node(id).grad;
        for (std::size_t i = 0; i < dy.size(); ++i)
            node(a).grad.data()[i] += dy.data()[i] * weights.data()[i];
    };
    return id;
}

ValueId Tape::reshape(ValueId a, std::size_t rows, std::size_t cols) {
    const Matrix& av = value(a);
    if (rows * cols != av.size()) throw ShapeError("Tape::reshape: element count mismatch");
    Matrix y(rows, cols, std::vector<double>(av.data().begin(), av.data().end()));
    ValueId id = push(std::move(y));
    node(id).backprop = [this, id, a]() {
        const Matrix& dy = node(id).grad;
        for (std::size_t i = 0; i < dy.size(); ++i) node(a).grad.data()[i] += dy.data()[i];
    };
    return id;
}

ValueId Tape::sum(ValueId a) {
    double s = 0.0;
    for (double v : value(a).data()) s += v;
    ValueId id = push(Matrix(1, 1, {s}));
    node(id).backprop = [this, id, a]() {
        const double g = node(id).grad(0, 0);
        for (double& v : node(a).grad.data()) v += g;
    };
    return id;
}

ValueId Tape::mean(ValueId a) {
    const double inv = 1.0 / static_cast<double>(value(a).size());
    double s = 0.0;
    for (double v : value(a).data()) s += v;
    ValueId id = push(Matrix(1, 1, {s * inv}));
    node(id).backprop = [this, id, a, inv]() {
        const double g = node(id).grad(0, 0) * inv;
        for (double& v : node(a).grad.data()) v += g;
    };
    return id;
}

ValueId Tape::sum_squares(ValueId a) {
    double s = 0.0;
    for (double v : value(a).data()) s += v * v;
    ValueId id = push(Matrix(1, 1, {s}));
    node(id).backprop = [this, id, a]() {
        const double g = node(id).grad(0, 0);
        const Matrix& av = node(a).value;
        for (std::size_t i = 0; i < av.size(); ++i)
            node(a).grad.data()[i] += 2.0 * g * av.data()[i];
    };
    return id;
}

ValueId Tape::row_cosine_mean(ValueId a, ValueId b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (!av.same_shape(bv)) throw ShapeError("Tape::row_cosine_mean: shape mismatch");
    const std::size_t rows = av.rows();
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        std::span<const double> ar = av.row(r);
        std::span<const double> br = bv.row(r);
        double dot = 0.0, na2 = 0.0, nb2 = 0.0;
        for (std::size_t i = 0; i < ar.size(); ++i) {
            dot += ar[i] * br[i];
            na2 += ar[i] * ar[i];
            nb2 += br[i] * br[i];
        }
        const double denom = std::sqrt(na2) * std::sqrt(nb2);
        if (denom >= kCosineNormFloor) total += dot / denom;
    }
    const double inv_rows = 1.0 / static_cast<double>(rows);
    ValueId id = push(Matrix(1, 1, {total * inv_rows}));
    node(id).backprop = [this, id, a, b, inv_rows]() {
        const double g = node(id).grad(0, 0) * inv_rows;
        const Matrix& av2 = node(a).value;
        const Matrix& bv2 = node(b).value;
        Matrix& da = node(a).grad;
        Matrix& db = node(b).grad;
        for (std::size_t r = 0; r < av2.rows(); ++r) {
            std::span<const double> ar = av2.row(r);
            std::span<const double> br = bv2.row(r);
            double dot = 0.0, na2 = 0.0, nb2 = 0.0;
            for (std::size_t i = 0; i < ar.size(); ++i) {
                dot += ar[i] * br[i];
                na2 += ar[i] * ar[i];
                nb2 += br[i] * br[i];
            }
            const double na = std::sqrt(na2);
            const double nb = std::sqrt(nb2);
            const double denom = na * nb;
            if (denom < kCosineNormFloor) continue;
            const double cosine = dot / denom;
            std::span<double> dar = da.row(r);
            std::span<double> dbr = db.row(r);
            for (std::size_t i = 0; i < ar.size(); ++i) {
                dar[i] += g * (br[i] / denom - cosine * ar[i] / na2);
                dbr[i] += g * (ar[i] / denom - cosine * br[i] / nb2);
            }
        }
    };
    return id;
}

double Tape::scalar_value(ValueId id) const {
    const Matrix& v = value(id);
    if (v.rows() != 1 || v.cols() != 1) throw ShapeError("Tape::scalar_value: node is not 1x1");
    return v(0, 0);
}

void Tape::backward(ValueId output) {
    const Matrix& out = value(output);
    if (out.rows() != 1 || out.cols() != 1) {
        throw ShapeError("Tape::backward: output must be a 1x1 scalar");
    }
    for (ParamStore* s : stores_) s->zero_grads();
    for (Node& n : nodes_) n.grad.fill(0.0);
    nodes_[output.index].grad(0, 0) = 1.0;
    for (std::size_t i = nodes_.size(); i > 0; --i) {
        Node& n = nodes_[i - 1];
        if (n.backprop) n.backprop();
    }
}

}  // namespace enkd
