#include "enkd/optim.hpp"

#include <cmath>
#include <numbers>

#include "enkd/errors.hpp"

namespace enkd {

AdamState::AdamState(const ParamStore& store, double beta1, double beta2, double eps)
    : beta1(beta1), beta2(beta2), eps(eps) {
    m.reserve(store.size());
    v.reserve(store.size());
    for (const auto& t : store) {
        m.emplace_back(t.value.rows(), t.value.cols());
        v.emplace_back(t.value.rows(), t.value.cols());
    }
}

void adam_step(ParamStore& store, AdamState& state, double lr) {
    if (state.m.size() != store.size()) {
        throw ShapeError("adam_step: state does not match store");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t p = 0; p < store.size(); ++p) {
        ParamTensor& tensor = store.at(p);
        std::span<const double> g = tensor.grad.data();
        std::span<double> theta = tensor.value.data();
        std::span<double> m = state.m[p].data();
        std::span<double> v = state.v[p].data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw TrainingError("adam_step: non-finite gradient in parameter '" +
                                    tensor.name + "'");
            }
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
            if (!std::isfinite(theta[i])) {
                throw TrainingError("adam_step: non-finite value in parameter '" + tensor.name +
                                    "' after update");
            }
        }
    }
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0) {
    const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double clip_global_norm(ParamStore& store, double max_norm) {
    double sq = 0.0;
    for (const auto& t : store)
        for (double g : t.grad.data()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return 1.0;
    const double scale = max_norm / norm;
    for (auto& t : store)
        for (double& g : t.grad.data()) g *= scale;
    return scale;
}

}  // namespace enkd
