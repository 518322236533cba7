#pragma once

#include <cstddef>
#include <vector>

#include "enkd/nn.hpp"

namespace enkd {

// Adam moment buffers shaped like the parameters they track.
struct AdamState {
    explicit AdamState(const ParamStore& store, double beta1 = 0.9, double beta2 = 0.999,
                       double eps = 1e-8);

    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::size_t step = 0;
    double beta1;
    double beta2;
    double eps;
};

// Bias-corrected Adam update from the store's gradient buffers. A NaN or Inf
// gradient or post-update parameter aborts with the offending tensor's name.
void adam_step(ParamStore& store, AdamState& state, double lr);

// lr0 * 0.5 * (1 + cos(pi * epoch / total_epochs))
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0);

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the applied scale (1.0 when untouched).
double clip_global_norm(ParamStore& store, double max_norm);

}  // namespace enkd
