#pragma once

#include <span>

#include "enkd/models.hpp"

namespace enkd::uncertainty {

// predictive = aleatoric + epistemic holds exactly by construction.
struct UncertaintyTriple {
    double predictive = 0.0;
    double aleatoric = 0.0;
    double epistemic = 0.0;
};

// Shannon entropy in nats; 0 * log 0 counts as 0.
double entropy(std::span<const double> probs);

// Entropy of the member mean, mean of member entropies, and their gap
// (mutual information). Rows must each sum to 1 within 1e-6.
UncertaintyTriple decompose_classification(const Matrix& member_probs);

// Mean aleatoric variance plus the population variance of member means.
UncertaintyTriple decompose_regression(std::span<const models::MeanVar> members);

UncertaintyTriple decompose(const models::MemberPredictions& members);

}  // namespace enkd::uncertainty
