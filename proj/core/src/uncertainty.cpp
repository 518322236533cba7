#include "enkd/uncertainty.hpp"

#include <cmath>
#include <string>

#include "enkd/errors.hpp"

namespace enkd::uncertainty {

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

UncertaintyTriple decompose_classification(const Matrix& member_probs) {
    const std::size_t members = member_probs.rows();
    if (members == 0) throw ShapeError("decompose_classification: no member rows");
    std::vector<double> mean(member_probs.cols(), 0.0);
    double mean_entropy = 0.0;
    for (std::size_t s = 0; s < members; ++s) {
        std::span<const double> row = member_probs.row(s);
        double sum = 0.0;
        for (double p : row) sum += p;
        if (std::abs(sum - 1.0) > 1e-6) {
            throw NumericError("decompose_classification: row " + std::to_string(s) +
                               " is not normalised (sum " + std::to_string(sum) + ")");
        }
        for (std::size_t k = 0; k < row.size(); ++k) mean[k] += row[k];
        mean_entropy += entropy(row);
    }
    for (double& p : mean) p /= static_cast<double>(members);
    mean_entropy /= static_cast<double>(members);

    UncertaintyTriple triple;
    triple.predictive = entropy(mean);
    triple.aleatoric = mean_entropy;
    triple.epistemic = triple.predictive - triple.aleatoric;
    return triple;
}

UncertaintyTriple decompose_regression(std::span<const models::MeanVar> members) {
    if (members.empty()) throw ShapeError("decompose_regression: no members");
    double mean = 0.0, aleatoric = 0.0;
    for (const auto& g : members) {
        if (!(g.var > 0.0)) throw NumericError("decompose_regression: non-positive variance");
        mean += g.mean;
        aleatoric += g.var;
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    mean *= inv;
    aleatoric *= inv;
    double spread = 0.0;
    for (const auto& g : members) spread += (g.mean - mean) * (g.mean - mean);
    spread *= inv;  // population variance

    UncertaintyTriple triple;
    triple.aleatoric = aleatoric;
    triple.epistemic = spread;
    triple.predictive = aleatoric + spread;
    return triple;
}

UncertaintyTriple decompose(const models::MemberPredictions& members) {
    return members.task == TaskKind::classification
               ? decompose_classification(members.probs)
               : decompose_regression(members.gaussians);
}

}  // namespace enkd::uncertainty
