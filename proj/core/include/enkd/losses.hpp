#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "enkd/autodiff.hpp"
#include "enkd/matrix.hpp"
#include "enkd/models.hpp"

namespace enkd::losses {

using models::MeanVar;

// Weighting of the diversity term over epochs: constant, or zero until
// start_epoch then linear to `peak` at end_epoch and flat afterwards.
struct LambdaSchedule {
    enum class Kind { constant, ramp };
    Kind kind = Kind::constant;
    double value = 0.0;  // constant
    std::size_t start_epoch = 0;
    std::size_t end_epoch = 0;
    double peak = 0.0;

    double at(std::size_t epoch) const;
    void validate() const;
};

struct LossConfig {
    double alpha = 0.9;
    double beta = 0.5;
    LambdaSchedule lambda;
    double t_ind = 1.0;
    double t_mean = 1.0;
    double weight_decay = 0.0;

    void validate() const;
};

// ---- pure per-example forms -------------------------------------------
// Classification losses take logits and apply the temperature-softened
// softmax internally; regression losses take (mean, variance) pairs.
// Constant terms that do not depend on the student are dropped throughout.

// Mean cross-entropy of the head probabilities at the true label.
double l1_classification(const Matrix& student_probs, int label);

// Gaussian negative log-likelihood averaged over heads, constants dropped.
double l1_regression(std::span<const MeanVar> heads, double y);

// Cross-entropy between the teacher-mean and student-mean distributions,
// both softened by t_mean before the softmax.
double l2_classification(const Matrix& teacher_logits, const Matrix& student_logits,
                         double t_mean);

// Gaussian KL between the aggregated teacher and aggregated student
// (mean of means, mean aleatoric variance plus variance of means).
double l2_regression(std::span<const MeanVar> teacher, std::span<const MeanVar> student);

// Per-member cross-entropy against head n % M, softened by t_ind.
double l3_classification(const Matrix& teacher_logits, const Matrix& student_logits,
                         double t_ind);

double l3_regression(std::span<const MeanVar> teacher, std::span<const MeanVar> student);

// Sum over layers and heads of (1 + cos(head, head-mean)) / 2, where the
// cosine is taken per node (weight row) and averaged within the layer.
// Rows whose norm product vanishes contribute cos = 0.
double l4_diversity(const std::vector<std::vector<Matrix>>& head_layer_weights);

// (1-a) L1 + a((1-b) L2 + b L3) + lambda(epoch) L4, the L2/L3 terms
// rescaled by t^2 when the matching temperature exceeds 1, plus
// (wd/2) * param_sum_squares.
double total_loss(const LossConfig& cfg, double l1, double l2, double l3, double l4,
                  std::size_t epoch, double param_sum_squares = 0.0);

// Mean of means plus the complete predictive variance (mean aleatoric
// variance plus variance of means).
MeanVar aggregate_gaussians(std::span<const MeanVar> members);

// ---- tape forms used during training ----------------------------------
// Head outputs are (B, K) logit nodes or (B, 2) raw (mean, log-variance)
// nodes; teacher quantities are baked in as constants. All forms average
// over the batch.

ValueId l1_classification_node(Tape& tape, std::span<const ValueId> head_logits,
                               const std::vector<int>& labels);
ValueId l1_regression_node(Tape& tape, std::span<const ValueId> head_raw,
                           const std::vector<double>& targets);
ValueId l2_classification_node(Tape& tape, const Matrix& teacher_mean_probs,
                               std::span<const ValueId> head_logits, double t_mean);
// teacher_aggregate is (B, 2): combined mean and predictive variance.
ValueId l2_regression_node(Tape& tape, const Matrix& teacher_aggregate,
                           std::span<const ValueId> head_raw);
// teacher_probs[n] is (B, K) already softened by t_ind.
ValueId l3_classification_node(Tape& tape, std::span<const Matrix> teacher_probs,
                               std::span<const ValueId> head_logits, double t_ind);
// teacher_stats[n] is (B, 2): member mean and aleatoric variance.
ValueId l3_regression_node(Tape& tape, std::span<const Matrix> teacher_stats,
                           std::span<const ValueId> head_raw);
// Same value as l4_diversity, but the per-step head mean is a frozen
// argument: gradients push each head away from the current mean and do not
// flow through the mean itself.
ValueId l4_diversity_node(Tape& tape,
                          const std::vector<std::vector<ValueId>>& head_layer_weights);
ValueId total_loss_node(Tape& tape, const LossConfig& cfg, std::size_t epoch, ValueId l1,
                        ValueId l2, ValueId l3, ValueId l4, ValueId param_sum_squares);

}  // namespace enkd::losses
