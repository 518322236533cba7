#include "enkd/losses.hpp"

#include <cmath>
#include <string>

#include "enkd/errors.hpp"
#include "enkd/uncertainty.hpp"

namespace enkd::losses {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kNormFloor = 1e-12;

double log_floored(double p) { return std::log(std::max(p, kProbFloor)); }

void check_variance(double var, const char* who) {
    if (!(var > 0.0)) {
        throw NumericError(std::string(who) + ": non-positive variance");
    }
}

double gaussian_kl_term(double t_mu, double t_var, double s_mu, double s_var,
                        const char* who) {
    check_variance(t_var, who);
    check_variance(s_var, who);
    const double gap = t_mu - s_mu;
    return 0.5 * ((t_var + gap * gap) / s_var + std::log(s_var));
}

// Mean over rows of the rescaled cosine between corresponding rows.
double row_cosine_mean_value(const Matrix& a, const Matrix& b) {
    double total = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        std::span<const double> ar = a.row(r);
        std::span<const double> br = b.row(r);
        double dot = 0.0, na2 = 0.0, nb2 = 0.0;
        for (std::size_t i = 0; i < ar.size(); ++i) {
            dot += ar[i] * br[i];
            na2 += ar[i] * ar[i];
            nb2 += br[i] * br[i];
        }
        const double denom = std::sqrt(na2) * std::sqrt(nb2);
        if (denom >= kNormFloor) total += dot / denom;
    }
    return total / static_cast<double>(a.rows());
}

ValueId add_chain(Tape& tape, std::span<const ValueId> ids) {
    ValueId acc = ids.front();
    for (std::size_t i = 1; i < ids.size(); ++i) acc = tape.add(acc, ids[i]);
    return acc;
}

}  // namespace

double LambdaSchedule::at(std::size_t epoch) const {
    if (kind == Kind::constant) return value;
    if (epoch <= start_epoch) return 0.0;
    if (epoch >= end_epoch) return peak;
    return peak * static_cast<double>(epoch - start_epoch) /
           static_cast<double>(end_epoch - start_epoch);
}

void LambdaSchedule::validate() const {
    if (kind == Kind::constant) {
        if (value < 0.0) throw ConfigError("lambda must be >= 0");
        return;
    }
    if (peak < 0.0) throw ConfigError("lambda ramp peak must be >= 0");
    if (start_epoch >= end_epoch) throw ConfigError("lambda ramp needs start < end");
}

void LossConfig::validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
    if (beta < 0.0 || beta > 1.0) throw ConfigError("beta must lie in [0, 1]");
    if (t_ind < 1.0) throw ConfigError("t_ind must be >= 1");
    if (t_mean < 1.0) throw ConfigError("t_mean must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
    lambda.validate();
}

double l1_classification(const Matrix& student_probs, int label) {
    const std::size_t heads = student_probs.rows();
    if (heads == 0) throw ShapeError("l1_classification: no head rows");
    if (label < 0 || static_cast<std::size_t>(label) >= student_probs.cols()) {
        throw ShapeError("l1_classification: label out of range");
    }
    double total = 0.0;
    for (std::size_t m = 0; m < heads; ++m) {
        total -= log_floored(student_probs(m, static_cast<std::size_t>(label)));
    }
    return total / static_cast<double>(heads);
}

double l1_regression(std::span<const MeanVar> heads, double y) {
    if (heads.empty()) throw ShapeError("l1_regression: no heads");
    double total = 0.0;
    for (const MeanVar& g : heads) {
        check_variance(g.var, "l1_regression");
        const double gap = g.mean - y;
        total += gap * gap / g.var + std::log(g.var);
    }
    return total / (2.0 * static_cast<double>(heads.size()));
}

namespace {

std::vector<double> mean_softmax_rows(const Matrix& logits, double temperature) {
    std::vector<double> mean(logits.cols(), 0.0);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const std::vector<double> p = softmax(logits.row(r), temperature);
        for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
    }
    for (double& v : mean) v /= static_cast<double>(logits.rows());
    return mean;
}

}  // namespace

double l2_classification(const Matrix& teacher_logits, const Matrix& student_logits,
                         double t_mean) {
    if (teacher_logits.cols() != student_logits.cols()) {
        throw ShapeError("l2_classification: class count mismatch");
    }
    const std::vector<double> t_mean_probs = mean_softmax_rows(teacher_logits, t_mean);
    const std::vector<double> s_mean_probs = mean_softmax_rows(student_logits, t_mean);
    double ce = 0.0;
    for (std::size_t k = 0; k < t_mean_probs.size(); ++k) {
        ce -= t_mean_probs[k] * log_floored(s_mean_probs[k]);
    }
    return ce;
}

MeanVar aggregate_gaussians(std::span<const MeanVar> members) {
    const auto triple = uncertainty::decompose_regression(members);
    double mean = 0.0;
    for (const MeanVar& g : members) mean += g.mean;
    mean /= static_cast<double>(members.size());
    return MeanVar{mean, triple.predictive};
}

double l2_regression(std::span<const MeanVar> teacher, std::span<const MeanVar> student) {
    const MeanVar t = aggregate_gaussians(teacher);
    const MeanVar s = aggregate_gaussians(student);
    return gaussian_kl_term(t.mean, t.var, s.mean, s.var, "l2_regression");
}

double l3_classification(const Matrix& teacher_logits, const Matrix& student_logits,
                         double t_ind) {
    const std::size_t n_teachers = teacher_logits.rows();
    const std::size_t n_heads = student_logits.rows();
    if (n_heads > n_teachers) {
        throw ConfigError("l3_classification: more heads than teacher members");
    }
    if (teacher_logits.cols() != student_logits.cols()) {
        throw ShapeError("l3_classification: class count mismatch");
    }
    std::vector<std::vector<double>> head_probs(n_heads);
    for (std::size_t m = 0; m < n_heads; ++m) {
        head_probs[m] = softmax(student_logits.row(m), t_ind);
    }
    double total = 0.0;
    for (std::size_t n = 0; n < n_teachers; ++n) {
        const std::vector<double> t = softmax(teacher_logits.row(n), t_ind);
        const std::vector<double>& s = head_probs[n % n_heads];
        for (std::size_t k = 0; k < t.size(); ++k) total -= t[k] * log_floored(s[k]);
    }
    return total / static_cast<double>(n_teachers);
}

double l3_regression(std::span<const MeanVar> teacher, std::span<const MeanVar> student) {
    if (student.size() > teacher.size()) {
        throw ConfigError("l3_regression: more heads than teacher members");
    }
    double total = 0.0;
    for (std::size_t n = 0; n < teacher.size(); ++n) {
        const MeanVar& t = teacher[n];
        const MeanVar& s = student[n % student.size()];
        total += gaussian_kl_term(t.mean, t.var, s.mean, s.var, "l3_regression");
    }
    return total / static_cast<double>(teacher.size());
}

double l4_diversity(const std::vector<std::vector<Matrix>>& head_layer_weights) {
    const std::size_t heads = head_layer_weights.size();
    if (heads < 2) throw ShapeError("l4_diversity: need at least 2 heads");
    const std::size_t layers = head_layer_weights.front().size();
    for (const auto& head : head_layer_weights) {
        if (head.size() != layers) throw ShapeError("l4_diversity: layer count mismatch");
        for (std::size_t l = 0; l < layers; ++l) {
            if (!head[l].same_shape(head_layer_weights.front()[l])) {
                throw ShapeError("l4_diversity: weight shape mismatch across heads");
            }
        }
    }
    double total = 0.0;
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix mean = head_layer_weights.front()[l];
        for (std::size_t m = 1; m < heads; ++m) {
            const Matrix& w = head_layer_weights[m][l];
            for (std::size_t i = 0; i < mean.size(); ++i) mean.data()[i] += w.data()[i];
        }
        for (double& v : mean.data()) v /= static_cast<double>(heads);
        for (std::size_t m = 0; m < heads; ++m) {
            const double c = row_cosine_mean_value(head_layer_weights[m][l], mean);
            total += 0.5 * (1.0 + c);
        }
    }
    return total;
}

double total_loss(const LossConfig& cfg, double l1, double l2, double l3, double l4,
                  std::size_t epoch, double param_sum_squares) {
    const double lambda = cfg.lambda.at(epoch);
    const double f_mean = cfg.t_mean > 1.0 ? cfg.t_mean * cfg.t_mean : 1.0;
    const double f_ind = cfg.t_ind > 1.0 ? cfg.t_ind * cfg.t_ind : 1.0;
    return (1.0 - cfg.alpha) * l1 +
           cfg.alpha * ((1.0 - cfg.beta) * f_mean * l2 + cfg.beta * f_ind * l3) +
           lambda * l4 + 0.5 * cfg.weight_decay * param_sum_squares;
}

ValueId l1_classification_node(Tape& tape, std::span<const ValueId> head_logits,
                               const std::vector<int>& labels) {
    const std::size_t heads = head_logits.size();
    const std::size_t batch = labels.size();
    ValueId acc;
    for (ValueId logits : head_logits) {
        ValueId logp = tape.log_floored(tape.softmax_rows(logits, 1.0), kProbFloor);
        ValueId picked = tape.sum(tape.pick_class(logp, labels));
        acc = acc.valid() ? tape.add(acc, picked) : picked;
    }
    return tape.scale(acc, -1.0 / static_cast<double>(heads * batch));
}

ValueId l1_regression_node(Tape& tape, std::span<const ValueId> head_raw,
                           const std::vector<double>& targets) {
    const std::size_t heads = head_raw.size();
    const std::size_t batch = targets.size();
    const Matrix y = Matrix::column_vector(targets);
    ValueId acc;
    for (ValueId raw : head_raw) {
        ValueId mu = tape.column(raw, 0);
        ValueId log_var = tape.column(raw, 1);
        ValueId var = tape.exp(log_var);
        ValueId resid = tape.sub(mu, tape.constant(y));
        ValueId term = tape.add(tape.div(tape.mul(resid, resid), var), log_var);
        ValueId s = tape.sum(term);
        acc = acc.valid() ? tape.add(acc, s) : s;
    }
    return tape.scale(acc, 0.5 / static_cast<double>(heads * batch));
}

ValueId l2_classification_node(Tape& tape, const Matrix& teacher_mean_probs,
                               std::span<const ValueId> head_logits, double t_mean) {
    const std::size_t heads = head_logits.size();
    const std::size_t batch = teacher_mean_probs.rows();
    std::vector<ValueId> probs;
    probs.reserve(heads);
    for (ValueId logits : head_logits) probs.push_back(tape.softmax_rows(logits, t_mean));
    ValueId mean_probs = tape.scale(add_chain(tape, probs), 1.0 / static_cast<double>(heads));
    ValueId logp = tape.log_floored(mean_probs, kProbFloor);
    ValueId weighted = tape.mul_by(logp, teacher_mean_probs);
    return tape.scale(tape.sum(weighted), -1.0 / static_cast<double>(batch));
}

namespace {

struct HeadGaussianNodes {
    std::vector<ValueId> mu;
    std::vector<ValueId> log_var;
    std::vector<ValueId> var;
};

HeadGaussianNodes split_head_gaussians(Tape& tape, std::span<const ValueId> head_raw) {
    HeadGaussianNodes nodes;
    for (ValueId raw : head_raw) {
        nodes.mu.push_back(tape.column(raw, 0));
        nodes.log_var.push_back(tape.column(raw, 1));
        nodes.var.push_back(tape.exp(nodes.log_var.back()));
    }
    return nodes;
}

}  // namespace

ValueId l2_regression_node(Tape& tape, const Matrix& teacher_aggregate,
                           std::span<const ValueId> head_raw) {
    const std::size_t heads = head_raw.size();
    const std::size_t batch = teacher_aggregate.rows();
    const double inv_heads = 1.0 / static_cast<double>(heads);
    HeadGaussianNodes h = split_head_gaussians(tape, head_raw);

    ValueId mu_bar = tape.scale(add_chain(tape, h.mu), inv_heads);
    ValueId aleatoric = tape.scale(add_chain(tape, h.var), inv_heads);
    std::vector<ValueId> sq_gaps;
    sq_gaps.reserve(heads);
    for (ValueId mu : h.mu) {
        ValueId d = tape.sub(mu, mu_bar);
        sq_gaps.push_back(tape.mul(d, d));
    }
    ValueId spread = tape.scale(add_chain(tape, sq_gaps), inv_heads);
    ValueId student_var = tape.add(aleatoric, spread);

    Matrix t_mu(batch, 1), t_var(batch, 1);
    for (std::size_t b = 0; b < batch; ++b) {
        t_mu(b, 0) = teacher_aggregate(b, 0);
        t_var(b, 0) = teacher_aggregate(b, 1);
    }
    ValueId gap = tape.sub(tape.constant(t_mu), mu_bar);
    ValueId numer = tape.add(tape.constant(t_var), tape.mul(gap, gap));
    ValueId term = tape.add(tape.div(numer, student_var), tape.log(student_var));
    return tape.scale(tape.sum(term), 0.5 / static_cast<double>(batch));
}

ValueId l3_classification_node(Tape& tape, std::span<const Matrix> teacher_probs,
                               std::span<const ValueId> head_logits, double t_ind) {
    const std::size_t n_teachers = teacher_probs.size();
    const std::size_t n_heads = head_logits.size();
    if (n_heads > n_teachers) {
        throw ConfigError("l3_classification_node: more heads than teacher members");
    }
    const std::size_t batch = teacher_probs.front().rows();
    std::vector<ValueId> logp;
    logp.reserve(n_heads);
    for (ValueId logits : head_logits) {
        logp.push_back(tape.log_floored(tape.softmax_rows(logits, t_ind), kProbFloor));
    }
    ValueId acc;
    for (std::size_t n = 0; n < n_teachers; ++n) {
        ValueId s = tape.sum(tape.mul_by(logp[n % n_heads], teacher_probs[n]));
        acc = acc.valid() ? tape.add(acc, s) : s;
    }
    return tape.scale(acc, -1.0 / static_cast<double>(n_teachers * batch));
}

ValueId l3_regression_node(Tape& tape, std::span<const Matrix> teacher_stats,
                           std::span<const ValueId> head_raw) {
    const std::size_t n_teachers = teacher_stats.size();
    const std::size_t n_heads = head_raw.size();
    if (n_heads > n_teachers) {
        throw ConfigError("l3_regression_node: more heads than teacher members");
    }
    const std::size_t batch = teacher_stats.front().rows();
    HeadGaussianNodes h = split_head_gaussians(tape, head_raw);
    ValueId acc;
    for (std::size_t n = 0; n < n_teachers; ++n) {
        const std::size_t m = n % n_heads;
        Matrix t_mu(batch, 1), t_var(batch, 1);
        for (std::size_t b = 0; b < batch; ++b) {
            t_mu(b, 0) = teacher_stats[n](b, 0);
            t_var(b, 0) = teacher_stats[n](b, 1);
        }
        ValueId gap = tape.sub(tape.constant(t_mu), h.mu[m]);
        ValueId numer = tape.add(tape.constant(t_var), tape.mul(gap, gap));
        ValueId term = tape.add(tape.div(numer, h.var[m]), h.log_var[m]);
        ValueId s = tape.sum(term);
        acc = acc.valid() ? tape.add(acc, s) : s;
    }
    return tape.scale(acc, 0.5 / static_cast<double>(n_teachers * batch));
}

ValueId l4_diversity_node(Tape& tape,
                          const std::vector<std::vector<ValueId>>& head_layer_weights) {
    const std::size_t heads = head_layer_weights.size();
    if (heads < 2) throw ShapeError("l4_diversity_node: need at least 2 heads");
    const std::size_t layers = head_layer_weights.front().size();
    ValueId acc;
    for (std::size_t l = 0; l < layers; ++l) {
        // The per-step head mean enters as a constant: each head is repelled
        // from the current mean, no gradient flows through the mean itself.
        Matrix mean = tape.value(head_layer_weights[0][l]);
        for (std::size_t m = 1; m < heads; ++m) {
            const Matrix& w = tape.value(head_layer_weights[m][l]);
            for (std::size_t i = 0; i < mean.size(); ++i) mean.data()[i] += w.data()[i];
        }
        for (double& v : mean.data()) v /= static_cast<double>(heads);
        ValueId mean_node = tape.constant(std::move(mean));
        for (std::size_t m = 0; m < heads; ++m) {
            ValueId cos = tape.row_cosine_mean(head_layer_weights[m][l], mean_node);
            ValueId term = tape.scale(tape.add_scalar(cos, 1.0), 0.5);
            acc = acc.valid() ? tape.add(acc, term) : term;
        }
    }
    return acc;
}

ValueId total_loss_node(Tape& tape, const LossConfig& cfg, std::size_t epoch, ValueId l1,
                        ValueId l2, ValueId l3, ValueId l4, ValueId param_sum_squares) {
    const double lambda = cfg.lambda.at(epoch);
    const double f_mean = cfg.t_mean > 1.0 ? cfg.t_mean * cfg.t_mean : 1.0;
    const double f_ind = cfg.t_ind > 1.0 ? cfg.t_ind * cfg.t_ind : 1.0;
    ValueId out = tape.scale(l1, 1.0 - cfg.alpha);
    out = tape.add(out, tape.scale(l2, cfg.alpha * (1.0 - cfg.beta) * f_mean));
    out = tape.add(out, tape.scale(l3, cfg.alpha * cfg.beta * f_ind));
    out = tape.add(out, tape.scale(l4, lambda));
    if (param_sum_squares.valid() && cfg.weight_decay > 0.0) {
        out = tape.add(out, tape.scale(param_sum_squares, 0.5 * cfg.weight_decay));
    }
    return out;
}

}  // namespace enkd::losses
