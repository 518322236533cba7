#include "enkd/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "enkd/errors.hpp"
#include "enkd/optim.hpp"
#include "enkd/rng.hpp"

namespace enkd::train {

namespace {

using models::LayerRef;
using models::MeanVar;

// Forward a layer stack on the tape; returns the output node and appends
// every parameter node to `param_nodes`.
ValueId stack_forward_node(Tape& tape, ParamStore& params, const std::vector<LayerRef>& layers,
                           ValueId x, bool relu_after_last, std::vector<ValueId>& param_nodes,
                           std::vector<ValueId>* weight_nodes = nullptr) {
    ValueId h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        ValueId w = tape.param(params, layers[l].weight);
        ValueId b = tape.param(params, layers[l].bias);
        param_nodes.push_back(w);
        param_nodes.push_back(b);
        if (weight_nodes) weight_nodes->push_back(w);
        h = tape.linear(h, w, b);
        if (relu_after_last || l + 1 < layers.size()) h = tape.relu(h);
    }
    return h;
}

ValueId sum_squares_chain(Tape& tape, std::span<const ValueId> param_nodes) {
    ValueId acc;
    for (ValueId p : param_nodes) {
        ValueId s = tape.sum_squares(p);
        acc = acc.valid() ? tape.add(acc, s) : s;
    }
    return acc;
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), src.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::span<const double> r = src.row(rows[i]);
        std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + stop);
    }
    return batches;
}

void check_finite_loss(double loss, const std::string& who) {
    if (!std::isfinite(loss)) {
        throw TrainingError(who + ": loss is not finite, aborting");
    }
}

// Combined prediction over member raw outputs for every row of a batch.
Matrix combined_probs(const std::vector<Matrix>& raw_outputs) {
    const std::size_t batch = raw_outputs.front().rows();
    const std::size_t k = raw_outputs.front().cols();
    Matrix mean(batch, k);
    for (const Matrix& raw : raw_outputs) {
        for (std::size_t b = 0; b < batch; ++b) {
            const std::vector<double> p = softmax(raw.row(b));
            for (std::size_t j = 0; j < k; ++j) mean(b, j) += p[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(raw_outputs.size());
    for (double& v : mean.data()) v *= inv;
    return mean;
}

std::vector<MeanVar> gaussians_at_row(const std::vector<Matrix>& raw_outputs, std::size_t row) {
    std::vector<MeanVar> out;
    out.reserve(raw_outputs.size());
    for (const Matrix& raw : raw_outputs) {
        out.push_back(MeanVar{raw(row, 0), std::exp(raw(row, 1))});
    }
    return out;
}

std::vector<MeanVar> combined_gaussians(const std::vector<Matrix>& raw_outputs) {
    const std::size_t batch = raw_outputs.front().rows();
    std::vector<MeanVar> out;
    out.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        out.push_back(losses::aggregate_gaussians(gaussians_at_row(raw_outputs, b)));
    }
    return out;
}

double validation_metric(TaskKind task, const std::vector<Matrix>& raw_outputs,
                         const data::LabelledSet& val) {
    if (task == TaskKind::classification) {
        return metrics::error_rate(combined_probs(raw_outputs), val.labels);
    }
    return metrics::nll_gaussian(combined_gaussians(raw_outputs), val.values);
}

}  // namespace

void RunConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be > 0");
    if (batch_size == 0) throw ConfigError("batch_size must be > 0");
    if (teacher_members < 1) throw ConfigError("need at least one teacher member");
    if (student_arch.heads > teacher_members) {
        throw ConfigError("student heads must not exceed teacher members");
    }
    if (!(teacher_lr0 > 0.0) || !(student_lr0 > 0.0)) throw ConfigError("lr0 must be > 0");
    if (teacher_weight_decay < 0.0) throw ConfigError("teacher weight decay must be >= 0");
    if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be > 0");
    loss.validate();
    if (loss.lambda.kind == losses::LambdaSchedule::Kind::ramp &&
        loss.lambda.end_epoch > epochs) {
        throw ConfigError("lambda ramp must end within the epoch budget");
    }
    teacher_arch.validate();
    student_arch.validate();
    if (teacher_arch.task != task || student_arch.task != task) {
        throw ConfigError("architecture task does not match run task");
    }
}

RunConfig default_run_config(TaskKind task, std::uint64_t seed, std::size_t heads) {
    RunConfig cfg;
    cfg.task = task;
    cfg.seed = seed;
    cfg.teacher_arch = models::toy_teacher_spec(task);
    cfg.student_arch = models::toy_student_spec(task, heads);
    cfg.loss.weight_decay = 1e-8;
    cfg.loss.alpha = 0.9;
    cfg.loss.beta = 0.5;
    if (task == TaskKind::classification) {
        cfg.teacher_lr0 = 0.01;
        cfg.student_lr0 = 0.01;
        cfg.teacher_weight_decay = 1e-4;
        cfg.loss.t_ind = 3.0;
        cfg.loss.t_mean = 1.0;
        cfg.loss.lambda.kind = losses::LambdaSchedule::Kind::constant;
        cfg.loss.lambda.value = heads <= 5 ? 9.0 : heads <= 10 ? 7.0 : 4.0;
    } else {
        cfg.teacher_lr0 = 0.05;
        cfg.student_lr0 = 0.05;
        cfg.teacher_weight_decay = 1e-5;
        cfg.loss.t_ind = 1.0;
        cfg.loss.t_mean = 1.0;
        cfg.loss.lambda.kind = losses::LambdaSchedule::Kind::ramp;
        cfg.loss.lambda.start_epoch = 50;
        cfg.loss.lambda.end_epoch = 150;
        cfg.loss.lambda.peak = heads <= 5 ? 0.6 : heads <= 10 ? 0.02 : 2e-3;
    }
    return cfg;
}

double lambda_at(const losses::LambdaSchedule& schedule, std::size_t epoch) {
    return schedule.at(epoch);
}

void write_metric_log(std::ostream& os, const MetricLog& log) {
    char buf[512];
    for (const EpochRecord& r : log) {
        std::snprintf(buf, sizeof(buf),
                      "{\"member\":%d,\"epoch\":%zu,\"lr\":%.17g,\"lambda\":%.17g,"
                      "\"l1\":%.17g,\"l2\":%.17g,\"l3\":%.17g,\"l4\":%.17g,"
                      "\"total\":%.17g,\"val_metric\":%.17g}\n",
                      r.member, r.epoch, r.lr, r.lambda, r.l1, r.l2, r.l3, r.l4, r.total,
                      r.val_metric);
        os << buf;
    }
}

TrainedTeacher train_teacher(const RunConfig& cfg, const data::DatasetSplits& dataset) {
    cfg.validate();
    const bool classification = cfg.task == TaskKind::classification;
    TrainedTeacher out;
    out.ensemble = models::build_ensemble(cfg.teacher_arch, cfg.teacher_members, cfg.seed);

    const std::size_t n_train = dataset.train.size();
    for (std::size_t n = 0; n < cfg.teacher_members; ++n) {
        models::Mlp& member = out.ensemble.members[n];
        AdamState adam(member.params);
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            const double lr = cosine_lr(epoch, cfg.epochs, cfg.teacher_lr0);
            Rng shuffle_rng(mix_seed(cfg.seed, n + 1, epoch));
            double epoch_data_loss = 0.0;
            double epoch_total_loss = 0.0;
            for (const auto& batch : make_batches(n_train, cfg.batch_size, shuffle_rng)) {
                Tape tape;
                ValueId x = tape.constant(gather_rows(dataset.train.inputs, batch));
                std::vector<ValueId> param_nodes;
                ValueId raw = stack_forward_node(tape, member.params, member.layers, x,
                                                 /*relu_after_last=*/false, param_nodes);
                ValueId data_loss;
                if (classification) {
                    std::vector<int> labels(batch.size());
                    for (std::size_t i = 0; i < batch.size(); ++i) {
                        labels[i] = dataset.train.labels[batch[i]];
                    }
                    data_loss = losses::l1_classification_node(tape, {&raw, 1}, labels);
                } else {
                    std::vector<double> targets(batch.size());
                    for (std::size_t i = 0; i < batch.size(); ++i) {
                        targets[i] = dataset.train.values[batch[i]];
                    }
                    data_loss = losses::l1_regression_node(tape, {&raw, 1}, targets);
                }
                ValueId total = data_loss;
                if (cfg.teacher_weight_decay > 0.0) {
                    ValueId ss = sum_squares_chain(tape, param_nodes);
                    total = tape.add(total, tape.scale(ss, 0.5 * cfg.teacher_weight_decay));
                }
                const double loss_value = tape.scalar_value(total);
                if (!std::isfinite(loss_value)) {
                    throw TrainingError("train_teacher: member " + std::to_string(n) +
                                        " diverged (non-finite loss)");
                }
                tape.backward(total);
                clip_global_norm(member.params, cfg.clip_norm);
                adam_step(member.params, adam, lr);
                const double w = static_cast<double>(batch.size()) / static_cast<double>(n_train);
                epoch_data_loss += w * tape.scalar_value(data_loss);
                epoch_total_loss += w * loss_value;
            }
            EpochRecord record;
            record.member = static_cast<int>(n);
            record.epoch = epoch;
            record.lr = lr;
            record.l1 = epoch_data_loss;
            record.total = epoch_total_loss;
            const auto raw_val = models::mlp_raw_outputs(member, dataset.val.inputs);
            record.val_metric = validation_metric(cfg.task, {raw_val}, dataset.val);
            out.log.push_back(record);
        }
    }
    return out;
}

namespace {

// Frozen teacher quantities on the training inputs, precomputed once.
struct TeacherCache {
    // classification
    Matrix mean_probs_at_t_mean;       // (n, K)
    std::vector<Matrix> probs_at_t_ind;  // N x (n, K)
    // regression
    Matrix aggregate;                  // (n, 2): combined mean, predictive variance
    std::vector<Matrix> member_stats;  // N x (n, 2): member mean, aleatoric variance
};

TeacherCache build_teacher_cache(const models::EnsembleTeacher& teacher,
                                 const data::LabelledSet& training_set,
                                 const losses::LossConfig& loss) {
    TeacherCache cache;
    const std::vector<Matrix> raw = models::ensemble_raw_outputs(teacher, training_set.inputs);
    const std::size_t n_rows = training_set.size();
    if (teacher.spec().task == TaskKind::classification) {
        const std::size_t k = raw.front().cols();
        cache.mean_probs_at_t_mean = Matrix(n_rows, k);
        for (const Matrix& member_raw : raw) {
            const Matrix probs = softmax_rows(member_raw, loss.t_mean);
            for (std::size_t i = 0; i < probs.size(); ++i) {
                cache.mean_probs_at_t_mean.data()[i] += probs.data()[i];
            }
        }
        const double inv = 1.0 / static_cast<double>(raw.size());
        for (double& v : cache.mean_probs_at_t_mean.data()) v *= inv;
        cache.probs_at_t_ind.reserve(raw.size());
        for (const Matrix& member_raw : raw) {
            cache.probs_at_t_ind.push_back(softmax_rows(member_raw, loss.t_ind));
        }
    } else {
        cache.aggregate = Matrix(n_rows, 2);
        cache.member_stats.assign(raw.size(), Matrix(n_rows, 2));
        for (std::size_t b = 0; b < n_rows; ++b) {
            const std::vector<MeanVar> members = gaussians_at_row(raw, b);
            for (std::size_t s = 0; s < members.size(); ++s) {
                cache.member_stats[s](b, 0) = members[s].mean;
                cache.member_stats[s](b, 1) = members[s].var;
            }
            const MeanVar agg = losses::aggregate_gaussians(members);
            cache.aggregate(b, 0) = agg.mean;
            cache.aggregate(b, 1) = agg.var;
        }
    }
    return cache;
}

std::vector<Matrix> gather_cache_rows(const std::vector<Matrix>& src,
                                      std::span<const std::size_t> rows) {
    std::vector<Matrix> out;
    out.reserve(src.size());
    for (const Matrix& m : src) out.push_back(gather_rows(m, rows));
    return out;
}

}  // namespace

TrainedStudent distill_student(const models::EnsembleTeacher& teacher, const RunConfig& cfg,
                               const data::DatasetSplits& dataset) {
    cfg.validate();
    if (teacher.spec().task != cfg.task) {
        throw ConfigError("distill_student: teacher task does not match run task");
    }
    const bool classification = cfg.task == TaskKind::classification;
    const std::size_t n_teachers = teacher.size();
    const std::size_t n_heads = cfg.student_arch.heads;
    if (n_heads > n_teachers) {
        throw ConfigError("distill_student: more heads than teacher members");
    }

    TrainedStudent out;
    out.net = models::build_student(cfg.student_arch, cfg.seed + cfg.teacher_members);
    out.teachers_per_head.assign(n_heads, 0);
    for (std::size_t n = 0; n < n_teachers; ++n) out.teachers_per_head[n % n_heads] += 1;

    const TeacherCache cache = build_teacher_cache(teacher, dataset.train, cfg.loss);
    const std::size_t n_train = dataset.train.size();
    AdamState adam(out.net.params);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, cfg.epochs, cfg.student_lr0);
        const double lambda = cfg.loss.lambda.at(epoch);
        Rng shuffle_rng(mix_seed(cfg.seed, 0, epoch));
        double sums[5] = {0, 0, 0, 0, 0};  // l1..l4, total
        for (const auto& batch : make_batches(n_train, cfg.batch_size, shuffle_rng)) {
            Tape tape;
            ValueId x = tape.constant(gather_rows(dataset.train.inputs, batch));
            std::vector<ValueId> param_nodes;
            ValueId shared = stack_forward_node(tape, out.net.params, out.net.core, x,
                                                /*relu_after_last=*/true, param_nodes);
            std::vector<ValueId> head_outputs;
            std::vector<std::vector<ValueId>> head_weight_nodes(n_heads);
            for (std::size_t m = 0; m < n_heads; ++m) {
                head_outputs.push_back(stack_forward_node(tape, out.net.params,
                                                          out.net.heads[m], shared,
                                                          /*relu_after_last=*/false,
                                                          param_nodes,
                                                          &head_weight_nodes[m]));
            }

            ValueId l1, l2, l3;
            if (classification) {
                std::vector<int> labels(batch.size());
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    labels[i] = dataset.train.labels[batch[i]];
                }
                l1 = losses::l1_classification_node(tape, head_outputs, labels);
                l2 = losses::l2_classification_node(
                    tape, gather_rows(cache.mean_probs_at_t_mean, batch), head_outputs,
                    cfg.loss.t_mean);
                const std::vector<Matrix> teacher_probs =
                    gather_cache_rows(cache.probs_at_t_ind, batch);
                l3 = losses::l3_classification_node(tape, teacher_probs, head_outputs,
                                                    cfg.loss.t_ind);
            } else {
                std::vector<double> targets(batch.size());
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    targets[i] = dataset.train.values[batch[i]];
                }
                l1 = losses::l1_regression_node(tape, head_outputs, targets);
                l2 = losses::l2_regression_node(tape, gather_rows(cache.aggregate, batch),
                                                head_outputs);
                const std::vector<Matrix> teacher_stats =
                    gather_cache_rows(cache.member_stats, batch);
                l3 = losses::l3_regression_node(tape, teacher_stats, head_outputs);
            }
            ValueId l4 = losses::l4_diversity_node(tape, head_weight_nodes);
            ValueId ss = sum_squares_chain(tape, param_nodes);
            ValueId total = losses::total_loss_node(tape, cfg.loss, epoch, l1, l2, l3, l4, ss);

            const double loss_value = tape.scalar_value(total);
            check_finite_loss(loss_value, "distill_student");
            tape.backward(total);
            clip_global_norm(out.net.params, cfg.clip_norm);
            adam_step(out.net.params, adam, lr);

            const double w = static_cast<double>(batch.size()) / static_cast<double>(n_train);
            sums[0] += w * tape.scalar_value(l1);
            sums[1] += w * tape.scalar_value(l2);
            sums[2] += w * tape.scalar_value(l3);
            sums[3] += w * tape.scalar_value(l4);
            sums[4] += w * loss_value;
        }
        EpochRecord record;
        record.member = -1;
        record.epoch = epoch;
        record.lr = lr;
        record.lambda = lambda;
        record.l1 = sums[0];
        record.l2 = sums[1];
        record.l3 = sums[2];
        record.l4 = sums[3];
        record.total = sums[4];
        record.val_metric = validation_metric(
            cfg.task, models::student_raw_outputs(out.net, dataset.val.inputs), dataset.val);
        out.log.push_back(record);
    }
    return out;
}

namespace {

EvalReport evaluate_impl(TaskKind task, std::size_t params, std::size_t flops,
                         const std::function<std::vector<Matrix>(const Matrix&)>& raw_fn,
                         const data::LabelledSet& test, const Matrix& grid) {
    EvalReport report;
    report.task = task;
    report.param_count = params;
    report.flop_count = flops;
    report.grid_inputs = grid;

    const std::vector<Matrix> test_raw = raw_fn(test.inputs);
    for (std::size_t b = 0; b < test.size(); ++b) {
        if (task == TaskKind::classification) {
            Matrix member_probs(test_raw.size(), test_raw.front().cols());
            for (std::size_t s = 0; s < test_raw.size(); ++s) {
                const std::vector<double> p = softmax(test_raw[s].row(b));
                std::copy(p.begin(), p.end(), member_probs.row(s).begin());
            }
            report.test_uncertainty.push_back(
                uncertainty::decompose_classification(member_probs));
        } else {
            report.test_uncertainty.push_back(
                uncertainty::decompose_regression(gaussians_at_row(test_raw, b)));
        }
    }
    if (task == TaskKind::classification) {
        const Matrix probs = combined_probs(test_raw);
        report.error = metrics::error_rate(probs, test.labels);
        report.ece = metrics::ece(probs, test.labels);
    } else {
        report.nll = metrics::nll_gaussian(combined_gaussians(test_raw), test.values);
    }

    const std::vector<Matrix> grid_raw = raw_fn(grid);
    for (std::size_t b = 0; b < grid.rows(); ++b) {
        if (task == TaskKind::classification) {
            Matrix member_probs(grid_raw.size(), grid_raw.front().cols());
            for (std::size_t s = 0; s < grid_raw.size(); ++s) {
                const std::vector<double> p = softmax(grid_raw[s].row(b));
                std::copy(p.begin(), p.end(), member_probs.row(s).begin());
            }
            report.grid_uncertainty.push_back(
                uncertainty::decompose_classification(member_probs));
        } else {
            const std::vector<MeanVar> members = gaussians_at_row(grid_raw, b);
            report.grid_uncertainty.push_back(uncertainty::decompose_regression(members));
            report.grid_prediction.push_back(losses::aggregate_gaussians(members));
        }
    }
    return report;
}

}  // namespace

EvalReport evaluate(const models::EnsembleTeacher& teacher, const data::LabelledSet& test,
                    const Matrix& grid) {
    if (teacher.spec().task != test.task) throw ConfigError("evaluate: task mismatch");
    return evaluate_impl(
        test.task, models::count_params(teacher), models::count_flops(teacher),
        [&](const Matrix& x) { return models::ensemble_raw_outputs(teacher, x); }, test, grid);
}

EvalReport evaluate(const models::MultiHeadNet& net, const data::LabelledSet& test,
                    const Matrix& grid) {
    if (net.spec.task != test.task) throw ConfigError("evaluate: task mismatch");
    return evaluate_impl(
        test.task, models::count_params(net), models::count_flops(net),
        [&](const Matrix& x) { return models::student_raw_outputs(net, x); }, test, grid);
}

namespace {

double tv_for(const std::vector<uncertainty::UncertaintyTriple>& a,
              const std::vector<uncertainty::UncertaintyTriple>& b,
              double uncertainty::UncertaintyTriple::* field, std::size_t bins) {
    std::vector<double> va, vb;
    va.reserve(a.size());
    vb.reserve(b.size());
    for (const auto& t : a) va.push_back(t.*field);
    for (const auto& t : b) vb.push_back(t.*field);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : va) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : vb) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi - lo > 1e-12)) {
        lo -= 0.5;
        hi += 0.5;
    }
    const auto ha = metrics::build_histogram(va, bins, lo, hi);
    const auto hb = metrics::build_histogram(vb, bins, lo, hi);
    return metrics::total_variation(ha, hb);
}

}  // namespace

TvSummary tv_between(const EvalReport& a, const EvalReport& b, std::size_t bins) {
    TvSummary tv;
    tv.predictive = tv_for(a.test_uncertainty, b.test_uncertainty,
                           &uncertainty::UncertaintyTriple::predictive, bins);
    tv.aleatoric = tv_for(a.test_uncertainty, b.test_uncertainty,
                          &uncertainty::UncertaintyTriple::aleatoric, bins);
    tv.epistemic = tv_for(a.test_uncertainty, b.test_uncertainty,
                          &uncertainty::UncertaintyTriple::epistemic, bins);
    return tv;
}

}  // namespace enkd::train
