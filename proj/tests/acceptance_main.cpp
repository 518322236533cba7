// Acceptance suite: runs every acceptance criterion end to end and prints
// one pass/fail line per criterion. Returns the number of failures.
//
// The expected values in criterion 4 are produced by direct formula
// transcriptions (plain <cmath>, no library calls) so they stay independent
// of the implementation they check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "enkd/checkpoint.hpp"
#include "enkd/datasets.hpp"
#include "enkd/losses.hpp"
#include "enkd/metrics.hpp"
#include "enkd/models.hpp"
#include "enkd/optim.hpp"
#include "enkd/rng.hpp"
#include "enkd/training.hpp"
#include "enkd/uncertainty.hpp"
#include "fd_check.hpp"

using namespace enkd;
using models::MeanVar;

namespace {

int failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
    std::printf("[%s] C%d %-28s %s (%.1fs)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) failures += 1;
}

template <typename F>
void run_criterion(int criterion, const std::string& name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
        std::tie(pass, detail) = body();
    } catch (const std::exception& e) {
        pass = false;
        detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(criterion, name, pass, detail, seconds);
}

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), pattern, args...);
    return std::string(buf);
}

// ---- criterion 1: parameter / FLOP count oracles ------------------------

std::pair<bool, std::string> criterion_counts() {
    const auto cls_t = models::toy_teacher_spec(TaskKind::classification);
    const auto cls_s = models::toy_student_spec(TaskKind::classification, 20);
    const auto reg_t = models::toy_teacher_spec(TaskKind::regression);
    const auto reg_s = models::toy_student_spec(TaskKind::regression, 20);
    const std::size_t values[8] = {
        20 * models::count_params(cls_t), models::count_params(cls_s),
        20 * models::count_flops(cls_t),  models::count_flops(cls_s),
        20 * models::count_params(reg_t), models::count_params(reg_s),
        20 * models::count_flops(reg_t),  models::count_flops(reg_s),
    };
    const std::size_t expected[8] = {618060, 228560, 626060, 230860,
                                     106040, 55690,  109040, 56790};
    for (int i = 0; i < 8; ++i) {
        if (values[i] != expected[i]) {
            return {false, fmt("value %d: got %zu, expected %zu", i, values[i], expected[i])};
        }
    }
    return {true, "all eight published totals reproduced exactly"};
}

// ---- criterion 2: gradients vs central finite differences ---------------

struct HeadSet {
    ParamStore store;
    std::vector<std::vector<std::size_t>> weight_index;
    std::vector<std::vector<std::size_t>> bias_index;
};

HeadSet random_heads(Rng& rng, std::size_t heads, const std::vector<std::size_t>& widths) {
    HeadSet out;
    out.weight_index.resize(heads);
    out.bias_index.resize(heads);
    for (std::size_t m = 0; m < heads; ++m) {
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            Matrix w(widths[l + 1], widths[l]);
            for (double& v : w.data()) v = rng.uniform(-0.9, 0.9);
            Matrix b(1, widths[l + 1]);
            for (double& v : b.data()) v = rng.uniform(-0.4, 0.4);
            out.weight_index[m].push_back(out.store.add("w", std::move(w)));
            out.bias_index[m].push_back(out.store.add("b", std::move(b)));
        }
    }
    return out;
}

std::vector<ValueId> forward_heads(Tape& tape, ParamStore& store, const HeadSet& heads,
                                   const Matrix& x) {
    std::vector<ValueId> outs;
    for (std::size_t m = 0; m < heads.weight_index.size(); ++m) {
        ValueId h = tape.constant(x);
        for (std::size_t l = 0; l < heads.weight_index[m].size(); ++l) {
            h = tape.linear(h, tape.param(store, heads.weight_index[m][l]),
                            tape.param(store, heads.bias_index[m][l]));
            if (l + 1 < heads.weight_index[m].size()) h = tape.relu(h);
        }
        outs.push_back(h);
    }
    return outs;
}

std::vector<Matrix> frozen_head_means(const HeadSet& heads) {
    std::vector<Matrix> means;
    const std::size_t n_heads = heads.weight_index.size();
    for (std::size_t l = 0; l < heads.weight_index[0].size(); ++l) {
        Matrix mean = heads.store.at(heads.weight_index[0][l]).value;
        for (std::size_t m = 1; m < n_heads; ++m) {
            const auto& w = heads.store.at(heads.weight_index[m][l]).value;
            for (std::size_t i = 0; i < mean.size(); ++i) mean.data()[i] += w.data()[i];
        }
        for (double& v : mean.data()) v /= static_cast<double>(n_heads);
        means.push_back(std::move(mean));
    }
    return means;
}

ValueId l4_node_with_frozen_means(Tape& tape, ParamStore& store, const HeadSet& heads,
                                  const std::vector<Matrix>& means) {
    ValueId acc;
    for (std::size_t l = 0; l < means.size(); ++l) {
        ValueId mean_node = tape.constant(means[l]);
        for (std::size_t m = 0; m < heads.weight_index.size(); ++m) {
            ValueId w = tape.param(store, heads.weight_index[m][l]);
            ValueId term = tape.scale(tape.add_scalar(tape.row_cosine_mean(w, mean_node), 1.0), 0.5);
            acc = acc.valid() ? tape.add(acc, term) : term;
        }
    }
    return acc;
}

std::pair<bool, std::string> criterion_gradients() {
    Rng rng(2024);
    double worst = 0.0;
    std::size_t total_checked = 0;
    const int instances = 20;

    for (int i = 0; i < instances; ++i) {
        // classification set: 3 heads on widths {3,5,3}, batch of 2
        HeadSet cls = random_heads(rng, 3, {3, 5, 3});
        Matrix x(2, 3);
        for (double& v : x.data()) v = rng.uniform(-1, 1);
        std::vector<int> labels{static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3))};
        Matrix teacher_mean(2, 3);
        std::vector<Matrix> teacher_probs;
        for (int n = 0; n < 5; ++n) teacher_probs.push_back(Matrix(2, 3));
        for (std::size_t b = 0; b < 2; ++b) {
            double z = 0.0;
            for (std::size_t k = 0; k < 3; ++k) {
                teacher_mean(b, k) = rng.uniform(0.05, 1.0);
                z += teacher_mean(b, k);
            }
            for (std::size_t k = 0; k < 3; ++k) teacher_mean(b, k) /= z;
            for (auto& p : teacher_probs) {
                double zz = 0.0;
                for (std::size_t k = 0; k < 3; ++k) {
                    p(b, k) = rng.uniform(0.05, 1.0);
                    zz += p(b, k);
                }
                for (std::size_t k = 0; k < 3; ++k) p(b, k) /= zz;
            }
        }
        const auto means = frozen_head_means(cls);

        losses::LossConfig cfg;
        cfg.alpha = rng.uniform(0.0, 1.0);
        cfg.beta = rng.uniform(0.0, 1.0);
        cfg.t_ind = rng.uniform(1.0, 4.0);
        cfg.t_mean = rng.uniform(1.0, 2.0);
        cfg.weight_decay = rng.uniform(0.0, 0.01);
        cfg.lambda.kind = losses::LambdaSchedule::Kind::constant;
        cfg.lambda.value = rng.uniform(0.0, 2.0);

        const std::vector<testutil::LossBuilder> builders = {
            [&](Tape& t, ParamStore& s) {  // correctness, classification
                return losses::l1_classification_node(t, forward_heads(t, s, cls, x), labels);
            },
            [&](Tape& t, ParamStore& s) {  // aggregation, classification
                return losses::l2_classification_node(t, teacher_mean,
                                                      forward_heads(t, s, cls, x), cfg.t_mean);
            },
            [&](Tape& t, ParamStore& s) {  // individuality, classification
                return losses::l3_classification_node(t, teacher_probs,
                                                      forward_heads(t, s, cls, x), cfg.t_ind);
            },
            [&](Tape& t, ParamStore& s) {  // diversity (head mean frozen per step)
                return l4_node_with_frozen_means(t, s, cls, means);
            },
            [&](Tape& t, ParamStore& s) {  // combined objective
                auto outs = forward_heads(t, s, cls, x);
                ValueId l1 = losses::l1_classification_node(t, outs, labels);
                ValueId l2 = losses::l2_classification_node(t, teacher_mean, outs, cfg.t_mean);
                ValueId l3 = losses::l3_classification_node(t, teacher_probs, outs, cfg.t_ind);
                ValueId l4 = l4_node_with_frozen_means(t, s, cls, means);
                ValueId ss;
                for (std::size_t p = 0; p < s.size(); ++p) {
                    ValueId sq = t.sum_squares(t.param(s, p));
                    ss = ss.valid() ? t.add(ss, sq) : sq;
                }
                return losses::total_loss_node(t, cfg, 3, l1, l2, l3, l4, ss);
            },
        };
        for (const auto& build : builders) {
            const auto r = testutil::check_gradients(cls.store, build);
            worst = std::max(worst, r.max_rel_err);
            total_checked += r.checked;
        }

        // regression set: 2 heads on widths {2,4,2}, batch of 2
        HeadSet reg = random_heads(rng, 2, {2, 4, 2});
        Matrix xr(2, 2);
        for (double& v : xr.data()) v = rng.uniform(-1, 1);
        std::vector<double> targets{rng.uniform(-2, 2), rng.uniform(-2, 2)};
        Matrix teacher_agg(2, 2);
        std::vector<Matrix> teacher_stats;
        for (int n = 0; n < 3; ++n) teacher_stats.push_back(Matrix(2, 2));
        for (std::size_t b = 0; b < 2; ++b) {
            std::vector<MeanVar> members;
            for (int n = 0; n < 3; ++n) {
                members.push_back(MeanVar{rng.uniform(-2, 2), rng.uniform(0.3, 2.0)});
                teacher_stats[n](b, 0) = members.back().mean;
                teacher_stats[n](b, 1) = members.back().var;
            }
            const auto agg = losses::aggregate_gaussians(members);
            teacher_agg(b, 0) = agg.mean;
            teacher_agg(b, 1) = agg.var;
        }
        const std::vector<testutil::LossBuilder> reg_builders = {
            [&](Tape& t, ParamStore& s) {  // correctness, regression
                return losses::l1_regression_node(t, forward_heads(t, s, reg, xr), targets);
            },
            [&](Tape& t, ParamStore& s) {  // aggregation, regression
                return losses::l2_regression_node(t, teacher_agg, forward_heads(t, s, reg, xr));
            },
            [&](Tape& t, ParamStore& s) {  // individuality, regression
                return losses::l3_regression_node(t, teacher_stats, forward_heads(t, s, reg, xr));
            },
        };
        for (const auto& build : reg_builders) {
            const auto r = testutil::check_gradients(reg.store, build);
            worst = std::max(worst, r.max_rel_err);
            total_checked += r.checked;
        }
    }
    return {worst < 1e-5,
            fmt("max relative error %.2e over %zu entries (%d instances per loss)", worst,
                total_checked, instances)};
}

// ---- criterion 3: decomposition identities -------------------------------

std::pair<bool, std::string> criterion_decomposition() {
    Rng rng(31337);
    double min_epistemic = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t members = 1 + rng.below(10);
        const std::size_t classes = 2 + rng.below(5);
        Matrix probs(members, classes);
        for (std::size_t s = 0; s < members; ++s) {
            double z = 0.0;
            for (std::size_t k = 0; k < classes; ++k) {
                probs(s, k) = rng.uniform(1e-6, 1.0);
                z += probs(s, k);
            }
            for (std::size_t k = 0; k < classes; ++k) probs(s, k) /= z;
        }
        const auto c = uncertainty::decompose_classification(probs);
        if (c.epistemic != c.predictive - c.aleatoric) {
            return {false, "classification triple is not exact"};
        }
        min_epistemic = std::min(min_epistemic, c.epistemic);

        std::vector<MeanVar> gaussians;
        for (std::size_t s = 0; s < members; ++s) {
            gaussians.push_back(MeanVar{rng.uniform(-10, 10), rng.uniform(1e-4, 9.0)});
        }
        const auto r = uncertainty::decompose_regression(gaussians);
        if (r.predictive != r.aleatoric + r.epistemic) {
            return {false, "regression triple is not exact"};
        }
        min_epistemic = std::min(min_epistemic, r.epistemic);
    }
    return {min_epistemic >= -1e-12,
            fmt("10000 member sets per form, min epistemic %.2e", min_epistemic)};
}

// ---- criterion 4: closed-form loss oracle --------------------------------
// Direct transcriptions of the formulas; nothing below calls the library.

namespace oracle {

double l1_class_two_heads() {
    // heads (0.5, 0.25, 0.25) and (0.25, 0.5, 0.25), label 0
    return -(std::log(0.5) + std::log(0.25)) / 2.0;
}
double l1_class_uniform() { return -std::log(1.0 / 3.0); }
double l1_reg_unit_gap() { return 0.5 * (1.0 * 1.0 / 1.0 + std::log(1.0)); }
double l2_class_uniform_vs_half() {
    const double t = 1.0 / 3.0;
    return -(t * std::log(0.5) + t * std::log(0.25) + t * std::log(0.25));
}
double l2_class_uniforms() {
    double ce = 0.0;
    for (int k = 0; k < 3; ++k) ce -= (1.0 / 3.0) * std::log(1.0 / 3.0);
    return ce;
}
double l2_reg_identical_unit() { return 0.5 * ((1.0 + 0.0) / 1.0 + std::log(1.0)); }
double l2_reg_gap_one() { return 0.5 * ((1.0 + 1.0) / 1.0 + std::log(1.0)); }
double l2_reg_teacher_aggregate_variance() {
    // members (0, 1) and (2, 1): mean aleatoric + population variance of means
    const double mean = (0.0 + 2.0) / 2.0;
    const double aleatoric = (1.0 + 1.0) / 2.0;
    const double spread = ((0.0 - mean) * (0.0 - mean) + (2.0 - mean) * (2.0 - mean)) / 2.0;
    return aleatoric + spread;
}
double l3_class_uniform() {
    double total = 0.0;
    for (int n = 0; n < 2; ++n) {
        for (int k = 0; k < 3; ++k) total -= (1.0 / 3.0) * std::log(1.0 / 3.0);
    }
    return total / 2.0;
}
double l3_reg_matched() {
    double total = 0.0;
    for (int n = 0; n < 2; ++n) total += 0.5 * ((1.0 + 0.0) / 1.0 + std::log(1.0));
    return total / 2.0;
}
double l3_reg_gap_two() { return 0.5 * ((1.0 + 4.0) / 1.0 + std::log(1.0)); }
double l4_orthogonal() {
    // heads (1,0) and (0,1): mean (0.5,0.5), cos = (0.5)/(1 * sqrt(0.5))
    const double c = 0.5 / (1.0 * std::sqrt(0.5));
    return 2.0 * (1.0 + c) / 2.0;
}
double l4_opposed() {
    // heads (1,0) and (-1,0): zero mean, cos defined as 0
    return 2.0 * (1.0 + 0.0) / 2.0;
}
double total_loss_example() {
    const double alpha = 0.9, beta = 0.5, lambda = 2.0;
    return (1 - alpha) * 1.0 + alpha * ((1 - beta) * 2.0 + beta * 3.0) + lambda * 4.0;
}
double cosine_midpoint_lr() { return 0.01 * 0.5 * (1.0 + std::cos(std::numbers::pi * 0.5)); }

}  // namespace oracle

std::pair<bool, std::string> criterion_loss_oracle() {
    struct Case {
        const char* name;
        double expected;
        double actual;
    };
    const Matrix two_heads(2, 3, {0.5, 0.25, 0.25, 0.25, 0.5, 0.25});
    const double third = 1.0 / 3.0;
    const Matrix uniform_heads(2, 3, {third, third, third, third, third, third});
    const Matrix zero_logits_2x3(2, 3);
    Matrix half_logits(1, 3, {std::log(0.5), std::log(0.25), std::log(0.25)});
    const std::vector<MeanVar> unit{{0.0, 1.0}};
    const std::vector<MeanVar> unit_shift{{1.0, 1.0}};
    const std::vector<MeanVar> pair_means{{0.0, 1.0}, {2.0, 1.0}};
    const std::vector<MeanVar> matched{{0.0, 1.0}, {1.0, 1.0}};

    losses::LossConfig combo;
    combo.alpha = 0.9;
    combo.beta = 0.5;
    combo.t_ind = 1.0;
    combo.t_mean = 1.0;
    combo.lambda.kind = losses::LambdaSchedule::Kind::constant;
    combo.lambda.value = 2.0;

    const std::vector<Case> cases = {
        {"l1_class two heads", oracle::l1_class_two_heads(),
         losses::l1_classification(two_heads, 0)},
        {"l1_class uniform", oracle::l1_class_uniform(),
         losses::l1_classification(uniform_heads, 1)},
        {"l1_reg unit gap", oracle::l1_reg_unit_gap(),
         losses::l1_regression(std::vector<MeanVar>{{3.0, 1.0}}, 2.0)},
        {"l2_class uniforms", oracle::l2_class_uniforms(),
         losses::l2_classification(zero_logits_2x3, Matrix(1, 3), 1.0)},
        {"l2_class uniform vs half", oracle::l2_class_uniform_vs_half(),
         losses::l2_classification(zero_logits_2x3, half_logits, 1.0)},
        {"l2_reg identical", oracle::l2_reg_identical_unit(), losses::l2_regression(unit, unit)},
        {"l2_reg gap one", oracle::l2_reg_gap_one(), losses::l2_regression(unit_shift, unit)},
        {"l2_reg aggregate variance", oracle::l2_reg_teacher_aggregate_variance(),
         losses::aggregate_gaussians(pair_means).var},
        {"l3_class uniform", oracle::l3_class_uniform(),
         losses::l3_classification(zero_logits_2x3, zero_logits_2x3, 1.0)},
        {"l3_reg matched", oracle::l3_reg_matched(), losses::l3_regression(matched, matched)},
        {"l3_reg gap two", oracle::l3_reg_gap_two(),
         losses::l3_regression(std::vector<MeanVar>{{2.0, 1.0}},
                               std::vector<MeanVar>{{0.0, 1.0}})},
        {"l4 orthogonal", oracle::l4_orthogonal(),
         losses::l4_diversity({{Matrix(1, 2, {1, 0})}, {Matrix(1, 2, {0, 1})}})},
        {"l4 opposed", oracle::l4_opposed(),
         losses::l4_diversity({{Matrix(1, 2, {1, 0})}, {Matrix(1, 2, {-1, 0})}})},
        {"total_loss", oracle::total_loss_example(), losses::total_loss(combo, 1, 2, 3, 4, 0)},
        {"cosine midpoint", oracle::cosine_midpoint_lr(), cosine_lr(100, 200, 0.01)},
    };
    double worst = 0.0;
    for (const auto& c : cases) {
        const double err = std::abs(c.expected - c.actual);
        if (err > 1e-10) {
            return {false, fmt("%s: |%.17g - %.17g| = %.2e", c.name, c.expected, c.actual, err)};
        }
        worst = std::max(worst, err);
    }
    return {true, fmt("%zu brute-force cases agree, worst gap %.2e", cases.size(), worst)};
}

// ---- criteria 5-7: end-to-end toy experiments ----------------------------

double mean_epistemic_far(const train::EvalReport& report, double min_norm) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < report.grid_inputs.rows(); ++i) {
        double norm2 = 0.0;
        for (double v : report.grid_inputs.row(i)) norm2 += v * v;
        if (std::sqrt(norm2) > min_norm) {
            total += report.grid_uncertainty[i].epistemic;
            count += 1;
        }
    }
    return total / static_cast<double>(count);
}

double mean_epistemic(const std::vector<uncertainty::UncertaintyTriple>& triples) {
    double total = 0.0;
    for (const auto& t : triples) total += t.epistemic;
    return total / static_cast<double>(triples.size());
}

struct ClassificationArtifacts {
    train::RunConfig cfg;
    data::DatasetSplits dataset;
    Matrix grid;
    train::TrainedTeacher teacher;
};

std::pair<bool, std::string> criterion_toy_classification(ClassificationArtifacts& out) {
    out.cfg = train::default_run_config(TaskKind::classification, 7, 20);
    out.dataset = data::make_spiral(out.cfg.seed);
    out.grid = data::make_eval_grid(TaskKind::classification, 41);
    out.teacher = train::train_teacher(out.cfg, out.dataset);
    const auto teacher_report = train::evaluate(out.teacher.ensemble, out.dataset.test, out.grid);

    const auto hydra_plus = train::distill_student(out.teacher.ensemble, out.cfg, out.dataset);
    const auto plus_report = train::evaluate(hydra_plus.net, out.dataset.test, out.grid);
    const auto plus_on_train = train::evaluate(hydra_plus.net, out.dataset.train, out.grid);

    train::RunConfig hydra_cfg = out.cfg;
    hydra_cfg.loss.alpha = 1.0;
    hydra_cfg.loss.beta = 1.0;
    hydra_cfg.loss.lambda = losses::LambdaSchedule{};
    const auto hydra = train::distill_student(out.teacher.ensemble, hydra_cfg, out.dataset);
    const auto hydra_report = train::evaluate(hydra.net, out.dataset.test, out.grid);

    const double far_plus = mean_epistemic_far(plus_report, 2.0);
    const double on_train = mean_epistemic(plus_on_train.test_uncertainty);
    const double far_hydra = mean_epistemic_far(hydra_report, 2.0);

    const bool teacher_ok = teacher_report.error <= 0.10;
    const bool student_ok = std::abs(plus_report.error - teacher_report.error) <= 0.05;
    const bool ratio_ok = far_plus >= 2.0 * on_train;
    const bool beats_hydra = far_plus >= far_hydra;
    return {teacher_ok && student_ok && ratio_ok && beats_hydra,
            fmt("teacher err %.3f (<=0.10 %s); hydra+ err %.3f (gap %.3f <= 0.05 %s); "
                "far/train epistemic %.4f/%.4f = %.1fx (>=2 %s); hydra+ far %.4f >= hydra far "
                "%.4f (%s)",
                teacher_report.error, teacher_ok ? "ok" : "FAIL", plus_report.error,
                std::abs(plus_report.error - teacher_report.error), student_ok ? "ok" : "FAIL",
                far_plus, on_train, far_plus / on_train, ratio_ok ? "ok" : "FAIL", far_plus,
                far_hydra, beats_hydra ? "ok" : "FAIL")};
}

struct RegressionArtifacts {
    train::RunConfig cfg;
    data::DatasetSplits dataset;
    Matrix grid;
    train::TrainedTeacher teacher;
    train::EvalReport teacher_report;
};

double mean_epistemic_abs_range(const train::EvalReport& report, double lo, double hi) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < report.grid_inputs.rows(); ++i) {
        const double x = std::abs(report.grid_inputs(i, 0));
        if (x >= lo && x <= hi) {
            total += report.grid_uncertainty[i].epistemic;
            count += 1;
        }
    }
    return total / static_cast<double>(count);
}

std::pair<bool, std::string> criterion_toy_regression(RegressionArtifacts& out) {
    out.cfg = train::default_run_config(TaskKind::regression, 7, 20);
    out.dataset = data::make_cubic_sine(out.cfg.seed);
    out.grid = data::make_eval_grid(TaskKind::regression, 181);
    out.teacher = train::train_teacher(out.cfg, out.dataset);
    out.teacher_report = train::evaluate(out.teacher.ensemble, out.dataset.test, out.grid);

    const auto student = train::distill_student(out.teacher.ensemble, out.cfg, out.dataset);
    const auto report = train::evaluate(student.net, out.dataset.test, out.grid);

    const double nll_gap = std::abs(report.nll - out.teacher_report.nll);
    const double far = mean_epistemic_abs_range(report, 7.0 + 1e-9, 9.0);
    const double near = mean_epistemic_abs_range(report, 0.0, 5.0);

    const bool nll_ok = nll_gap <= 0.5;
    const bool ratio_ok = far >= 3.0 * near;
    return {nll_ok && ratio_ok,
            fmt("teacher NLL %.3f, hydra+ NLL %.3f, gap %.3f (<=0.5 %s); epistemic var "
                "|x|>7 %.4f vs |x|<=5 %.4f = %.0fx (>=3 %s)",
                out.teacher_report.nll, report.nll, nll_gap, nll_ok ? "ok" : "FAIL", far, near,
                far / near, ratio_ok ? "ok" : "FAIL")};
}

std::pair<bool, std::string> criterion_head_sweep(RegressionArtifacts& reg) {
    std::vector<std::size_t> params;
    std::string tv_detail;
    for (std::size_t heads : {std::size_t{20}, std::size_t{10}, std::size_t{5}}) {
        train::RunConfig cfg = train::default_run_config(TaskKind::regression, 7, heads);
        const auto student = train::distill_student(reg.teacher.ensemble, cfg, reg.dataset);
        params.push_back(models::count_params(student.net));
        const auto report = train::evaluate(student.net, reg.dataset.test, reg.grid);
        const auto tv = train::tv_between(report, reg.teacher_report, 50);
        if (!std::isfinite(tv.epistemic) || !std::isfinite(tv.predictive) ||
            !std::isfinite(tv.aleatoric)) {
            return {false, fmt("non-finite TV at M=%zu", heads)};
        }
        tv_detail += fmt("M=%zu params %zu epistemic-TV %.3f; ", heads, params.back(),
                         tv.epistemic);
    }
    const bool decreasing = params[0] > params[1] && params[1] > params[2];
    return {decreasing, tv_detail + (decreasing ? "params strictly decrease" : "params FAIL")};
}

// ---- criterion 8: determinism --------------------------------------------

std::pair<bool, std::string> criterion_determinism() {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "enkd_acceptance_determinism";
    fs::remove_all(base);

    auto run_pipeline = [&](const fs::path& dir) {
        fs::create_directories(dir);
        train::RunConfig cfg = train::default_run_config(TaskKind::classification, 13, 2);
        cfg.epochs = 8;
        cfg.teacher_members = 3;
        cfg.teacher_arch.widths = {2, 12, 12, 3};
        cfg.student_arch.core_widths = {2, 12};
        cfg.student_arch.head_widths = {12, 8, 3};
        const auto dataset = data::make_spiral(cfg.seed);
        const auto teacher = train::train_teacher(cfg, dataset);
        const auto student = train::distill_student(teacher.ensemble, cfg, dataset);
        models::save_teacher(dir / "teacher.ckpt", teacher.ensemble);
        models::save_student(dir / "student.ckpt", student.net);
        std::ofstream tlog(dir / "teacher_log.jsonl");
        train::write_metric_log(tlog, teacher.log);
        std::ofstream slog(dir / "student_log.jsonl");
        train::write_metric_log(slog, student.log);
    };
    run_pipeline(base / "a");
    run_pipeline(base / "b");

    auto file_bytes = [](const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        std::ostringstream os;
        os << is.rdbuf();
        return os.str();
    };
    for (const char* name :
         {"teacher.ckpt", "student.ckpt", "teacher_log.jsonl", "student_log.jsonl"}) {
        if (file_bytes(base / "a" / name) != file_bytes(base / "b" / name)) {
            return {false, fmt("'%s' differs between identical runs", name)};
        }
    }
    fs::remove_all(base);
    return {true, "checkpoints and metric logs byte-identical across two pipeline runs"};
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");

    run_criterion(1, "count oracles", [] { return criterion_counts(); });
    run_criterion(2, "gradient suite", [] { return criterion_gradients(); });
    run_criterion(3, "decomposition identities", [] { return criterion_decomposition(); });
    run_criterion(4, "closed-form loss oracle", [] { return criterion_loss_oracle(); });

    ClassificationArtifacts cls;
    run_criterion(5, "toy classification e2e", [&] { return criterion_toy_classification(cls); });

    RegressionArtifacts reg;
    run_criterion(6, "toy regression e2e", [&] { return criterion_toy_regression(reg); });
    run_criterion(7, "head-count sweep", [&] { return criterion_head_sweep(reg); });
    run_criterion(8, "determinism", [] { return criterion_determinism(); });

    std::printf("%d criterion(s) failed\n", failures);
    return failures;
}
