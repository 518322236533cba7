#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "enkd/datasets.hpp"
#include "enkd/losses.hpp"
#include "enkd/metrics.hpp"
#include "enkd/models.hpp"
#include "enkd/uncertainty.hpp"

namespace enkd::train {

struct RunConfig {
    TaskKind task = TaskKind::classification;
    std::uint64_t seed = 17;
    std::size_t epochs = 200;
    std::size_t batch_size = 256;

    std::size_t teacher_members = 20;
    double teacher_lr0 = 0.01;
    double teacher_weight_decay = 1e-4;

    double student_lr0 = 0.01;
    losses::LossConfig loss;  // weight_decay here applies to the student

    models::MlpSpec teacher_arch;
    models::MultiHeadSpec student_arch;

    double clip_norm = 5.0;

    void validate() const;
};

// Reference defaults for the two toy problems (teacher lr/decay, student
// loss settings, per-head-count lambda).
RunConfig default_run_config(TaskKind task, std::uint64_t seed, std::size_t heads = 20);

struct EpochRecord {
    int member = -1;  // teacher member index, or -1 for the student
    std::size_t epoch = 0;
    double lr = 0.0;
    double lambda = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    double l3 = 0.0;
    double l4 = 0.0;
    double total = 0.0;
    double val_metric = 0.0;
};

using MetricLog = std::vector<EpochRecord>;

// One JSON record per line, 17 significant digits.
void write_metric_log(std::ostream& os, const MetricLog& log);

double lambda_at(const losses::LambdaSchedule& schedule, std::size_t epoch);

struct TrainedTeacher {
    models::EnsembleTeacher ensemble;
    MetricLog log;
};

// Trains each member independently (cross-entropy or Gaussian NLL plus
// explicit weight decay, Adam, cosine schedule, global-norm clipping).
TrainedTeacher train_teacher(const RunConfig& cfg, const data::DatasetSplits& dataset);

struct TrainedStudent {
    models::MultiHeadNet net;
    MetricLog log;
    std::vector<std::size_t> teachers_per_head;
};

// One-session distillation against the frozen teacher: teacher outputs are
// cached on the training inputs once, then the combined loss is minimised.
TrainedStudent distill_student(const models::EnsembleTeacher& teacher, const RunConfig& cfg,
                               const data::DatasetSplits& dataset);

struct EvalReport {
    TaskKind task = TaskKind::classification;
    double error = 0.0;  // classification
    double ece = 0.0;    // classification
    double nll = 0.0;    // regression
    std::size_t param_count = 0;
    std::size_t flop_count = 0;
    Matrix grid_inputs;
    std::vector<uncertainty::UncertaintyTriple> grid_uncertainty;
    std::vector<models::MeanVar> grid_prediction;  // regression only
    std::vector<uncertainty::UncertaintyTriple> test_uncertainty;
};

EvalReport evaluate(const models::EnsembleTeacher& teacher, const data::LabelledSet& test,
                    const Matrix& grid);
EvalReport evaluate(const models::MultiHeadNet& net, const data::LabelledSet& test,
                    const Matrix& grid);

struct TvSummary {
    double predictive = 0.0;
    double aleatoric = 0.0;
    double epistemic = 0.0;
};

// Total variation between the two reports' test-set uncertainty histograms,
// binned over the union of both value ranges.
TvSummary tv_between(const EvalReport& a, const EvalReport& b, std::size_t bins = 50);

}  // namespace enkd::train
