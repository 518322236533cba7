#include <benchmark/benchmark.h>

#include "enkd/datasets.hpp"
#include "enkd/losses.hpp"
#include "enkd/metrics.hpp"
#include "enkd/models.hpp"
#include "enkd/rng.hpp"
#include "enkd/training.hpp"
#include "enkd/uncertainty.hpp"

using namespace enkd;

namespace {

const data::DatasetSplits& spiral() {
    static const auto splits = data::make_spiral(7);
    return splits;
}

void BM_TeacherForwardBatch(benchmark::State& state) {
    const auto mlp = models::build_mlp(models::toy_teacher_spec(TaskKind::classification), 1);
    const Matrix& x = spiral().train.inputs;
    for (auto _ : state) {
        benchmark::DoNotOptimize(models::mlp_raw_outputs(mlp, x));
    }
    state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_TeacherForwardBatch);

void BM_StudentForwardBatch(benchmark::State& state) {
    const auto net = models::build_student(
        models::toy_student_spec(TaskKind::classification, state.range(0)), 1);
    const Matrix& x = spiral().train.inputs;
    for (auto _ : state) {
        benchmark::DoNotOptimize(models::student_raw_outputs(net, x));
    }
    state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_StudentForwardBatch)->Arg(5)->Arg(10)->Arg(20);

void BM_TeacherTrainingEpoch(benchmark::State& state) {
    auto cfg = train::default_run_config(TaskKind::classification, 7, 2);
    cfg.teacher_members = 2;
    cfg.epochs = 1;
    const auto& dataset = spiral();
    for (auto _ : state) {
        benchmark::DoNotOptimize(train::train_teacher(cfg, dataset));
    }
}
BENCHMARK(BM_TeacherTrainingEpoch)->Unit(benchmark::kMillisecond);

void BM_DiversityLoss(benchmark::State& state) {
    const auto net = models::build_student(
        models::toy_student_spec(TaskKind::classification, state.range(0)), 1);
    std::vector<std::vector<Matrix>> weights(net.heads.size());
    for (std::size_t m = 0; m < net.heads.size(); ++m) {
        for (const auto& layer : net.heads[m]) {
            weights[m].push_back(net.params.at(layer.weight).value);
        }
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(losses::l4_diversity(weights));
    }
}
BENCHMARK(BM_DiversityLoss)->Arg(5)->Arg(20);

void BM_DecomposeClassification(benchmark::State& state) {
    Rng rng(3);
    Matrix probs(20, 3);
    for (std::size_t s = 0; s < probs.rows(); ++s) {
        double z = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            probs(s, k) = rng.uniform(0.01, 1.0);
            z += probs(s, k);
        }
        for (std::size_t k = 0; k < 3; ++k) probs(s, k) /= z;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(uncertainty::decompose_classification(probs));
    }
}
BENCHMARK(BM_DecomposeClassification);

void BM_HistogramBuild(benchmark::State& state) {
    Rng rng(5);
    std::vector<double> values(10000);
    for (double& v : values) v = rng.uniform(0.0, 1.1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(metrics::build_histogram(values, 50, 0.0, 1.1));
    }
    state.SetItemsProcessed(state.iterations() * values.size());
}
BENCHMARK(BM_HistogramBuild);

}  // namespace

BENCHMARK_MAIN();
