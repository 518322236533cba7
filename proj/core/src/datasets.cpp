#include "enkd/datasets.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "enkd/rng.hpp"

namespace enkd::data {

namespace {

constexpr std::size_t kClasses = 3;
constexpr double kSpiralJitter = 0.05;
constexpr double kSpiralTurns = 3.0;  // angle = kSpiralTurns * pi * t

constexpr std::array<std::size_t, 3> kPerClassCounts = {80, 10, 10};  // train/val/test
constexpr std::array<std::size_t, 3> kRegressionCounts = {240, 30, 30};

LabelledSet spiral_split(Rng& rng, Split split, std::size_t per_class) {
    LabelledSet set;
    set.task = TaskKind::classification;
    set.split = split;
    set.inputs = Matrix(per_class * kClasses, 2);
    set.labels.resize(per_class * kClasses);
    std::size_t row = 0;
    for (std::size_t k = 0; k < kClasses; ++k) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(k) / kClasses;
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            const double t = 1.0 - rng.uniform();  // (0, 1]
            const double angle = kSpiralTurns * std::numbers::pi * t + phase;
            set.inputs(row, 0) = t * std::sin(angle) + rng.normal(0.0, kSpiralJitter);
            set.inputs(row, 1) = t * std::cos(angle) + rng.normal(0.0, kSpiralJitter);
            set.labels[row] = static_cast<int>(k);
        }
    }
    return set;
}

LabelledSet cubic_sine_split(Rng& rng, Split split, std::size_t count, bool noisy) {
    LabelledSet set;
    set.task = TaskKind::regression;
    set.split = split;
    set.inputs = Matrix(count, 1);
    set.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double x = rng.uniform(-6.0, 6.0);
        set.inputs(i, 0) = x;
        set.values[i] = cubic_sine(x) + (noisy ? rng.normal() : 0.0);
    }
    return set;
}

void append_csv_row(std::ostream& os, std::span<const double> xs, double target,
                    const char* split) {
    char buf[64];
    for (double x : xs) {
        std::snprintf(buf, sizeof(buf), "%.17g,", x);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", target);
    os << buf << ',' << split << '\n';
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

}  // namespace

double cubic_sine(double x) {
    return std::sin(x) - 0.1 * x + 0.1 * x * x + 0.01 * x * x * x;
}

DatasetSplits make_spiral(std::uint64_t seed) {
    Rng rng(seed);
    DatasetSplits splits;
    splits.train = spiral_split(rng, Split::train, kPerClassCounts[0]);
    splits.val = spiral_split(rng, Split::val, kPerClassCounts[1]);
    splits.test = spiral_split(rng, Split::test, kPerClassCounts[2]);
    return splits;
}

DatasetSplits make_cubic_sine(std::uint64_t seed) {
    Rng rng(seed);
    DatasetSplits splits;
    splits.train = cubic_sine_split(rng, Split::train, kRegressionCounts[0], true);
    splits.val = cubic_sine_split(rng, Split::val, kRegressionCounts[1], false);
    splits.test = cubic_sine_split(rng, Split::test, kRegressionCounts[2], false);
    return splits;
}

Matrix make_eval_grid(TaskKind task, std::size_t resolution) {
    if (resolution < 2) throw ConfigError("make_eval_grid: resolution must be >= 2");
    if (task == TaskKind::regression) {
        constexpr double lo = -9.0, hi = 9.0;
        Matrix grid(resolution, 1);
        for (std::size_t i = 0; i < resolution; ++i) {
            grid(i, 0) = lo + static_cast<double>(i) * (hi - lo) /
                                  static_cast<double>(resolution - 1);
        }
        return grid;
    }
    constexpr double lo = -3.0, hi = 3.0;
    Matrix grid(resolution * resolution, 2);
    std::size_t row = 0;
    for (std::size_t i = 0; i < resolution; ++i) {
        const double x1 = lo + static_cast<double>(i) * (hi - lo) /
                                   static_cast<double>(resolution - 1);
        for (std::size_t j = 0; j < resolution; ++j, ++row) {
            grid(row, 0) = x1;
            grid(row, 1) = lo + static_cast<double>(j) * (hi - lo) /
                                    static_cast<double>(resolution - 1);
        }
    }
    return grid;
}

void write_csv(std::ostream& os, const DatasetSplits& splits) {
    const bool classification = splits.train.task == TaskKind::classification;
    os << (classification ? "x1,x2,target,split\n" : "x1,target,split\n");
    for (const LabelledSet* set : {&splits.train, &splits.val, &splits.test}) {
        for (std::size_t i = 0; i < set->size(); ++i) {
            const double target = classification ? static_cast<double>(set->labels[i])
                                                 : set->values[i];
            append_csv_row(os, set->inputs.row(i), target, split_name(set->split));
        }
    }
}

}  // namespace enkd::data
