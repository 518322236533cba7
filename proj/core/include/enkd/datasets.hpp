#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "enkd/matrix.hpp"

namespace enkd::data {

enum class Split { train, val, test };

// Inputs with either class labels (classification) or target values
// (regression), tagged by split.
struct LabelledSet {
    TaskKind task = TaskKind::classification;
    Split split = Split::train;
    Matrix inputs;               // (n, d)
    std::vector<int> labels;     // classification targets
    std::vector<double> values;  // regression targets

    std::size_t size() const { return inputs.rows(); }
};

struct DatasetSplits {
    LabelledSet train;
    LabelledSet val;
    LabelledSet test;
};

// Three spirals originating at (0, 0): class k at progress t in (0, 1] sits
// at radius t, angle 3*pi*t + 2*pi*k/3, plus isotropic Gaussian jitter with
// sigma = 0.05. Splits hold 240/30/30 points, balanced across classes.
DatasetSplits make_spiral(std::uint64_t seed);

// sin(x) - 0.1x + 0.1x^2 + 0.01x^3 on x in [-6, 6]. Training targets carry
// additive N(0, 1) noise; val/test targets are noiseless. 240/30/30 points.
DatasetSplits make_cubic_sine(std::uint64_t seed);

double cubic_sine(double x);

// Uniform evaluation grid: classification covers [-3, 3]^2 with
// resolution^2 points (x1 varies slowest), regression covers [-9, 9] with
// `resolution` points. The regression range extends past the training data
// on purpose. resolution must be >= 2.
Matrix make_eval_grid(TaskKind task, std::size_t resolution);

// CSV dump, header x1[,x2],target,split, 17 significant digits.
void write_csv(std::ostream& os, const DatasetSplits& splits);

}  // namespace enkd::data
