#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "enkd/matrix.hpp"
#include "enkd/nn.hpp"

namespace enkd::models {

// Fully connected network description: layer widths from input to output.
// Regression networks end in (mean, raw-variance); classification in K
// logits.
struct MlpSpec {
    std::vector<std::size_t> widths;
    TaskKind task = TaskKind::classification;

    void validate() const;
    std::size_t layer_count() const { return widths.size() - 1; }
};

// Shared core plus M identically shaped heads. The core's output width is
// the heads' input width.
struct MultiHeadSpec {
    std::vector<std::size_t> core_widths;
    std::vector<std::size_t> head_widths;
    std::size_t heads = 2;
    TaskKind task = TaskKind::classification;

    void validate() const;
};

// The two toy architectures. Classification: [2,100,100,100,100,3] with the
// last 2 layers as heads. Regression: [1,50,50,50,2], same head split.
MlpSpec toy_teacher_spec(TaskKind task);
MultiHeadSpec toy_student_spec(TaskKind task, std::size_t heads);

// Index pair of (weight, bias) tensors inside a ParamStore.
struct LayerRef {
    std::size_t weight;
    std::size_t bias;
};

struct Mlp {
    MlpSpec spec;
    std::uint64_t seed = 0;
    ParamStore params;
    std::vector<LayerRef> layers;
};

struct MultiHeadNet {
    MultiHeadSpec spec;
    std::uint64_t seed = 0;
    ParamStore params;
    std::vector<LayerRef> core;
    std::vector<std::vector<LayerRef>> heads;  // [head][layer]
};

struct EnsembleTeacher {
    std::vector<Mlp> members;
    std::uint64_t base_seed = 0;

    const MlpSpec& spec() const { return members.front().spec; }
    std::size_t size() const { return members.size(); }
};

Mlp build_mlp(const MlpSpec& spec, std::uint64_t seed);
MultiHeadNet build_student(const MultiHeadSpec& spec, std::uint64_t seed);
// Member n is initialised with seed base_seed + n.
EnsembleTeacher build_ensemble(const MlpSpec& spec, std::size_t members, std::uint64_t base_seed);

// Raw network outputs for a batch of inputs: logits (classification) or
// (mean, raw-variance) columns (regression).
Matrix mlp_raw_outputs(const Mlp& mlp, const Matrix& x);

struct MeanVar {
    double mean = 0.0;
    double var = 0.0;
};

// Predictions of every member/head for one input. Classification rows are
// probabilities at temperature 1; regression variance is exp(raw).
struct MemberPredictions {
    TaskKind task = TaskKind::classification;
    Matrix probs;                    // (S, K)
    std::vector<MeanVar> gaussians;  // (S)

    std::size_t members() const {
        return task == TaskKind::classification ? probs.rows() : gaussians.size();
    }
};

MemberPredictions student_forward(const MultiHeadNet& net, std::span<const double> x);
MemberPredictions ensemble_forward(const EnsembleTeacher& teacher, std::span<const double> x);

// Batched raw outputs per head (student) or member (teacher): logits or
// (mean, raw-variance).
std::vector<Matrix> student_raw_outputs(const MultiHeadNet& net, const Matrix& x);
std::vector<Matrix> ensemble_raw_outputs(const EnsembleTeacher& teacher, const Matrix& x);

// Mean probability vector (classification) or mean-of-means with the full
// predictive variance (regression).
struct Prediction {
    TaskKind task = TaskKind::classification;
    std::vector<double> probs;
    MeanVar gaussian;
};

Prediction combine_predictions(const MemberPredictions& members);

std::size_t count_params(const MlpSpec& spec);
std::size_t count_params(const MultiHeadSpec& spec);
std::size_t count_params(const Mlp& mlp);
std::size_t count_params(const MultiHeadNet& net);
std::size_t count_params(const EnsembleTeacher& teacher);

// Per-example FLOP counts: one op per weight (fused multiply-add), one per
// bias add, one per rectified-linear output element. Output transforms
// (softmax, exp) are not counted.
std::size_t count_flops(const MlpSpec& spec);
std::size_t count_flops(const MultiHeadSpec& spec);
std::size_t count_flops(const Mlp& mlp);
std::size_t count_flops(const MultiHeadNet& net);
std::size_t count_flops(const EnsembleTeacher& teacher);

}  // namespace enkd::models
