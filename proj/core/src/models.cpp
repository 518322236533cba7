#include "enkd/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "enkd/errors.hpp"
#include "enkd/rng.hpp"

namespace enkd::models {

namespace {

std::string layer_name(const std::string& prefix, std::size_t index) {
    return prefix + ".layer" + std::to_string(index);
}

LayerRef add_layer(ParamStore& store, const std::string& prefix, std::size_t index,
                   std::size_t in, std::size_t out, Rng& rng) {
    LinearLayer layer = init_linear(in, out, rng);
    LayerRef ref;
    ref.weight = store.add(layer_name(prefix, index) + ".weight", std::move(layer.weight));
    ref.bias = store.add(layer_name(prefix, index) + ".bias", std::move(layer.bias));
    return ref;
}

// Forward through a layer stack; rectified-linear after every layer except
// the last.
Matrix stack_forward(const ParamStore& params, const std::vector<LayerRef>& layers,
                     const Matrix& x, bool relu_after_last) {
    Matrix h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        h = affine(h, params.at(layers[l].weight).value, params.at(layers[l].bias).value);
        if (relu_after_last || l + 1 < layers.size()) h = relu(h);
    }
    return h;
}

MeanVar gaussian_from_raw(std::span<const double> raw) {
    return MeanVar{raw[0], std::exp(raw[1])};
}

std::size_t stack_params(std::span<const std::size_t> widths) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        n += widths[l] * widths[l + 1] + widths[l + 1];
    }
    return n;
}

std::size_t stack_flops(std::span<const std::size_t> widths, bool relu_after_last) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        n += widths[l] * widths[l + 1] + widths[l + 1];  // fused multiply-adds + bias adds
        const bool is_last = l + 2 == widths.size();
        if (!is_last || relu_after_last) n += widths[l + 1];  // rectification
    }
    return n;
}

}  // namespace

void MlpSpec::validate() const {
    if (widths.size() < 2) throw ConfigError("MlpSpec: need at least input and output widths");
    for (std::size_t w : widths)
        if (w == 0) throw ConfigError("MlpSpec: zero layer width");
    if (task == TaskKind::regression && widths.back() != 2) {
        throw ConfigError("MlpSpec: regression output width must be 2 (mean, raw-variance)");
    }
}

void MultiHeadSpec::validate() const {
    if (heads < 2) throw ConfigError("MultiHeadSpec: need at least 2 heads");
    if (core_widths.size() < 2 || head_widths.size() < 2) {
        throw ConfigError("MultiHeadSpec: core and head need at least one layer each");
    }
    if (core_widths.back() != head_widths.front()) {
        throw ConfigError("MultiHeadSpec: core output width must match head input width");
    }
    for (std::size_t w : core_widths)
        if (w == 0) throw ConfigError("MultiHeadSpec: zero core width");
    for (std::size_t w : head_widths)
        if (w == 0) throw ConfigError("MultiHeadSpec: zero head width");
    if (task == TaskKind::regression && head_widths.back() != 2) {
        throw ConfigError("MultiHeadSpec: regression head output width must be 2");
    }
}

MlpSpec toy_teacher_spec(TaskKind task) {
    MlpSpec spec;
    spec.task = task;
    spec.widths = task == TaskKind::classification
                      ? std::vector<std::size_t>{2, 100, 100, 100, 100, 3}
                      : std::vector<std::size_t>{1, 50, 50, 50, 2};
    return spec;
}

MultiHeadSpec toy_student_spec(TaskKind task, std::size_t heads) {
    MultiHeadSpec spec;
    spec.task = task;
    spec.heads = heads;
    if (task == TaskKind::classification) {
        spec.core_widths = {2, 100, 100, 100};
        spec.head_widths = {100, 100, 3};
    } else {
        spec.core_widths = {1, 50, 50};
        spec.head_widths = {50, 50, 2};
    }
    return spec;
}

Mlp build_mlp(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    Mlp mlp;
    mlp.spec = spec;
    mlp.seed = seed;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        mlp.layers.push_back(add_layer(mlp.params, "net", l, spec.widths[l], spec.widths[l + 1], rng));
    }
    return mlp;
}

MultiHeadNet build_student(const MultiHeadSpec& spec, std::uint64_t seed) {
    spec.validate();
    MultiHeadNet net;
    net.spec = spec;
    net.seed = seed;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < spec.core_widths.size(); ++l) {
        net.core.push_back(add_layer(net.params, "core", l, spec.core_widths[l],
                                     spec.core_widths[l + 1], rng));
    }
    net.heads.resize(spec.heads);
    for (std::size_t m = 0; m < spec.heads; ++m) {
        for (std::size_t l = 0; l + 1 < spec.head_widths.size(); ++l) {
            net.heads[m].push_back(add_layer(net.params, "head" + std::to_string(m), l,
                                             spec.head_widths[l], spec.head_widths[l + 1], rng));
        }
    }
    return net;
}

EnsembleTeacher build_ensemble(const MlpSpec& spec, std::size_t members, std::uint64_t base_seed) {
    if (members < 1) throw ConfigError("build_ensemble: need at least one member");
    EnsembleTeacher teacher;
    teacher.base_seed = base_seed;
    teacher.members.reserve(members);
    for (std::size_t n = 0; n < members; ++n) {
        teacher.members.push_back(build_mlp(spec, base_seed + n));
    }
    return teacher;
}

Matrix mlp_raw_outputs(const Mlp& mlp, const Matrix& x) {
    return stack_forward(mlp.params, mlp.layers, x, /*relu_after_last=*/false);
}

std::vector<Matrix> student_raw_outputs(const MultiHeadNet& net, const Matrix& x) {
    const Matrix shared = stack_forward(net.params, net.core, x, /*relu_after_last=*/true);
    std::vector<Matrix> outputs;
    outputs.reserve(net.heads.size());
    for (const auto& head : net.heads) {
        outputs.push_back(stack_forward(net.params, head, shared, /*relu_after_last=*/false));
    }
    return outputs;
}

std::vector<Matrix> ensemble_raw_outputs(const EnsembleTeacher& teacher, const Matrix& x) {
    std::vector<Matrix> outputs;
    outputs.reserve(teacher.members.size());
    for (const Mlp& member : teacher.members) outputs.push_back(mlp_raw_outputs(member, x));
    return outputs;
}

namespace {

MemberPredictions predictions_from_raw(TaskKind task, const std::vector<Matrix>& raw) {
    MemberPredictions out;
    out.task = task;
    if (task == TaskKind::classification) {
        const std::size_t k = raw.front().cols();
        out.probs = Matrix(raw.size(), k);
        for (std::size_t s = 0; s < raw.size(); ++s) {
            std::vector<double> p = softmax(raw[s].row(0));
            std::copy(p.begin(), p.end(), out.probs.row(s).begin());
        }
    } else {
        out.gaussians.reserve(raw.size());
        for (const Matrix& r : raw) out.gaussians.push_back(gaussian_from_raw(r.row(0)));
    }
    return out;
}

}  // namespace

MemberPredictions student_forward(const MultiHeadNet& net, std::span<const double> x) {
    if (x.size() != net.spec.core_widths.front()) {
        throw ShapeError("student_forward: input width mismatch");
    }
    Matrix xb(1, x.size(), std::vector<double>(x.begin(), x.end()));
    return predictions_from_raw(net.spec.task, student_raw_outputs(net, xb));
}

MemberPredictions ensemble_forward(const EnsembleTeacher& teacher, std::span<const double> x) {
    if (x.size() != teacher.spec().widths.front()) {
        throw ShapeError("ensemble_forward: input width mismatch");
    }
    Matrix xb(1, x.size(), std::vector<double>(x.begin(), x.end()));
    return predictions_from_raw(teacher.spec().task, ensemble_raw_outputs(teacher, xb));
}

Prediction combine_predictions(const MemberPredictions& members) {
    Prediction out;
    out.task = members.task;
    if (members.task == TaskKind::classification) {
        if (members.probs.rows() == 0) throw ShapeError("combine_predictions: no members");
        out.probs.assign(members.probs.cols(), 0.0);
        for (std::size_t s = 0; s < members.probs.rows(); ++s) {
            std::span<const double> row = members.probs.row(s);
            for (std::size_t k = 0; k < row.size(); ++k) out.probs[k] += row[k];
        }
        for (double& p : out.probs) p /= static_cast<double>(members.probs.rows());
    } else {
        if (members.gaussians.empty()) throw ShapeError("combine_predictions: no members");
        const double inv = 1.0 / static_cast<double>(members.gaussians.size());
        double mean = 0.0, aleatoric = 0.0;
        for (const MeanVar& g : members.gaussians) {
            mean += g.mean;
            aleatoric += g.var;
        }
        mean *= inv;
        aleatoric *= inv;
        double spread = 0.0;
        for (const MeanVar& g : members.gaussians) {
            spread += (g.mean - mean) * (g.mean - mean);
        }
        spread *= inv;  // population variance
        out.gaussian = MeanVar{mean, aleatoric + spread};
    }
    return out;
}

std::size_t count_params(const MlpSpec& spec) { return stack_params(spec.widths); }

std::size_t count_params(const MultiHeadSpec& spec) {
    return stack_params(spec.core_widths) + spec.heads * stack_params(spec.head_widths);
}

std::size_t count_params(const Mlp& mlp) { return count_params(mlp.spec); }
std::size_t count_params(const MultiHeadNet& net) { return count_params(net.spec); }

std::size_t count_params(const EnsembleTeacher& teacher) {
    return teacher.size() * count_params(teacher.spec());
}

std::size_t count_flops(const MlpSpec& spec) {
    return stack_flops(spec.widths, /*relu_after_last=*/false);
}

std::size_t count_flops(const MultiHeadSpec& spec) {
    return stack_flops(spec.core_widths, /*relu_after_last=*/true) +
           spec.heads * stack_flops(spec.head_widths, /*relu_after_last=*/false);
}

std::size_t count_flops(const Mlp& mlp) { return count_flops(mlp.spec); }
std::size_t count_flops(const MultiHeadNet& net) { return count_flops(net.spec); }

std::size_t count_flops(const EnsembleTeacher& teacher) {
    return teacher.size() * count_flops(teacher.spec());
}

}  // namespace enkd::models
