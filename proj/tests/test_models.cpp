#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "enkd/checkpoint.hpp"
#include "enkd/errors.hpp"
#include "enkd/models.hpp"

using namespace enkd;
using namespace enkd::models;

namespace {

MultiHeadSpec tiny_student(TaskKind task, std::size_t heads) {
    MultiHeadSpec spec;
    spec.task = task;
    spec.heads = heads;
    spec.core_widths = {2, 6};
    spec.head_widths = {6, 5, task == TaskKind::classification ? std::size_t{3} : std::size_t{2}};
    return spec;
}

}  // namespace

TEST_CASE("parameter counts reproduce the published totals") {
    const MlpSpec cls_teacher = toy_teacher_spec(TaskKind::classification);
    CHECK(count_params(cls_teacher) == 30903);
    CHECK(20 * count_params(cls_teacher) == 618060);

    const MultiHeadSpec cls_student = toy_student_spec(TaskKind::classification, 20);
    CHECK(count_params(cls_student) == 228560);

    const MlpSpec reg_teacher = toy_teacher_spec(TaskKind::regression);
    CHECK(count_params(reg_teacher) == 5302);
    CHECK(20 * count_params(reg_teacher) == 106040);

    const MultiHeadSpec reg_student = toy_student_spec(TaskKind::regression, 20);
    CHECK(count_params(reg_student) == 55690);

    MlpSpec single;
    single.task = TaskKind::classification;
    single.widths = {2, 3};
    CHECK(count_params(single) == 9);
}

TEST_CASE("FLOP counts reproduce the published totals") {
    CHECK(count_flops(toy_teacher_spec(TaskKind::classification)) == 31303);
    CHECK(20 * count_flops(toy_teacher_spec(TaskKind::classification)) == 626060);
    CHECK(count_flops(toy_student_spec(TaskKind::classification, 20)) == 230860);

    CHECK(count_flops(toy_teacher_spec(TaskKind::regression)) == 5452);
    CHECK(20 * count_flops(toy_teacher_spec(TaskKind::regression)) == 109040);
    CHECK(count_flops(toy_student_spec(TaskKind::regression, 20)) == 56790);

    MlpSpec single;
    single.task = TaskKind::classification;
    single.widths = {2, 3};
    CHECK(count_flops(single) == 9);  // no activation after the output layer
}

TEST_CASE("student params decompose into core plus M heads") {
    for (std::size_t m : {2, 5, 10, 20}) {
        const auto spec = toy_student_spec(TaskKind::classification, m);
        const auto spec_plus = toy_student_spec(TaskKind::classification, m + 1);
        const std::size_t head_cost = count_params(spec_plus) - count_params(spec);
        MlpSpec head_only;
        head_only.widths = {100, 100, 3};
        CHECK(head_cost == count_params(head_only));
    }
}

TEST_CASE("build_student validates the spec") {
    auto bad = tiny_student(TaskKind::classification, 1);
    CHECK_THROWS_AS(build_student(bad, 1), ConfigError);
    auto mismatched = tiny_student(TaskKind::classification, 2);
    mismatched.head_widths.front() = 7;
    CHECK_THROWS_AS(build_student(mismatched, 1), ConfigError);
}

TEST_CASE("student_forward: shapes, probabilities, symmetry") {
    auto net = build_student(tiny_student(TaskKind::classification, 2), 99);
    const std::vector<double> x{0.3, -0.7};
    auto out = student_forward(net, x);
    REQUIRE(out.probs.rows() == 2);
    for (std::size_t m = 0; m < 2; ++m) {
        double sum = 0.0;
        for (double p : out.probs.row(m)) sum += p;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }

    // identical heads produce identical rows
    for (std::size_t l = 0; l < net.heads[0].size(); ++l) {
        net.params.at(net.heads[1][l].weight).value = net.params.at(net.heads[0][l].weight).value;
        net.params.at(net.heads[1][l].bias).value = net.params.at(net.heads[0][l].bias).value;
    }
    out = student_forward(net, x);
    for (std::size_t k = 0; k < out.probs.cols(); ++k) {
        CHECK(out.probs(0, k) == out.probs(1, k));
    }

    CHECK_THROWS_AS(student_forward(net, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("regression student variances are positive") {
    auto net = build_student(tiny_student(TaskKind::regression, 3), 4);
    for (double x : {-25.0, -1.0, 0.0, 3.0, 40.0}) {
        const auto out = student_forward(net, std::vector<double>{x, x});
        for (const auto& g : out.gaussians) CHECK(g.var > 0.0);
    }
}

TEST_CASE("combine_predictions") {
    MemberPredictions members;
    members.task = TaskKind::classification;
    members.probs = Matrix(2, 2, {1, 0, 0, 1});
    const auto combined = combine_predictions(members);
    CHECK(combined.probs == std::vector<double>{0.5, 0.5});

    MemberPredictions single;
    single.task = TaskKind::classification;
    single.probs = Matrix(1, 3, {0.2, 0.5, 0.3});
    CHECK(combine_predictions(single).probs == std::vector<double>{0.2, 0.5, 0.3});

    MemberPredictions reg;
    reg.task = TaskKind::regression;
    reg.gaussians = {MeanVar{0.0, 1.0}, MeanVar{2.0, 1.0}};
    const auto g = combine_predictions(reg).gaussian;
    CHECK(g.mean == doctest::Approx(1.0));
    CHECK(g.var == doctest::Approx(2.0));  // 1 aleatoric + 1 variance of means
}

TEST_CASE("ensemble seeds and forward") {
    const auto teacher = build_ensemble(toy_teacher_spec(TaskKind::classification), 3, 50);
    CHECK(teacher.members[0].seed == 50);
    CHECK(teacher.members[2].seed == 52);
    // different seeds, different parameters
    CHECK(teacher.members[0].params.at(0).value(0, 0) !=
          teacher.members[1].params.at(0).value(0, 0));

    const auto out = ensemble_forward(teacher, std::vector<double>{0.1, 0.2});
    CHECK(out.probs.rows() == 3);
}

TEST_CASE("batched forward equals single-input forward") {
    auto net = build_student(tiny_student(TaskKind::classification, 3), 12);
    Matrix batch(2, 2, {0.4, -0.2, -1.0, 0.9});
    const auto raw = student_raw_outputs(net, batch);
    for (std::size_t row = 0; row < 2; ++row) {
        const auto single = student_forward(net, batch.row(row));
        for (std::size_t m = 0; m < 3; ++m) {
            const auto probs = softmax(raw[m].row(row));
            for (std::size_t k = 0; k < probs.size(); ++k) {
                CHECK(probs[k] == doctest::Approx(single.probs(m, k)).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("checkpoint round-trip is bitwise exact") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "enkd_ckpt_test";
    fs::create_directories(dir);

    MlpSpec small;
    small.task = TaskKind::regression;
    small.widths = {1, 7, 2};
    const auto teacher = build_ensemble(small, 2, 7);
    save_teacher(dir / "t.ckpt", teacher);
    const auto loaded = load_teacher(dir / "t.ckpt");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded.base_seed == 7);
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t p = 0; p < teacher.members[n].params.size(); ++p) {
            const auto& a = teacher.members[n].params.at(p).value;
            const auto& b = loaded.members[n].params.at(p).value;
            REQUIRE(a.size() == b.size());
            CHECK(std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
        }
    }

    auto student = build_student(tiny_student(TaskKind::classification, 2), 3);
    save_student(dir / "s.ckpt", student);
    const auto loaded_student = load_student(dir / "s.ckpt");
    for (std::size_t p = 0; p < student.params.size(); ++p) {
        const auto& a = student.params.at(p).value;
        const auto& b = loaded_student.params.at(p).value;
        CHECK(std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
    }

    const auto info = read_checkpoint_info(dir / "s.ckpt");
    CHECK(info.kind == "student");
    CHECK(info.param_count == count_params(student));

    CHECK_THROWS_AS(load_student(dir / "t.ckpt"), IoError);
    CHECK_THROWS_AS(load_teacher(dir / "missing.ckpt"), IoError);
    fs::remove_all(dir);
}
