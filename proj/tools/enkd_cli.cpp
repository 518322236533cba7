// Command-line front end: trains teacher ensembles on the toy problems,
// distills them into shared-core multi-head students, and writes evaluation
// reports (metrics, uncertainty grids, histograms, total variation).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "enkd/checkpoint.hpp"
#include "enkd/datasets.hpp"
#include "enkd/errors.hpp"
#include "enkd/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace enkd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct EvalSettings {
    std::size_t grid_resolution = 41;
    std::size_t histogram_bins = 50;
};

struct AblateSettings {
    std::vector<double> beta_values;
    std::vector<bool> lambda_toggle;
    std::vector<std::size_t> head_counts;
    std::map<std::size_t, double> lambda_by_heads;
};

struct ExperimentConfig {
    train::RunConfig run;
    EvalSettings eval;
    AblateSettings ablate;
};

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("config: unknown key '" + key + "' in " + where);
        }
    }
}

losses::LambdaSchedule parse_lambda(const json& obj) {
    reject_unknown_keys(obj, {"kind", "value", "start_epoch", "end_epoch", "peak"}, "lambda");
    losses::LambdaSchedule schedule;
    const std::string kind = obj.at("kind").get<std::string>();
    if (kind == "constant") {
        schedule.kind = losses::LambdaSchedule::Kind::constant;
        schedule.value = obj.at("value").get<double>();
    } else if (kind == "ramp") {
        schedule.kind = losses::LambdaSchedule::Kind::ramp;
        schedule.start_epoch = obj.at("start_epoch").get<std::size_t>();
        schedule.end_epoch = obj.at("end_epoch").get<std::size_t>();
        schedule.peak = obj.at("peak").get<double>();
    } else {
        throw ConfigError("config: lambda kind must be 'constant' or 'ramp'");
    }
    return schedule;
}

// Overrides a schedule's magnitude while keeping its shape.
void set_lambda_magnitude(losses::LambdaSchedule& schedule, double magnitude) {
    if (schedule.kind == losses::LambdaSchedule::Kind::constant) {
        schedule.value = magnitude;
    } else {
        schedule.peak = magnitude;
    }
}

ExperimentConfig load_experiment_config(const fs::path& path,
                                        std::optional<std::uint64_t> seed_override,
                                        std::optional<std::size_t> heads_override) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path.string() + "'");
    json root;
    try {
        root = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: parse failure in '" + path.string() + "': " + e.what());
    }

    reject_unknown_keys(root, {"task", "seed", "epochs", "batch_size", "teacher", "student",
                               "eval", "ablate"},
                        "top level");
    const std::string task_name = root.at("task").get<std::string>();
    TaskKind task;
    if (task_name == "classification") {
        task = TaskKind::classification;
    } else if (task_name == "regression") {
        task = TaskKind::regression;
    } else {
        throw ConfigError("config: task must be 'classification' or 'regression'");
    }

    std::uint64_t seed = root.value("seed", std::uint64_t{17});
    if (seed_override) seed = *seed_override;

    std::size_t heads = 20;
    if (root.contains("student") && root["student"].contains("heads")) {
        heads = root["student"]["heads"].get<std::size_t>();
    }
    if (heads_override) heads = *heads_override;

    ExperimentConfig cfg;
    cfg.run = train::default_run_config(task, seed, heads);
    cfg.run.epochs = root.value("epochs", cfg.run.epochs);
    cfg.run.batch_size = root.value("batch_size", cfg.run.batch_size);

    if (root.contains("teacher")) {
        const json& t = root["teacher"];
        reject_unknown_keys(t, {"members", "lr0", "weight_decay"}, "teacher");
        cfg.run.teacher_members = t.value("members", cfg.run.teacher_members);
        cfg.run.teacher_lr0 = t.value("lr0", cfg.run.teacher_lr0);
        cfg.run.teacher_weight_decay = t.value("weight_decay", cfg.run.teacher_weight_decay);
    }
    if (root.contains("student")) {
        const json& s = root["student"];
        reject_unknown_keys(s, {"heads", "lr0", "weight_decay", "alpha", "beta", "t_ind",
                                "t_mean", "lambda"},
                            "student");
        cfg.run.student_lr0 = s.value("lr0", cfg.run.student_lr0);
        cfg.run.loss.weight_decay = s.value("weight_decay", cfg.run.loss.weight_decay);
        cfg.run.loss.alpha = s.value("alpha", cfg.run.loss.alpha);
        cfg.run.loss.beta = s.value("beta", cfg.run.loss.beta);
        cfg.run.loss.t_ind = s.value("t_ind", cfg.run.loss.t_ind);
        cfg.run.loss.t_mean = s.value("t_mean", cfg.run.loss.t_mean);
        if (s.contains("lambda")) cfg.run.loss.lambda = parse_lambda(s["lambda"]);
    }
    if (root.contains("eval")) {
        const json& e = root["eval"];
        reject_unknown_keys(e, {"grid_resolution", "histogram_bins"}, "eval");
        cfg.eval.grid_resolution = e.value("grid_resolution", cfg.eval.grid_resolution);
        cfg.eval.histogram_bins = e.value("histogram_bins", cfg.eval.histogram_bins);
    }
    if (root.contains("ablate")) {
        const json& a = root["ablate"];
        reject_unknown_keys(a, {"beta_values", "lambda_toggle", "head_counts", "lambda_by_heads"},
                            "ablate");
        if (a.contains("beta_values")) {
            cfg.ablate.beta_values = a["beta_values"].get<std::vector<double>>();
        }
        if (a.contains("lambda_toggle")) {
            cfg.ablate.lambda_toggle = a["lambda_toggle"].get<std::vector<bool>>();
        }
        if (a.contains("head_counts")) {
            cfg.ablate.head_counts = a["head_counts"].get<std::vector<std::size_t>>();
        }
        if (a.contains("lambda_by_heads")) {
            for (const auto& [key, value] : a["lambda_by_heads"].items()) {
                cfg.ablate.lambda_by_heads[std::stoul(key)] = value.get<double>();
            }
        }
    }
    cfg.run.validate();
    return cfg;
}

data::DatasetSplits make_dataset(TaskKind task, std::uint64_t seed) {
    return task == TaskKind::classification ? data::make_spiral(seed)
                                            : data::make_cubic_sine(seed);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    return os;
}

// Timestamps live only here so that every other output is byte-stable.
void write_run_manifest(const fs::path& dir, const std::string& command) {
    auto os = open_out(dir / "run_manifest.json");
    const auto now = std::chrono::system_clock::now();
    const auto unix_s = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch());
    json manifest;
    manifest["command"] = command;
    manifest["timestamp_unix"] = unix_s.count();
    os << manifest.dump(2) << '\n';
}

void write_header_record(std::ostream& os, const train::TrainedStudent& student,
                         const train::RunConfig& run) {
    json header;
    header["type"] = "header";
    header["heads"] = run.student_arch.heads;
    header["teachers"] = run.teacher_members;
    header["teachers_per_head"] = student.teachers_per_head;
    header["alpha"] = run.loss.alpha;
    header["beta"] = run.loss.beta;
    header["t_ind"] = run.loss.t_ind;
    header["t_mean"] = run.loss.t_mean;
    os << header.dump() << '\n';
}

void write_metrics_json(const fs::path& path, const train::EvalReport& report) {
    auto os = open_out(path);
    char buf[256];
    if (report.task == TaskKind::classification) {
        std::snprintf(buf, sizeof(buf),
                      "{\"task\":\"classification\",\"error\":%.17g,\"ece\":%.17g,"
                      "\"param_count\":%zu,\"flop_count\":%zu}\n",
                      report.error, report.ece, report.param_count, report.flop_count);
    } else {
        std::snprintf(buf, sizeof(buf),
                      "{\"task\":\"regression\",\"nll\":%.17g,"
                      "\"param_count\":%zu,\"flop_count\":%zu}\n",
                      report.nll, report.param_count, report.flop_count);
    }
    os << buf;
}

void write_grid_csv(const fs::path& path, const train::EvalReport& report) {
    auto os = open_out(path);
    char buf[320];
    if (report.task == TaskKind::classification) {
        os << "x1,x2,predictive,aleatoric,epistemic\n";
        for (std::size_t i = 0; i < report.grid_uncertainty.size(); ++i) {
            const auto& u = report.grid_uncertainty[i];
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          report.grid_inputs(i, 0), report.grid_inputs(i, 1), u.predictive,
                          u.aleatoric, u.epistemic);
            os << buf;
        }
    } else {
        os << "x1,predictive,aleatoric,epistemic,mean,std_lower,std_upper\n";
        for (std::size_t i = 0; i < report.grid_uncertainty.size(); ++i) {
            const auto& u = report.grid_uncertainty[i];
            const auto& p = report.grid_prediction[i];
            const double band = std::sqrt(p.var);
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          report.grid_inputs(i, 0), u.predictive, u.aleatoric, u.epistemic,
                          p.mean, p.mean - band, p.mean + band);
            os << buf;
        }
    }
}

std::vector<double> uncertainty_values(const train::EvalReport& report,
                                       double uncertainty::UncertaintyTriple::* field) {
    std::vector<double> out;
    out.reserve(report.test_uncertainty.size());
    for (const auto& t : report.test_uncertainty) out.push_back(t.*field);
    return out;
}

void write_histograms(const fs::path& dir, const train::EvalReport& report,
                      const train::EvalReport* reference, std::size_t bins) {
    const std::pair<const char*, double uncertainty::UncertaintyTriple::*> kinds[] = {
        {"predictive", &uncertainty::UncertaintyTriple::predictive},
        {"aleatoric", &uncertainty::UncertaintyTriple::aleatoric},
        {"epistemic", &uncertainty::UncertaintyTriple::epistemic},
    };
    for (const auto& [name, field] : kinds) {
        const std::vector<double> values_a = uncertainty_values(report, field);
        std::vector<double> values_b;
        if (reference) values_b = uncertainty_values(*reference, field);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (double v : values_a) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (double v : values_b) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (!(hi - lo > 1e-12)) {
            lo -= 0.5;
            hi += 0.5;
        }
        const auto ha = metrics::build_histogram(values_a, bins, lo, hi);
        const auto hb = metrics::build_histogram(values_b, bins, lo, hi);
        auto os = open_out(dir / (std::string("hist_") + name + ".csv"));
        metrics::write_histogram_csv(os, ha, hb);
    }
}

void write_tv_json(const fs::path& path, const train::TvSummary& tv, std::size_t bins) {
    auto os = open_out(path);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"bins\":%zu,\"predictive\":%.17g,\"aleatoric\":%.17g,"
                  "\"epistemic\":%.17g}\n",
                  bins, tv.predictive, tv.aleatoric, tv.epistemic);
    os << buf;
}

train::EvalReport evaluate_checkpoint(const fs::path& ckpt, const data::LabelledSet& test,
                                      const Matrix& grid) {
    const auto info = models::read_checkpoint_info(ckpt);
    if (info.kind == "teacher") {
        return train::evaluate(models::load_teacher(ckpt), test, grid);
    }
    return train::evaluate(models::load_student(ckpt), test, grid);
}

void write_evaluation(const fs::path& out_dir, const train::EvalReport& report,
                      const train::EvalReport* reference, std::size_t bins) {
    ensure_dir(out_dir);
    write_metrics_json(out_dir / "metrics.json", report);
    write_grid_csv(out_dir / "grid.csv", report);
    write_histograms(out_dir, report, reference, bins);
    if (reference) {
        write_tv_json(out_dir / "tv.json", train::tv_between(report, *reference, bins), bins);
    }
}

// ---- subcommands -------------------------------------------------------

int cmd_train_teacher(const fs::path& config_path, std::optional<std::uint64_t> seed,
                      const fs::path& out_dir) {
    const ExperimentConfig cfg = load_experiment_config(config_path, seed, std::nullopt);
    const auto dataset = make_dataset(cfg.run.task, cfg.run.seed);
    const auto trained = train::train_teacher(cfg.run, dataset);
    ensure_dir(out_dir);
    models::save_teacher(out_dir / "teacher.ckpt", trained.ensemble);
    auto log_os = open_out(out_dir / "teacher_train_log.jsonl");
    train::write_metric_log(log_os, trained.log);
    write_run_manifest(out_dir, "train-teacher");
    std::cout << "teacher: " << trained.ensemble.size() << " members, "
              << models::count_params(trained.ensemble) << " params -> "
              << (out_dir / "teacher.ckpt").string() << "\n";
    return kExitOk;
}

int cmd_distill(const fs::path& config_path, const fs::path& teacher_path,
                std::optional<std::uint64_t> seed, std::optional<std::size_t> heads,
                const std::string& preset, const fs::path& out_dir) {
    ExperimentConfig cfg = load_experiment_config(config_path, seed, heads);
    if (preset == "hydra") {
        cfg.run.loss.alpha = 1.0;
        cfg.run.loss.beta = 1.0;
        cfg.run.loss.lambda = losses::LambdaSchedule{};  // constant 0
    } else if (!preset.empty() && preset != "hydra-plus") {
        throw ConfigError("unknown preset '" + preset + "'");
    }
    const auto teacher = models::load_teacher(teacher_path);
    if (teacher.spec().task != cfg.run.task) {
        throw ConfigError("distill: teacher task does not match config task");
    }
    // The loaded ensemble defines N; the config's teacher block is ignored here.
    cfg.run.teacher_members = teacher.size();
    cfg.run.validate();

    const auto dataset = make_dataset(cfg.run.task, cfg.run.seed);
    const auto student = train::distill_student(teacher, cfg.run, dataset);
    ensure_dir(out_dir);
    models::save_student(out_dir / "student.ckpt", student.net);
    auto log_os = open_out(out_dir / "student_train_log.jsonl");
    write_header_record(log_os, student, cfg.run);
    train::write_metric_log(log_os, student.log);
    write_run_manifest(out_dir, "distill");
    std::cout << "student: " << cfg.run.student_arch.heads << " heads, "
              << models::count_params(student.net) << " params -> "
              << (out_dir / "student.ckpt").string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const fs::path& config_path, const fs::path& model_path,
                 const std::optional<fs::path>& reference_path, const fs::path& out_dir) {
    const ExperimentConfig cfg = load_experiment_config(config_path, std::nullopt, std::nullopt);
    if (!fs::exists(model_path)) {
        throw IoError("evaluate: missing checkpoint '" + model_path.string() + "'");
    }
    const auto dataset = make_dataset(cfg.run.task, cfg.run.seed);
    const Matrix grid = data::make_eval_grid(cfg.run.task, cfg.eval.grid_resolution);
    const auto report = evaluate_checkpoint(model_path, dataset.test, grid);
    std::optional<train::EvalReport> reference;
    if (reference_path) {
        if (!fs::exists(*reference_path)) {
            throw IoError("evaluate: missing reference checkpoint '" +
                          reference_path->string() + "'");
        }
        reference = evaluate_checkpoint(*reference_path, dataset.test, grid);
    }
    write_evaluation(out_dir, report, reference ? &*reference : nullptr,
                     cfg.eval.histogram_bins);
    write_run_manifest(out_dir, "evaluate");
    std::cout << "report -> " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_ablate(const fs::path& config_path, const fs::path& teacher_path,
               const fs::path& out_dir) {
    const ExperimentConfig cfg = load_experiment_config(config_path, std::nullopt, std::nullopt);
    const bool have_grid = !cfg.ablate.beta_values.empty() && !cfg.ablate.lambda_toggle.empty();
    const bool have_heads = !cfg.ablate.head_counts.empty();
    if (!have_grid && !have_heads) {
        std::cout << "ablate: empty sweep, nothing to do\n";
        return kExitOk;
    }
    const auto teacher = models::load_teacher(teacher_path);
    if (teacher.spec().task != cfg.run.task) {
        throw ConfigError("ablate: teacher task does not match config task");
    }
    const auto dataset = make_dataset(cfg.run.task, cfg.run.seed);
    const Matrix grid = data::make_eval_grid(cfg.run.task, cfg.eval.grid_resolution);
    const auto teacher_report = train::evaluate(teacher, dataset.test, grid);

    auto run_cell = [&](const std::string& name, train::RunConfig run) {
        run.teacher_members = teacher.size();
        run.validate();
        const auto student = train::distill_student(teacher, run, dataset);
        const fs::path cell_dir = out_dir / name;
        ensure_dir(cell_dir);
        models::save_student(cell_dir / "student.ckpt", student.net);
        auto log_os = open_out(cell_dir / "student_train_log.jsonl");
        write_header_record(log_os, student, run);
        train::write_metric_log(log_os, student.log);
        const auto report = train::evaluate(student.net, dataset.test, grid);
        write_evaluation(cell_dir, report, &teacher_report, cfg.eval.histogram_bins);
        std::cout << "ablate cell '" << name << "' done\n";
    };

    if (have_grid) {
        for (bool lambda_on : cfg.ablate.lambda_toggle) {
            for (double beta : cfg.ablate.beta_values) {
                train::RunConfig run = cfg.run;
                run.loss.beta = beta;
                if (!lambda_on) run.loss.lambda = losses::LambdaSchedule{};
                char name[64];
                std::snprintf(name, sizeof(name), "beta%g_l4%s", beta, lambda_on ? "on" : "off");
                run_cell(name, run);
            }
        }
    }
    for (std::size_t heads : cfg.ablate.head_counts) {
        train::RunConfig run = cfg.run;
        run.student_arch = models::toy_student_spec(cfg.run.task, heads);
        if (auto it = cfg.ablate.lambda_by_heads.find(heads);
            it != cfg.ablate.lambda_by_heads.end()) {
            set_lambda_magnitude(run.loss.lambda, it->second);
        }
        run_cell("heads" + std::to_string(heads), run);
    }
    write_run_manifest(out_dir, "ablate");
    return kExitOk;
}

int cmd_dump_dataset(const fs::path& config_path, std::optional<std::uint64_t> seed,
                     const fs::path& out_file) {
    const ExperimentConfig cfg = load_experiment_config(config_path, seed, std::nullopt);
    const auto dataset = make_dataset(cfg.run.task, cfg.run.seed);
    if (out_file.has_parent_path()) ensure_dir(out_file.parent_path());
    auto os = open_out(out_file);
    data::write_csv(os, dataset);
    std::cout << "dataset -> " << out_file.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep-ensemble distillation into shared-core multi-head students "
                 "with decomposed uncertainty evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path = "out";
    std::string teacher_path;
    std::string model_path;
    std::string reference_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> heads;

    auto add_common = [&](CLI::App* cmd, bool with_seed = true) {
        cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
        cmd->add_option("--out", out_path, "output directory or file");
        if (with_seed) {
            cmd->add_option_function<std::uint64_t>(
                "--seed", [&](std::uint64_t s) { seed = s; }, "override the config seed");
        }
    };

    CLI::App* train_cmd = app.add_subcommand("train-teacher", "train the teacher ensemble");
    add_common(train_cmd);

    CLI::App* distill_cmd = app.add_subcommand("distill", "distill a teacher into a student");
    add_common(distill_cmd);
    distill_cmd->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
    distill_cmd->add_option_function<std::size_t>(
        "--heads", [&](std::size_t h) { heads = h; }, "override the head count");
    distill_cmd->add_option("--preset", preset, "hydra | hydra-plus")
        ->check(CLI::IsMember({"hydra", "hydra-plus"}));

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
    add_common(eval_cmd, /*with_seed=*/false);
    eval_cmd->add_option("--model", model_path, "model checkpoint")->required();
    eval_cmd->add_option("--reference", reference_path,
                         "reference checkpoint for histogram/TV comparison");

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the configured sweeps");
    add_common(ablate_cmd, /*with_seed=*/false);
    ablate_cmd->add_option("--teacher", teacher_path, "teacher checkpoint")->required();

    CLI::App* dump_cmd = app.add_subcommand("dump-dataset", "write the dataset as CSV");
    add_common(dump_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (train_cmd->parsed()) return cmd_train_teacher(config_path, seed, out_path);
        if (distill_cmd->parsed()) {
            return cmd_distill(config_path, teacher_path, seed, heads, preset, out_path);
        }
        if (eval_cmd->parsed()) {
            std::optional<fs::path> reference;
            if (!reference_path.empty()) reference = reference_path;
            return cmd_evaluate(config_path, model_path, reference, out_path);
        }
        if (ablate_cmd->parsed()) return cmd_ablate(config_path, teacher_path, out_path);
        if (dump_cmd->parsed()) return cmd_dump_dataset(config_path, seed, out_path);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
