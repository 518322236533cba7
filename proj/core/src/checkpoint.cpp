#include "enkd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "enkd/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace enkd::models {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'E', 'N', 'K', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

const char* task_name(TaskKind task) {
    return task == TaskKind::classification ? "classification" : "regression";
}

TaskKind task_from_name(const std::string& name) {
    if (name == "classification") return TaskKind::classification;
    if (name == "regression") return TaskKind::regression;
    throw IoError("checkpoint: unknown task '" + name + "'");
}

json tensor_table(const ParamStore& store) {
    json table = json::array();
    for (const auto& t : store) {
        table.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
    }
    return table;
}

void write_file(const std::filesystem::path& path, const json& manifest,
                const std::vector<const ParamStore*>& stores) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot open '" + path.string() + "' for writing");
    const std::string text = manifest.dump();
    const std::uint64_t len = text.size();
    os.write(kMagic, sizeof(kMagic));
    os.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const ParamStore* store : stores) {
        for (const auto& t : *store) {
            os.write(reinterpret_cast<const char*>(t.value.data().data()),
                     static_cast<std::streamsize>(t.value.size() * sizeof(double)));
        }
    }
    if (!os) throw IoError("checkpoint: write to '" + path.string() + "' failed");
}

json read_manifest(std::ifstream& is, const std::filesystem::path& path) {
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw IoError("checkpoint: '" + path.string() + "' is not a checkpoint file");
    }
    is.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!is || version != kVersion) {
        throw IoError("checkpoint: unsupported format version in '" + path.string() + "'");
    }
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (!is) throw IoError("checkpoint: truncated manifest in '" + path.string() + "'");
    return json::parse(text);
}

void read_tensors(std::ifstream& is, const std::filesystem::path& path, const json& table,
                  ParamStore& store) {
    for (const auto& entry : table) {
        const std::string name = entry.at("name").get<std::string>();
        const std::size_t rows = entry.at("rows").get<std::size_t>();
        const std::size_t cols = entry.at("cols").get<std::size_t>();
        Matrix value(rows, cols);
        is.read(reinterpret_cast<char*>(value.data().data()),
                static_cast<std::streamsize>(value.size() * sizeof(double)));
        if (!is) throw IoError("checkpoint: truncated tensor data in '" + path.string() + "'");
        store.add(name, std::move(value));
    }
}

// Rebuilds a model skeleton, then overwrites its tensors with stored ones.
void copy_into(ParamStore& dst, const ParamStore& src) {
    if (dst.size() != src.size()) throw IoError("checkpoint: tensor count mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst.at(i).name != src.at(i).name ||
            !dst.at(i).value.same_shape(src.at(i).value)) {
            throw IoError("checkpoint: tensor layout mismatch at '" + src.at(i).name + "'");
        }
        dst.at(i).value = src.at(i).value;
    }
}

}  // namespace

void save_teacher(const std::filesystem::path& path, const EnsembleTeacher& teacher) {
    json manifest;
    manifest["kind"] = "teacher";
    manifest["task"] = task_name(teacher.spec().task);
    manifest["seed"] = teacher.base_seed;
    manifest["members"] = teacher.size();
    manifest["widths"] = teacher.spec().widths;
    manifest["param_count"] = count_params(teacher);
    manifest["flop_count"] = count_flops(teacher);
    json tensors = json::array();
    std::vector<const ParamStore*> stores;
    for (std::size_t n = 0; n < teacher.size(); ++n) {
        for (const auto& t : teacher.members[n].params) {
            tensors.push_back({{"name", "member" + std::to_string(n) + "." + t.name},
                               {"rows", t.value.rows()},
                               {"cols", t.value.cols()}});
        }
        stores.push_back(&teacher.members[n].params);
    }
    manifest["tensors"] = tensors;
    write_file(path, manifest, stores);
}

EnsembleTeacher load_teacher(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open '" + path.string() + "'");
    const json manifest = read_manifest(is, path);
    if (manifest.at("kind") != "teacher") {
        throw IoError("checkpoint: '" + path.string() + "' does not hold a teacher");
    }
    MlpSpec spec;
    spec.task = task_from_name(manifest.at("task").get<std::string>());
    spec.widths = manifest.at("widths").get<std::vector<std::size_t>>();
    const std::size_t members = manifest.at("members").get<std::size_t>();
    const std::uint64_t seed = manifest.at("seed").get<std::uint64_t>();

    ParamStore flat;
    read_tensors(is, path, manifest.at("tensors"), flat);

    EnsembleTeacher teacher = build_ensemble(spec, members, seed);
    const std::size_t per_member = flat.size() / members;
    for (std::size_t n = 0; n < members; ++n) {
        ParamStore member_store;
        for (std::size_t i = 0; i < per_member; ++i) {
            const auto& t = flat.at(n * per_member + i);
            const std::string prefix = "member" + std::to_string(n) + ".";
            member_store.add(t.name.substr(prefix.size()), t.value);
        }
        copy_into(teacher.members[n].params, member_store);
    }
    return teacher;
}

void save_student(const std::filesystem::path& path, const MultiHeadNet& net) {
    json manifest;
    manifest["kind"] = "student";
    manifest["task"] = task_name(net.spec.task);
    manifest["seed"] = net.seed;
    manifest["heads"] = net.spec.heads;
    manifest["core_widths"] = net.spec.core_widths;
    manifest["head_widths"] = net.spec.head_widths;
    manifest["param_count"] = count_params(net);
    manifest["flop_count"] = count_flops(net);
    manifest["tensors"] = tensor_table(net.params);
    write_file(path, manifest, {&net.params});
}

MultiHeadNet load_student(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open '" + path.string() + "'");
    const json manifest = read_manifest(is, path);
    if (manifest.at("kind") != "student") {
        throw IoError("checkpoint: '" + path.string() + "' does not hold a student");
    }
    MultiHeadSpec spec;
    spec.task = task_from_name(manifest.at("task").get<std::string>());
    spec.core_widths = manifest.at("core_widths").get<std::vector<std::size_t>>();
    spec.head_widths = manifest.at("head_widths").get<std::vector<std::size_t>>();
    spec.heads = manifest.at("heads").get<std::size_t>();

    ParamStore stored;
    read_tensors(is, path, manifest.at("tensors"), stored);

    MultiHeadNet net = build_student(spec, manifest.at("seed").get<std::uint64_t>());
    copy_into(net.params, stored);
    return net;
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open '" + path.string() + "'");
    const json manifest = read_manifest(is, path);
    CheckpointInfo info;
    info.kind = manifest.at("kind").get<std::string>();
    info.task = task_from_name(manifest.at("task").get<std::string>());
    info.seed = manifest.at("seed").get<std::uint64_t>();
    info.param_count = manifest.at("param_count").get<std::size_t>();
    info.flop_count = manifest.at("flop_count").get<std::size_t>();
    return info;
}

}  // namespace enkd::models
