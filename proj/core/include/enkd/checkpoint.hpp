#pragma once

#include <filesystem>

#include "enkd/models.hpp"

namespace enkd::models {

// Single-file checkpoint: magic, format version, a JSON manifest
// (architecture, task, seed, param/FLOP counts, tensor table), then the raw
// tensor data as 64-bit little-endian floats in manifest order. Round-trips
// are bitwise exact.
void save_teacher(const std::filesystem::path& path, const EnsembleTeacher& teacher);
EnsembleTeacher load_teacher(const std::filesystem::path& path);

void save_student(const std::filesystem::path& path, const MultiHeadNet& net);
MultiHeadNet load_student(const std::filesystem::path& path);

// Peek at the manifest without materialising the model.
struct CheckpointInfo {
    std::string kind;  // "teacher" | "student"
    TaskKind task = TaskKind::classification;
    std::uint64_t seed = 0;
    std::size_t param_count = 0;
    std::size_t flop_count = 0;
};
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

}  // namespace enkd::models
