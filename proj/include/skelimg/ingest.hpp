#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "skelimg/skeleton.hpp"

namespace skelimg {

enum class DatasetKind { ntu60, ntu120, synthetic };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view text);

/// Largest valid action id for the dataset kind (0 = unbounded).
int max_action_id(DatasetKind kind);

struct IndexEntry {
    SampleMeta meta;
    std::filesystem::path path;
};

struct DatasetIndex {
    std::vector<IndexEntry> entries;  // sorted by meta.source_name
    DatasetKind kind = DatasetKind::synthetic;
};

struct IndexBuildResult {
    DatasetIndex index;
    std::vector<std::string> skipped;  // "<name>: <reason>"
};

/// Parses `SsssCcccPpppRrrrAaaa[.ext]`. source_name is the name without its
/// extension or directory.
SampleMeta parse_ntu_filename(std::string_view name);

/// Reads the NTU text layout. Only the first three fields of each joint line
/// are consumed; the rest are ignored.
SkeletonSequence parse_skeleton_file(std::string_view content, const SkeletonTopology& topology);

SkeletonSequence read_skeleton_file(const std::filesystem::path& path, const SkeletonTopology& topology);

/// Inverse of parse_skeleton_file. Emits the full NTU field layout (10-field
/// body-info lines, 12-field joint lines) with zeros in the fields the reader
/// ignores; coordinates are written in shortest round-trip form.
std::string write_skeleton_file(const SkeletonSequence& seq);

/// Keeps `max_bodies` slots per frame, ranked by number of frames tracked,
/// then total motion energy, then smaller body_id. Missing slots are filled
/// with untracked all-zero bodies.
SkeletonSequence select_bodies(const SkeletonSequence& seq, int max_bodies);

/// Sum over consecutive tracked frame pairs of squared joint displacements.
double motion_energy(const SkeletonSequence& seq, std::uint64_t body_id);

/// Throws Error(duplicate_name) if two listed names share a source_name.
IndexBuildResult build_index(const std::vector<std::string>& listing, DatasetKind kind);

/// build_index over the regular files of `root` (non-recursive); entry paths
/// are absolute under root.
IndexBuildResult scan_directory(const std::filesystem::path& root, DatasetKind kind,
                                std::string_view extension = ".skeleton");

/// source_name,setup,camera,performer,replication,action per line.
std::string index_to_csv(const DatasetIndex& index);

}  // namespace skelimg
