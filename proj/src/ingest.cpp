#include "skelimg/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "skelimg/error.hpp"

namespace skelimg {

std::string_view to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::ntu60: return "ntu60";
        case DatasetKind::ntu120: return "ntu120";
        case DatasetKind::synthetic: return "synthetic";
    }
    return "synthetic";
}

DatasetKind parse_dataset_kind(std::string_view text) {
    if (text == "ntu60") return DatasetKind::ntu60;
    if (text == "ntu120") return DatasetKind::ntu120;
    if (text == "synthetic") return DatasetKind::synthetic;
    throw Error(ErrorCode::invalid_argument, "unknown dataset kind '" + std::string(text) + "'");
}

int max_action_id(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::ntu60: return 60;
        case DatasetKind::ntu120: return 120;
        case DatasetKind::synthetic: return 0;
    }
    return 0;
}

SampleMeta parse_ntu_filename(std::string_view name) {
    if (auto slash = name.find_last_of("/\\"); slash != std::string_view::npos) name.remove_prefix(slash + 1);

    struct Field {
        char tag;
        const char* label;
        int SampleMeta::*slot;
    };
    static constexpr Field fields[] = {
        {'S', "setup", &SampleMeta::setup_id},
        {'C', "camera", &SampleMeta::camera_id},
        {'P', "performer", &SampleMeta::performer_id},
        {'R', "replication", &SampleMeta::replication_id},
        {'A', "action", &SampleMeta::action_id},
    };

    SampleMeta meta;
    std::size_t pos = 0;
    for (const Field& f : fields) {
        const bool tagged = pos < name.size() && name[pos] == f.tag;
        bool digits = tagged && pos + 4 <= name.size();
        for (std::size_t i = pos + 1; digits && i < pos + 4; ++i) {
            digits = name[i] >= '0' && name[i] <= '9';
        }
        if (!digits) {
            throw Error(ErrorCode::malformed_name,
                        "'" + std::string(name) + "': missing or malformed " + f.label + " field");
        }
        int value = 0;
        std::from_chars(name.data() + pos + 1, name.data() + pos + 4, value);
        if (value < 1) {
            throw Error(ErrorCode::malformed_name, "'" + std::string(name) + "': " + f.label + " id must be >= 1");
        }
        meta.*f.slot = value;
        pos += 4;
    }
    if (pos != name.size() && name[pos] != '.') {
        throw Error(ErrorCode::malformed_name, "'" + std::string(name) + "': unexpected text after action field");
    }
    meta.source_name = std::string(name.substr(0, pos));
    return meta;
}

namespace {

class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    // Next non-blank line split into whitespace-separated fields; empty at EOF.
    std::vector<std::string_view> next() {
        while (pos_ < text_.size()) {
            std::size_t end = text_.find('\n', pos_);
            if (end == std::string_view::npos) end = text_.size();
            std::string_view line = text_.substr(pos_, end - pos_);
            pos_ = end + 1;
            std::vector<std::string_view> out;
            std::size_t i = 0;
            while (i < line.size()) {
                while (i < line.size() && is_space(line[i])) ++i;
                std::size_t j = i;
                while (j < line.size() && !is_space(line[j])) ++j;
                if (j > i) out.push_back(line.substr(i, j - i));
                i = j;
            }
            if (!out.empty()) return out;
        }
        return {};
    }

private:
    static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

    std::string_view text_;
    std::size_t pos_ = 0;
};

std::string at_frame(std::size_t frame) { return "frame " + std::to_string(frame + 1); }

template <typename T>
T parse_number(std::string_view field, std::size_t frame, const char* what) {
    T value{};
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw Error(ErrorCode::non_numeric_field,
                    at_frame(frame) + ": " + what + " '" + std::string(field) + "' is not numeric");
    }
    return value;
}

std::vector<std::string_view> require_line(LineReader& reader, std::size_t frame, const char* what) {
    auto fields = reader.next();
    if (fields.empty()) {
        throw Error(ErrorCode::truncated_file, at_frame(frame) + ": expected " + what + ", found end of file");
    }
    return fields;
}

}  // namespace

SkeletonSequence parse_skeleton_file(std::string_view content, const SkeletonTopology& topology) {
    LineReader reader(content);
    auto header = reader.next();
    if (header.empty()) throw Error(ErrorCode::truncated_file, "missing frame count");
    const long frame_count = parse_number<long>(header[0], 0, "frame count");
    if (frame_count < 1) throw Error(ErrorCode::empty_sequence, "file declares no frames");

    SkeletonSequence seq;
    seq.frames.reserve(static_cast<std::size_t>(frame_count));
    for (std::size_t t = 0; t < static_cast<std::size_t>(frame_count); ++t) {
        Frame frame;
        frame.timestamp_index = static_cast<int>(t);
        auto body_line = require_line(reader, t, "body count");
        const long body_count = parse_number<long>(body_line[0], t, "body count");
        for (long b = 0; b < body_count; ++b) {
            auto info = require_line(reader, t, "body info line");
            Body body;
            body.body_id = parse_number<std::uint64_t>(info[0], t, "body id");

            auto count_line = require_line(reader, t, "joint count");
            const long joints = parse_number<long>(count_line[0], t, "joint count");
            if (joints != topology.joint_count()) {
                throw Error(ErrorCode::joint_count_mismatch,
                            at_frame(t) + ": body declares " + std::to_string(joints) + " joints, topology has " +
                                std::to_string(topology.joint_count()));
            }
            body.joints.reserve(static_cast<std::size_t>(joints));
            for (long j = 0; j < joints; ++j) {
                auto fields = require_line(reader, t, "joint line");
                if (fields.size() < 3) {
                    throw Error(ErrorCode::truncated_file, at_frame(t) + ": joint line has fewer than 3 fields");
                }
                Vec3 p{parse_number<double>(fields[0], t, "x"), parse_number<double>(fields[1], t, "y"),
                       parse_number<double>(fields[2], t, "z")};
                body.joints.push_back(p);
            }
            frame.bodies.push_back(std::move(body));
        }
        seq.frames.push_back(std::move(frame));
    }
    check_sequence(seq, topology);
    return seq;
}

SkeletonSequence read_skeleton_file(const std::filesystem::path& path, const SkeletonTopology& topology) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    SkeletonSequence seq;
    try {
        seq = parse_skeleton_file(buf.str(), topology);
    } catch (const Error& e) {
        throw Error(e.code(), path.filename().string() + ": " + e.detail());
    }
    try {
        seq.meta = parse_ntu_filename(path.filename().string());
    } catch (const Error&) {
        seq.meta.source_name = path.stem().string();
    }
    return seq;
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

}  // namespace

std::string write_skeleton_file(const SkeletonSequence& seq) {
    std::string out;
    out += std::to_string(seq.frames.size()) + "\n";
    for (const Frame& frame : seq.frames) {
        out += std::to_string(frame.bodies.size()) + "\n";
        for (const Body& body : frame.bodies) {
            // bodyID clippedEdges handLeftConfidence handLeftState handRightConfidence
            // handRightState isRestricted leanX leanY trackingState
            out += std::to_string(body.body_id) + " 0 1 1 1 1 0 0 0 2\n";
            out += std::to_string(body.joints.size()) + "\n";
            for (const Vec3& p : body.joints) {
                append_double(out, p.x);
                out += ' ';
                append_double(out, p.y);
                out += ' ';
                append_double(out, p.z);
                // depthX depthY colorX colorY orientationWXYZ trackingState
                out += " 0 0 0 0 0 0 0 0 2\n";
            }
        }
    }
    return out;
}

double motion_energy(const SkeletonSequence& seq, std::uint64_t body_id) {
    auto find = [body_id](const Frame& f) -> const Body* {
        for (const Body& b : f.bodies) {
            if (b.tracked && b.body_id == body_id) return &b;
        }
        return nullptr;
    };
    double energy = 0.0;
    const Body* prev = nullptr;
    for (const Frame& f : seq.frames) {
        const Body* cur = find(f);
        if (cur && prev) {
            const std::size_t n = std::min(cur->joints.size(), prev->joints.size());
            for (std::size_t j = 0; j < n; ++j) {
                const Vec3 d = cur->joints[j] - prev->joints[j];
                energy += d.x * d.x + d.y * d.y + d.z * d.z;
            }
        }
        prev = cur;
    }
    return energy;
}

SkeletonSequence select_bodies(const SkeletonSequence& seq, int max_bodies) {
    if (max_bodies < 1) throw Error(ErrorCode::invalid_argument, "max_bodies must be >= 1");
    if (seq.frames.empty()) throw Error(ErrorCode::empty_sequence, "sequence has no frames");

    std::map<std::uint64_t, int> presence;
    std::size_t joint_count = 0;
    for (const Frame& f : seq.frames) {
        std::set<std::uint64_t> in_frame;
        for (const Body& b : f.bodies) {
            if (!b.tracked) continue;
            joint_count = std::max(joint_count, b.joints.size());
            if (in_frame.insert(b.body_id).second) ++presence[b.body_id];
        }
    }
    if (joint_count == 0) {
        for (const Frame& f : seq.frames) {
            for (const Body& b : f.bodies) joint_count = std::max(joint_count, b.joints.size());
        }
    }

    struct Candidate {
        std::uint64_t id;
        int presence;
        double energy;
    };
    std::vector<Candidate> ranked;
    for (const auto& [id, count] : presence) ranked.push_back({id, count, motion_energy(seq, id)});
    std::sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
        if (a.presence != b.presence) return a.presence > b.presence;
        if (a.energy != b.energy) return a.energy > b.energy;
        return a.id < b.id;
    });
    if (ranked.size() > static_cast<std::size_t>(max_bodies)) ranked.resize(static_cast<std::size_t>(max_bodies));

    SkeletonSequence out;
    out.meta = seq.meta;
    out.frames.reserve(seq.frames.size());
    for (const Frame& f : seq.frames) {
        Frame slotted;
        slotted.timestamp_index = f.timestamp_index;
        for (int slot = 0; slot < max_bodies; ++slot) {
            const Body* hit = nullptr;
            if (static_cast<std::size_t>(slot) < ranked.size()) {
                for (const Body& b : f.bodies) {
                    if (b.tracked && b.body_id == ranked[static_cast<std::size_t>(slot)].id) {
                        hit = &b;
                        break;
                    }
                }
            }
            if (hit) {
                slotted.bodies.push_back(*hit);
            } else {
                const std::uint64_t id =
                    static_cast<std::size_t>(slot) < ranked.size() ? ranked[static_cast<std::size_t>(slot)].id : 0;
                slotted.bodies.push_back(zero_body(static_cast<int>(joint_count), id, false));
            }
        }
        out.frames.push_back(std::move(slotted));
    }
    return out;
}

IndexBuildResult build_index(const std::vector<std::string>& listing, DatasetKind kind) {
    IndexBuildResult result;
    result.index.kind = kind;
    std::set<std::string> names;
    for (const std::string& item : listing) {
        SampleMeta meta;
        try {
            meta = parse_ntu_filename(item);
        } catch (const Error& e) {
            result.skipped.push_back(item + ": " + e.what());
            continue;
        }
        const int bound = max_action_id(kind);
        if (bound > 0 && meta.action_id > bound) {
            result.skipped.push_back(item + ": action " + std::to_string(meta.action_id) + " exceeds " +
                                     std::string(to_string(kind)) + " range");
            continue;
        }
        if (!names.insert(meta.source_name).second) {
            throw Error(ErrorCode::duplicate_name, "sample '" + meta.source_name + "' listed more than once");
        }
        result.index.entries.push_back({std::move(meta), std::filesystem::path(item)});
    }
    std::sort(result.index.entries.begin(), result.index.entries.end(),
              [](const IndexEntry& a, const IndexEntry& b) { return a.meta.source_name < b.meta.source_name; });
    return result;
}

IndexBuildResult scan_directory(const std::filesystem::path& root, DatasetKind kind, std::string_view extension) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw Error(ErrorCode::io_error, root.string() + " is not a directory");
    std::vector<std::string> listing;
    std::vector<std::string> ignored;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (!extension.empty() && entry.path().extension() != extension) {
            ignored.push_back(name + ": extension is not " + std::string(extension));
            continue;
        }
        listing.push_back(name);
    }
    std::sort(listing.begin(), listing.end());
    IndexBuildResult result = build_index(listing, kind);
    for (IndexEntry& e : result.index.entries) e.path = fs::absolute(root / e.path);
    std::sort(ignored.begin(), ignored.end());
    result.skipped.insert(result.skipped.end(), ignored.begin(), ignored.end());
    return result;
}

std::string index_to_csv(const DatasetIndex& index) {
    std::string out;
    for (const IndexEntry& e : index.entries) {
        const SampleMeta& m = e.meta;
        out += m.source_name + "," + std::to_string(m.setup_id) + "," + std::to_string(m.camera_id) + "," +
               std::to_string(m.performer_id) + "," + std::to_string(m.replication_id) + "," +
               std::to_string(m.action_id) + "\n";
    }
    return out;
}

}  // namespace skelimg
