#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace skelimg {

/// 1-based joint index, matching the Kinect v2 / NTU numbering.
struct JointId {
    int index = 0;

    constexpr JointId() = default;
    constexpr explicit JointId(int i) : index(i) {}

    constexpr std::size_t offset() const { return static_cast<std::size_t>(index - 1); }

    friend constexpr bool operator==(JointId, JointId) = default;
    friend constexpr auto operator<=>(JointId, JointId) = default;
};

struct Edge {
    JointId parent;
    JointId child;
    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Rooted joint tree. Child order is part of the value: it fixes the
/// depth-first chain. Construction does not validate; use validate_topology.
class SkeletonTopology {
public:
    SkeletonTopology() = default;
    SkeletonTopology(int joint_count, std::vector<Edge> edges, JointId root);

    int joint_count() const { return joint_count_; }
    const std::vector<Edge>& edges() const { return edges_; }
    JointId root() const { return root_; }

    /// Children of `j` in edge-declaration order. Empty for out-of-range ids.
    const std::vector<JointId>& children(JointId j) const;

    bool contains(JointId j) const { return j.index >= 1 && j.index <= joint_count_; }
    bool has_edge(JointId a, JointId b) const;

    friend bool operator==(const SkeletonTopology&, const SkeletonTopology&) = default;

private:
    int joint_count_ = 0;
    std::vector<Edge> edges_;
    JointId root_;
    std::vector<std::vector<JointId>> adjacency_;
};

/// The built-in 25-joint Kinect topology rooted at joint 2 (spine mid).
const SkeletonTopology& kinect25_topology();

/// nullopt when `t` is a rooted tree; otherwise a description of the first
/// violated invariant ("bad joint id", "cycle", "disconnected joint N").
std::optional<std::string> validate_topology(const SkeletonTopology& t);

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;

    double operator[](std::size_t axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
};

struct Body {
    std::uint64_t body_id = 0;
    std::vector<Vec3> joints;
    // False for slot padding inserted by select_bodies where the body was not
    // captured in that frame.
    bool tracked = true;

    /// Joint position by 1-based id.
    const Vec3& at(JointId j) const { return joints.at(j.offset()); }

    friend bool operator==(const Body&, const Body&) = default;
};

struct Frame {
    std::vector<Body> bodies;
    int timestamp_index = 0;

    friend bool operator==(const Frame&, const Frame&) = default;
};

/// Capture metadata. Ids are 1-based when parsed from an NTU file name; 0
/// means unknown.
struct SampleMeta {
    int setup_id = 0;
    int camera_id = 0;
    int performer_id = 0;
    int replication_id = 0;
    int action_id = 0;
    std::string source_name;

    friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

struct SkeletonSequence {
    std::vector<Frame> frames;
    SampleMeta meta;

    std::size_t frame_count() const { return frames.size(); }

    friend bool operator==(const SkeletonSequence&, const SkeletonSequence&) = default;
};

/// Body with `joint_count` joints all at the origin.
Body zero_body(int joint_count, std::uint64_t body_id = 0, bool tracked = false);

/// Throws Error(non_finite_input / joint_count_mismatch) if any body breaks
/// the joint-count or finiteness invariants.
void check_sequence(const SkeletonSequence& seq, const SkeletonTopology& topology);

}  // namespace skelimg
