#include "skelimg/skeleton.hpp"

#include <cmath>
#include <numeric>

#include "skelimg/error.hpp"

namespace skelimg {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_topology: return "invalid-topology";
        case ErrorCode::malformed_name: return "malformed-name";
        case ErrorCode::truncated_file: return "truncated-file";
        case ErrorCode::non_numeric_field: return "non-numeric-field";
        case ErrorCode::joint_count_mismatch: return "joint-count-mismatch";
        case ErrorCode::empty_sequence: return "empty-sequence";
        case ErrorCode::duplicate_name: return "duplicate-name";
        case ErrorCode::non_finite_input: return "non-finite-input";
        case ErrorCode::too_short_sequence: return "too-short-sequence";
        case ErrorCode::shape_mismatch: return "shape-mismatch";
        case ErrorCode::inconsistent_config: return "inconsistent-config";
        case ErrorCode::missing_cache: return "missing-cache";
        case ErrorCode::corrupt_checkpoint: return "corrupt-checkpoint";
        case ErrorCode::empty_training_set: return "empty-training-set";
        case ErrorCode::empty_side: return "empty-side";
        case ErrorCode::length_mismatch: return "length-mismatch";
        case ErrorCode::empty_list: return "empty-list";
        case ErrorCode::invalid_spec: return "invalid-spec";
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::io_error: return "io-error";
    }
    return "unknown";
}

SkeletonTopology::SkeletonTopology(int joint_count, std::vector<Edge> edges, JointId root)
    : joint_count_(joint_count), edges_(std::move(edges)), root_(root) {
    adjacency_.resize(joint_count_ > 0 ? static_cast<std::size_t>(joint_count_) : 0);
    for (const Edge& e : edges_) {
        if (contains(e.parent)) adjacency_[e.parent.offset()].push_back(e.child);
    }
}

const std::vector<JointId>& SkeletonTopology::children(JointId j) const {
    static const std::vector<JointId> none;
    return contains(j) ? adjacency_[j.offset()] : none;
}

bool SkeletonTopology::has_edge(JointId a, JointId b) const {
    for (const Edge& e : edges_) {
        if ((e.parent == a && e.child == b) || (e.parent == b && e.child == a)) return true;
    }
    return false;
}

namespace {

SkeletonTopology make_kinect25() {
    // Declaration order fixes child order. From the spine shoulder (21) the
    // traversal visits the neck, the left arm, then the right arm; from the
    // spine base (1) the left leg before the right leg.
    auto e = [](int p, int c) { return Edge{JointId(p), JointId(c)}; };
    std::vector<Edge> edges = {
        e(2, 21), e(2, 1),
        e(21, 3), e(21, 5), e(21, 9),
        e(3, 4),
        e(5, 6), e(6, 7), e(7, 8), e(8, 22), e(22, 23),
        e(9, 10), e(10, 11), e(11, 12), e(12, 24), e(24, 25),
        e(1, 13), e(1, 17),
        e(13, 14), e(14, 15), e(15, 16),
        e(17, 18), e(18, 19), e(19, 20),
    };
    return SkeletonTopology(25, std::move(edges), JointId(2));
}

struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(int n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            auto& p = parent[static_cast<std::size_t>(x)];
            p = parent[static_cast<std::size_t>(p)];
            x = p;
        }
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[static_cast<std::size_t>(a)] = b;
        return true;
    }
};

}  // namespace

const SkeletonTopology& kinect25_topology() {
    static const SkeletonTopology topology = make_kinect25();
    return topology;
}

std::optional<std::string> validate_topology(const SkeletonTopology& t) {
    const int n = t.joint_count();
    if (n < 1) return "joint count must be at least 1";
    if (!t.contains(t.root())) return "bad joint id: root " + std::to_string(t.root().index);
    for (const Edge& e : t.edges()) {
        for (JointId j : {e.parent, e.child}) {
            if (!t.contains(j)) return "bad joint id: " + std::to_string(j.index);
        }
        if (e.parent == e.child) return "cycle: self-loop at joint " + std::to_string(e.parent.index);
    }

    DisjointSet components(n);
    for (const Edge& e : t.edges()) {
        if (!components.unite(static_cast<int>(e.parent.offset()), static_cast<int>(e.child.offset()))) {
            return "cycle: edge (" + std::to_string(e.parent.index) + "," + std::to_string(e.child.index) +
                   ") closes a cycle";
        }
    }

    // Acyclic as an undirected graph; now every joint must hang below the root
    // through parent->child edges.
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::vector<JointId> stack{t.root()};
    seen[t.root().offset()] = true;
    while (!stack.empty()) {
        JointId j = stack.back();
        stack.pop_back();
        for (JointId c : t.children(j)) {
            seen[c.offset()] = true;
            stack.push_back(c);
        }
    }
    for (int i = 0; i < n; ++i) {
        if (!seen[static_cast<std::size_t>(i)]) {
            return "disconnected joint " + std::to_string(i + 1);
        }
    }
    return std::nullopt;
}

Body zero_body(int joint_count, std::uint64_t body_id, bool tracked) {
    return Body{body_id, std::vector<Vec3>(static_cast<std::size_t>(joint_count)), tracked};
}

void check_sequence(const SkeletonSequence& seq, const SkeletonTopology& topology) {
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        for (const Body& b : seq.frames[t].bodies) {
            if (b.joints.size() != static_cast<std::size_t>(topology.joint_count())) {
                throw Error(ErrorCode::joint_count_mismatch,
                            "frame " + std::to_string(t) + ": body has " + std::to_string(b.joints.size()) +
                                " joints, topology has " + std::to_string(topology.joint_count()));
            }
            for (const Vec3& p : b.joints) {
                if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
                    throw Error(ErrorCode::non_finite_input, "frame " + std::to_string(t) + ": non-finite coordinate");
                }
            }
        }
    }
}

}  // namespace skelimg
