#include <doctest.h>

#include <cmath>
#include <limits>

#include "check_error.hpp"
#include "skelimg/skeleton.hpp"

using namespace skelimg;

namespace {

SkeletonTopology make(int n, std::initializer_list<std::pair<int, int>> edges, int root = 1) {
    std::vector<Edge> e;
    for (auto [p, c] : edges) e.push_back({JointId(p), JointId(c)});
    return SkeletonTopology(n, e, JointId(root));
}

}  // namespace

TEST_CASE("kinect topology has 25 joints and 24 edges") {
    const auto& t = kinect25_topology();
    CHECK(t.joint_count() == 25);
    CHECK(t.edges().size() == 24);
    CHECK(t.root() == JointId(2));
    CHECK_FALSE(validate_topology(t).has_value());
}

TEST_CASE("kinect topology is referentially stable") {
    CHECK(&kinect25_topology() == &kinect25_topology());
    const SkeletonTopology copy = kinect25_topology();
    CHECK(copy == kinect25_topology());
}

TEST_CASE("children keep declaration order") {
    const auto& t = kinect25_topology();
    const auto& kids = t.children(JointId(21));
    REQUIRE(kids.size() == 3);
    CHECK(kids[0] == JointId(3));
    CHECK(kids[1] == JointId(5));
    CHECK(kids[2] == JointId(9));
    CHECK(t.children(JointId(99)).empty());
    CHECK(t.has_edge(JointId(21), JointId(2)));
    CHECK_FALSE(t.has_edge(JointId(4), JointId(5)));
}

TEST_CASE("child order is part of the value") {
    const auto a = make(3, {{1, 2}, {1, 3}});
    const auto b = make(3, {{1, 3}, {1, 2}});
    CHECK_FALSE(a == b);
}

TEST_CASE("validate_topology names the violation") {
    SUBCASE("cycle") {
        const auto v = validate_topology(make(3, {{1, 2}, {2, 3}, {3, 1}}));
        REQUIRE(v.has_value());
        CHECK(v->find("cycle") != std::string::npos);
    }
    SUBCASE("disconnected joint") {
        const auto v = validate_topology(make(3, {{1, 2}}));
        REQUIRE(v.has_value());
        CHECK(*v == "disconnected joint 3");
    }
    SUBCASE("bad joint id") {
        const auto v = validate_topology(make(3, {{1, 2}, {2, 7}}));
        REQUIRE(v.has_value());
        CHECK(v->find("bad joint id") != std::string::npos);
    }
    SUBCASE("edge pointing away from the root") {
        // Undirected tree, but joint 1 is unreachable from root 2 along parent->child edges.
        const auto v = validate_topology(make(3, {{1, 2}, {2, 3}}, 2));
        REQUIRE(v.has_value());
        CHECK(*v == "disconnected joint 1");
    }
    SUBCASE("single joint") { CHECK_FALSE(validate_topology(make(1, {})).has_value()); }
}

TEST_CASE("check_sequence enforces joint count and finiteness") {
    SkeletonSequence seq;
    seq.frames.push_back({{zero_body(25, 1, true)}, 0});
    CHECK_NOTHROW(check_sequence(seq, kinect25_topology()));

    seq.frames[0].bodies[0].joints[3].y = std::numeric_limits<double>::quiet_NaN();
    CHECK_ERROR_CODE(check_sequence(seq, kinect25_topology()), ErrorCode::non_finite_input);

    seq.frames[0].bodies[0] = zero_body(24);
    CHECK_ERROR_CODE(check_sequence(seq, kinect25_topology()), ErrorCode::joint_count_mismatch);
}

TEST_CASE("zero_body") {
    const Body b = zero_body(25, 9);
    CHECK(b.joints.size() == 25);
    CHECK(b.body_id == 9);
    CHECK_FALSE(b.tracked);
    for (const auto& j : b.joints) CHECK(j == Vec3{});
}

TEST_CASE("error messages carry the code name") {
    const Error e(ErrorCode::truncated_file, "frame 3");
    CHECK(std::string(e.what()).find("truncated-file") == 0);
    CHECK(to_string(ErrorCode::corrupt_checkpoint) == "corrupt-checkpoint");
}
