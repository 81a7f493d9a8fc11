#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skelimg/skeleton.hpp"

namespace skelimg {

/// Ordered joint walk used as the row order of a skeleton image.
struct Chain {
    std::vector<JointId> joints;

    std::size_t size() const { return joints.size(); }
    friend bool operator==(const Chain&, const Chain&) = default;
};

/// Euler-tour order: starts and ends at the root, visits children in topology
/// order and records a joint again each time traversal backtracks to it.
/// Throws Error(invalid_topology).
Chain depth_first_chain(const SkeletonTopology& topology);

/// Joints 1..joint_count in index order.
Chain identity_chain(int joint_count);

/// Seeded permutation of 1..joint_count; same seed, same permutation.
Chain random_order_chain(int joint_count, std::uint64_t seed);

/// Left shoulder, right shoulder, left hip, right hip.
struct ReferenceJointSet {
    std::array<JointId, 4> refs;
};

namespace kinect {
inline constexpr JointId spine_base{1};
inline constexpr JointId spine_mid{2};
inline constexpr JointId left_shoulder{5};
inline constexpr JointId right_shoulder{9};
inline constexpr JointId left_hip{13};
inline constexpr JointId right_hip{17};
inline constexpr JointId spine_shoulder{21};
}  // namespace kinect

/// Reference joints in the Kinect v2 / NTU numbering: 5, 9, 13, 17.
ReferenceJointSet kinect_reference_joints();

/// Entry i is position(chain[i]) - position(ref).
std::vector<Vec3> reference_transform(const Body& body, const Chain& chain, JointId ref);

/// Dense rows x cols x channels array of doubles, row-major (row, col, channel).
class Array3 {
public:
    Array3() = default;
    Array3(std::size_t rows, std::size_t cols, std::size_t channels, double fill = 0.0)
        : rows_(rows), cols_(cols), channels_(channels), data_(rows * cols * channels, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t channels() const { return channels_; }

    double& operator()(std::size_t r, std::size_t c, std::size_t ch) { return data_[(r * cols_ + c) * channels_ + ch]; }
    double operator()(std::size_t r, std::size_t c, std::size_t ch) const {
        return data_[(r * cols_ + c) * channels_ + ch];
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    friend bool operator==(const Array3&, const Array3&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

/// J x T x 3: element [j, t, axis] is the chain[j] coordinate at frame t,
/// minus the reference joint's coordinate at frame t when `ref` is given.
Array3 assemble_matrix(const SkeletonSequence& seq, int body_slot, const Chain& chain, std::optional<JointId> ref);

/// Per-channel min-max scaling over the whole array into [0, 1]. Constant
/// channels become 0.5. Throws Error(non_finite_input).
Array3 normalize_minmax(const Array3& m);

/// Linear interpolation along columns. Output column k samples source
/// coordinate k * (T - 1) / (target - 1); a single output column samples 0.
Array3 resize_temporal(const Array3& m, int target);

enum class ImageKind {
    tsrji_a,
    tsrji_b,
    tsrji_c,
    tsrji_d,
    refjoints_a,
    refjoints_b,
    refjoints_c,
    refjoints_d,
    du,
    tssi,
    motion,
    random,
    composite,
};

std::string_view to_string(ImageKind kind);
ImageKind parse_image_kind(std::string_view text);

/// H x W x C single-precision image in [0, 1], row-major (H, W, C).
struct SkeletonImage {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;
    ImageKind kind = ImageKind::composite;
    std::vector<ImageKind> parts;  // components of a composite, in channel order
    int persons = 1;
    SampleMeta source_meta;
    Chain chain;

    float at(int h, int w, int c) const {
        return data[(static_cast<std::size_t>(h) * static_cast<std::size_t>(width) + static_cast<std::size_t>(w)) *
                        static_cast<std::size_t>(channels) +
                    static_cast<std::size_t>(c)];
    }

    /// "tsrji_a", or parts joined with '+' for composites.
    std::string kind_label() const;
};

struct ReprConfig {
    int persons = 2;
    int target_frames = 100;
    std::uint64_t seed = 0;  // random-order baseline only
};

/// One image per reference joint (a..d), each chain_length x target x 3*persons.
/// `seq` must already carry `persons` body slots per frame.
std::array<SkeletonImage, 4> build_tsrji(const SkeletonSequence& seq, const ReferenceJointSet& refs,
                                         const ReprConfig& config,
                                         const SkeletonTopology& topology = kinect25_topology());

/// Depth-first chain, absolute coordinates.
SkeletonImage build_tssi(const SkeletonSequence& seq, const ReprConfig& config,
                         const SkeletonTopology& topology = kinect25_topology());

/// Joint order 1..J, absolute coordinates.
SkeletonImage build_du(const SkeletonSequence& seq, const ReprConfig& config,
                       const SkeletonTopology& topology = kinect25_topology());

/// Joint order 1..J relative to each reference joint; four images.
std::array<SkeletonImage, 4> build_refjoints(const SkeletonSequence& seq, const ReferenceJointSet& refs,
                                             const ReprConfig& config,
                                             const SkeletonTopology& topology = kinect25_topology());

/// Forward frame differences, J x (T-1) before resize. Throws
/// Error(too_short_sequence) when T < 2.
SkeletonImage build_motion(const SkeletonSequence& seq, const ReprConfig& config,
                           const SkeletonTopology& topology = kinect25_topology());

/// Like build_du with a permutation drawn from config.seed.
SkeletonImage build_random_order(const SkeletonSequence& seq, const ReprConfig& config,
                                 const SkeletonTopology& topology = kinect25_topology());

/// Channel-axis concatenation. Throws Error(shape_mismatch) / Error(empty_list).
SkeletonImage stack(std::span<const SkeletonImage> images);

/// round(v * 255), clamped to [0, 255].
std::uint8_t quantize_value(float v);

/// One RGB PNG for 3-channel images, otherwise one grayscale PNG per channel.
/// Pixel width is the time axis.
std::vector<std::vector<std::uint8_t>> quantize_to_image(const SkeletonImage& img);

/// `skelimg v1 H W C kind\n` followed by H*W*C little-endian float32.
std::vector<std::uint8_t> write_tensor_file(const SkeletonImage& img);
SkeletonImage read_tensor_file(std::span<const std::uint8_t> bytes);

/// Representation selector used by the command line.
enum class Representation {
    du,
    tssi,
    refjoints,
    tsrji_stacked,
    tsrji_a,
    tsrji_b,
    tsrji_c,
    tsrji_d,
    tsrji_late,
    motion,
    random,
};

std::string_view to_string(Representation r);
Representation parse_representation(std::string_view text);

/// Representations whose network inputs are the four TSRJI images trained as
/// separate models.
inline bool is_late_fusion(Representation r) { return r == Representation::tsrji_late; }

/// Selects bodies, builds the representation. Returns one image, or four for
/// tsrji-late (a, b, c, d).
std::vector<SkeletonImage> encode(const SkeletonSequence& seq, Representation r, const ReprConfig& config,
                                  const SkeletonTopology& topology = kinect25_topology());

}  // namespace skelimg
