#include "skelimg/repr.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "skelimg/error.hpp"
#include "skelimg/ingest.hpp"
#include "skelimg/png.hpp"
#include "skelimg/random.hpp"

namespace skelimg {

Chain depth_first_chain(const SkeletonTopology& topology) {
    if (auto violation = validate_topology(topology)) throw Error(ErrorCode::invalid_topology, *violation);

    struct Visit {
        JointId joint;
        std::size_t next_child = 0;
    };
    Chain chain;
    chain.joints.reserve(2 * topology.edges().size() + 1);
    std::vector<Visit> stack{{topology.root()}};
    chain.joints.push_back(topology.root());
    while (!stack.empty()) {
        Visit& top = stack.back();
        const auto& children = topology.children(top.joint);
        if (top.next_child < children.size()) {
            const JointId child = children[top.next_child++];
            chain.joints.push_back(child);
            stack.push_back({child});
        } else {
            stack.pop_back();
            if (!stack.empty()) chain.joints.push_back(stack.back().joint);
        }
    }
    return chain;
}

Chain identity_chain(int joint_count) {
    Chain chain;
    for (int j = 1; j <= joint_count; ++j) chain.joints.emplace_back(j);
    return chain;
}

Chain random_order_chain(int joint_count, std::uint64_t seed) {
    Chain chain = identity_chain(joint_count);
    Rng rng(seed);
    rng.shuffle(chain.joints);
    return chain;
}

ReferenceJointSet kinect_reference_joints() {
    return {{kinect::left_shoulder, kinect::right_shoulder, kinect::left_hip, kinect::right_hip}};
}

std::vector<Vec3> reference_transform(const Body& body, const Chain& chain, JointId ref) {
    const Vec3 origin = body.at(ref);
    std::vector<Vec3> out;
    out.reserve(chain.size());
    for (JointId j : chain.joints) out.push_back(body.at(j) - origin);
    return out;
}

Array3 assemble_matrix(const SkeletonSequence& seq, int body_slot, const Chain& chain, std::optional<JointId> ref) {
    const std::size_t frames = seq.frames.size();
    Array3 m(chain.size(), frames, 3);
    for (std::size_t t = 0; t < frames; ++t) {
        const auto& bodies = seq.frames[t].bodies;
        if (body_slot < 0 || static_cast<std::size_t>(body_slot) >= bodies.size()) {
            throw Error(ErrorCode::invalid_argument,
                        "frame " + std::to_string(t + 1) + " has no body slot " + std::to_string(body_slot));
        }
        const Body& body = bodies[static_cast<std::size_t>(body_slot)];
        const Vec3 origin = ref ? body.at(*ref) : Vec3{};
        for (std::size_t j = 0; j < chain.size(); ++j) {
            const Vec3 p = ref ? body.at(chain.joints[j]) - origin : body.at(chain.joints[j]);
            m(j, t, 0) = p.x;
            m(j, t, 1) = p.y;
            m(j, t, 2) = p.z;
        }
    }
    return m;
}

Array3 normalize_minmax(const Array3& m) {
    Array3 out(m.rows(), m.cols(), m.channels());
    const auto in = m.data();
    auto dst = out.data();
    const std::size_t channels = m.channels();
    for (std::size_t c = 0; c < channels; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = c; i < in.size(); i += channels) {
            if (!std::isfinite(in[i])) throw Error(ErrorCode::non_finite_input, "matrix holds a non-finite value");
            lo = std::min(lo, in[i]);
            hi = std::max(hi, in[i]);
        }
        const double range = hi - lo;
        for (std::size_t i = c; i < in.size(); i += channels) {
            dst[i] = range > 0.0 ? (in[i] - lo) / range : 0.5;
        }
    }
    return out;
}

Array3 resize_temporal(const Array3& m, int target) {
    if (target < 1) throw Error(ErrorCode::invalid_argument, "resize target must be >= 1");
    if (m.cols() < 1) throw Error(ErrorCode::invalid_argument, "cannot resize an empty time axis");
    const std::size_t cols = m.cols();
    const std::size_t out_cols = static_cast<std::size_t>(target);
    if (cols == out_cols) return m;

    Array3 out(m.rows(), out_cols, m.channels());
    const double span = static_cast<double>(cols - 1);
    for (std::size_t k = 0; k < out_cols; ++k) {
        const double src = out_cols == 1 ? 0.0 : static_cast<double>(k) * span / static_cast<double>(out_cols - 1);
        std::size_t i0 = static_cast<std::size_t>(std::floor(src));
        double frac = src - static_cast<double>(i0);
        if (i0 >= cols - 1) {
            i0 = cols - 1;
            frac = 0.0;
        }
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t c = 0; c < m.channels(); ++c) {
                const double a = m(r, i0, c);
                out(r, k, c) = frac == 0.0 ? a : a + (m(r, i0 + 1, c) - a) * frac;
            }
        }
    }
    return out;
}

namespace {

constexpr std::array<std::pair<ImageKind, std::string_view>, 13> kImageKindNames{{
    {ImageKind::tsrji_a, "tsrji_a"},
    {ImageKind::tsrji_b, "tsrji_b"},
    {ImageKind::tsrji_c, "tsrji_c"},
    {ImageKind::tsrji_d, "tsrji_d"},
    {ImageKind::refjoints_a, "refjoints_a"},
    {ImageKind::refjoints_b, "refjoints_b"},
    {ImageKind::refjoints_c, "refjoints_c"},
    {ImageKind::refjoints_d, "refjoints_d"},
    {ImageKind::du, "du"},
    {ImageKind::tssi, "tssi"},
    {ImageKind::motion, "motion"},
    {ImageKind::random, "random"},
    {ImageKind::composite, "composite"},
}};

constexpr std::array<std::pair<Representation, std::string_view>, 11> kReprNames{{
    {Representation::du, "du"},
    {Representation::tssi, "tssi"},
    {Representation::refjoints, "refjoints"},
    {Representation::tsrji_stacked, "tsrji-stacked"},
    {Representation::tsrji_a, "tsrji-a"},
    {Representation::tsrji_b, "tsrji-b"},
    {Representation::tsrji_c, "tsrji-c"},
    {Representation::tsrji_d, "tsrji-d"},
    {Representation::tsrji_late, "tsrji-late"},
    {Representation::motion, "motion"},
    {Representation::random, "random"},
}};

// Every frame must already carry `persons` slots.
void require_slots(const SkeletonSequence& seq, int persons) {
    if (seq.frames.empty()) throw Error(ErrorCode::empty_sequence, "sequence has no frames");
    if (persons < 1) throw Error(ErrorCode::invalid_argument, "persons must be >= 1");
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        if (seq.frames[t].bodies.size() < static_cast<std::size_t>(persons)) {
            throw Error(ErrorCode::invalid_argument, "frame " + std::to_string(t + 1) + " carries " +
                                                         std::to_string(seq.frames[t].bodies.size()) +
                                                         " bodies, expected " + std::to_string(persons) +
                                                         " (run select_bodies first)");
        }
    }
}

// Normalizes each person's matrix, resizes it and concatenates persons along
// the channel axis.
SkeletonImage finish_image(std::vector<Array3> per_person, ImageKind kind, const Chain& chain,
                           const SkeletonSequence& seq, const ReprConfig& config) {
    SkeletonImage img;
    img.kind = kind;
    img.persons = static_cast<int>(per_person.size());
    img.source_meta = seq.meta;
    img.chain = chain;
    img.height = static_cast<int>(per_person.front().rows());
    img.width = config.target_frames;
    img.channels = 3 * img.persons;
    img.data.resize(static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width) *
                    static_cast<std::size_t>(img.channels));
    const std::size_t channels = static_cast<std::size_t>(img.channels);
    for (std::size_t p = 0; p < per_person.size(); ++p) {
        const Array3 m = resize_temporal(normalize_minmax(per_person[p]), config.target_frames);
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t t = 0; t < m.cols(); ++t) {
                for (std::size_t c = 0; c < 3; ++c) {
                    img.data[(r * m.cols() + t) * channels + 3 * p + c] = static_cast<float>(m(r, t, c));
                }
            }
        }
    }
    return img;
}

SkeletonImage chain_image(const SkeletonSequence& seq, const Chain& chain, std::optional<JointId> ref,
                          ImageKind kind, const ReprConfig& config) {
    require_slots(seq, config.persons);
    std::vector<Array3> per_person;
    for (int p = 0; p < config.persons; ++p) per_person.push_back(assemble_matrix(seq, p, chain, ref));
    return finish_image(std::move(per_person), kind, chain, seq, config);
}

void check_refs(const ReferenceJointSet& refs, const SkeletonTopology& topology) {
    for (std::size_t i = 0; i < refs.refs.size(); ++i) {
        if (!topology.contains(refs.refs[i])) {
            throw Error(ErrorCode::invalid_argument, "reference joint " + std::to_string(refs.refs[i].index) +
                                                         " is not in the topology");
        }
        for (std::size_t k = 0; k < i; ++k) {
            if (refs.refs[k] == refs.refs[i]) throw Error(ErrorCode::invalid_argument, "reference joints must differ");
        }
    }
}

}  // namespace

std::string_view to_string(ImageKind kind) {
    for (const auto& [k, name] : kImageKindNames) {
        if (k == kind) return name;
    }
    return "composite";
}

ImageKind parse_image_kind(std::string_view text) {
    for (const auto& [k, name] : kImageKindNames) {
        if (name == text) return k;
    }
    throw Error(ErrorCode::invalid_argument, "unknown image kind '" + std::string(text) + "'");
}

std::string SkeletonImage::kind_label() const {
    if (kind != ImageKind::composite || parts.empty()) return std::string(to_string(kind));
    std::string label;
    for (ImageKind p : parts) {
        if (!label.empty()) label += '+';
        label += to_string(p);
    }
    return label;
}

std::array<SkeletonImage, 4> build_tsrji(const SkeletonSequence& seq, const ReferenceJointSet& refs,
                                         const ReprConfig& config, const SkeletonTopology& topology) {
    check_refs(refs, topology);
    const Chain chain = depth_first_chain(topology);
    constexpr std::array kinds{ImageKind::tsrji_a, ImageKind::tsrji_b, ImageKind::tsrji_c, ImageKind::tsrji_d};
    std::array<SkeletonImage, 4> out;
    for (std::size_t i = 0; i < 4; ++i) out[i] = chain_image(seq, chain, refs.refs[i], kinds[i], config);
    return out;
}

SkeletonImage build_tssi(const SkeletonSequence& seq, const ReprConfig& config, const SkeletonTopology& topology) {
    return chain_image(seq, depth_first_chain(topology), std::nullopt, ImageKind::tssi, config);
}

SkeletonImage build_du(const SkeletonSequence& seq, const ReprConfig& config, const SkeletonTopology& topology) {
    return chain_image(seq, identity_chain(topology.joint_count()), std::nullopt, ImageKind::du, config);
}

std::array<SkeletonImage, 4> build_refjoints(const SkeletonSequence& seq, const ReferenceJointSet& refs,
                                             const ReprConfig& config, const SkeletonTopology& topology) {
    check_refs(refs, topology);
    const Chain chain = identity_chain(topology.joint_count());
    constexpr std::array kinds{ImageKind::refjoints_a, ImageKind::refjoints_b, ImageKind::refjoints_c,
                               ImageKind::refjoints_d};
    std::array<SkeletonImage, 4> out;
    for (std::size_t i = 0; i < 4; ++i) out[i] = chain_image(seq, chain, refs.refs[i], kinds[i], config);
    return out;
}

SkeletonImage build_motion(const SkeletonSequence& seq, const ReprConfig& config, const SkeletonTopology& topology) {
    require_slots(seq, config.persons);
    const std::size_t frames = seq.frames.size();
    if (frames < 2) throw Error(ErrorCode::too_short_sequence, "motion images need at least 2 frames");
    const Chain chain = identity_chain(topology.joint_count());
    std::vector<Array3> per_person;
    for (int p = 0; p < config.persons; ++p) {
        const Array3 positions = assemble_matrix(seq, p, chain, std::nullopt);
        Array3 diff(positions.rows(), frames - 1, 3);
        for (std::size_t j = 0; j < positions.rows(); ++j) {
            for (std::size_t t = 0; t + 1 < frames; ++t) {
                for (std::size_t c = 0; c < 3; ++c) diff(j, t, c) = positions(j, t + 1, c) - positions(j, t, c);
            }
        }
        per_person.push_back(std::move(diff));
    }
    return finish_image(std::move(per_person), ImageKind::motion, chain, seq, config);
}

SkeletonImage build_random_order(const SkeletonSequence& seq, const ReprConfig& config,
                                 const SkeletonTopology& topology) {
    return chain_image(seq, random_order_chain(topology.joint_count(), config.seed), std::nullopt, ImageKind::random,
                       config);
}

SkeletonImage stack(std::span<const SkeletonImage> images) {
    if (images.empty()) throw Error(ErrorCode::empty_list, "nothing to stack");
    if (images.size() == 1) return images.front();
    const SkeletonImage& first = images.front();
    SkeletonImage out;
    out.height = first.height;
    out.width = first.width;
    out.kind = ImageKind::composite;
    out.persons = first.persons;
    out.source_meta = first.source_meta;
    out.chain = first.chain;
    for (const SkeletonImage& img : images) {
        if (img.height != first.height || img.width != first.width) {
            throw Error(ErrorCode::shape_mismatch, "cannot stack " + std::to_string(img.height) + "x" +
                                                       std::to_string(img.width) + " onto " +
                                                       std::to_string(first.height) + "x" + std::to_string(first.width));
        }
        out.channels += img.channels;
        if (img.kind == ImageKind::composite) {
            out.parts.insert(out.parts.end(), img.parts.begin(), img.parts.end());
        } else {
            out.parts.push_back(img.kind);
        }
    }
    const std::size_t pixels = static_cast<std::size_t>(out.height) * static_cast<std::size_t>(out.width);
    out.data.resize(pixels * static_cast<std::size_t>(out.channels));
    std::size_t offset = 0;
    for (const SkeletonImage& img : images) {
        const std::size_t c = static_cast<std::size_t>(img.channels);
        for (std::size_t px = 0; px < pixels; ++px) {
            std::copy_n(img.data.begin() + static_cast<std::ptrdiff_t>(px * c), c,
                        out.data.begin() + static_cast<std::ptrdiff_t>(px * static_cast<std::size_t>(out.channels) + offset));
        }
        offset += c;
    }
    return out;
}

std::uint8_t quantize_value(float v) {
    const double scaled = std::round(static_cast<double>(v) * 255.0);
    return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

std::vector<std::vector<std::uint8_t>> quantize_to_image(const SkeletonImage& img) {
    const std::size_t pixels = static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width);
    std::vector<std::vector<std::uint8_t>> files;
    if (img.channels == 3) {
        std::vector<std::uint8_t> rgb(pixels * 3);
        std::transform(img.data.begin(), img.data.end(), rgb.begin(), quantize_value);
        files.push_back(encode_png(img.width, img.height, 3, rgb));
        return files;
    }
    const std::size_t channels = static_cast<std::size_t>(img.channels);
    for (std::size_t c = 0; c < channels; ++c) {
        std::vector<std::uint8_t> gray(pixels);
        for (std::size_t px = 0; px < pixels; ++px) gray[px] = quantize_value(img.data[px * channels + c]);
        files.push_back(encode_png(img.width, img.height, 1, gray));
    }
    return files;
}

std::vector<std::uint8_t> write_tensor_file(const SkeletonImage& img) {
    const std::string header = "skelimg v1 " + std::to_string(img.height) + " " + std::to_string(img.width) + " " +
                               std::to_string(img.channels) + " " + img.kind_label() + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + img.data.size() * 4);
    for (float v : img.data) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
    return out;
}

SkeletonImage read_tensor_file(std::span<const std::uint8_t> bytes) {
    const auto newline = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
    if (newline == bytes.end()) throw Error(ErrorCode::io_error, "tensor file: missing header line");
    const std::string header(bytes.begin(), newline);

    std::vector<std::string_view> tokens;
    std::string_view rest(header);
    while (!rest.empty()) {
        const auto start = rest.find_first_not_of(' ');
        if (start == std::string_view::npos) break;
        rest.remove_prefix(start);
        const auto end = rest.find(' ');
        tokens.push_back(rest.substr(0, end));
        rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
    }
    if (tokens.size() != 6 || tokens[0] != "skelimg" || tokens[1] != "v1") {
        throw Error(ErrorCode::io_error, "tensor file: bad header '" + header + "'");
    }
    auto dim = [&](std::string_view t) {
        int v = 0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc{} || p != t.data() + t.size() || v < 1) {
            throw Error(ErrorCode::io_error, "tensor file: bad dimension '" + std::string(t) + "'");
        }
        return v;
    };
    SkeletonImage img;
    img.height = dim(tokens[2]);
    img.width = dim(tokens[3]);
    img.channels = dim(tokens[4]);
    const std::string_view kind = tokens[5];
    if (kind.find('+') != std::string_view::npos) {
        img.kind = ImageKind::composite;
        std::size_t pos = 0;
        while (pos <= kind.size()) {
            const auto plus = kind.find('+', pos);
            const auto part = kind.substr(pos, plus == std::string_view::npos ? std::string_view::npos : plus - pos);
            img.parts.push_back(parse_image_kind(part));
            if (plus == std::string_view::npos) break;
            pos = plus + 1;
        }
    } else {
        img.kind = parse_image_kind(kind);
    }

    const std::size_t count = static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width) *
                              static_cast<std::size_t>(img.channels);
    const std::size_t payload = static_cast<std::size_t>(bytes.end() - newline - 1);
    if (payload != count * 4) {
        throw Error(ErrorCode::io_error, "tensor file: payload holds " + std::to_string(payload) + " bytes, expected " +
                                             std::to_string(count * 4));
    }
    img.data.resize(count);
    const std::uint8_t* p = &*(newline + 1);
    for (std::size_t i = 0; i < count; ++i, p += 4) {
        const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                                   static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
        img.data[i] = std::bit_cast<float>(bits);
    }
    img.persons = 1;
    return img;
}

std::string_view to_string(Representation r) {
    for (const auto& [k, name] : kReprNames) {
        if (k == r) return name;
    }
    return "du";
}

Representation parse_representation(std::string_view text) {
    for (const auto& [k, name] : kReprNames) {
        if (name == text) return k;
    }
    throw Error(ErrorCode::invalid_argument, "unknown representation '" + std::string(text) + "'");
}

std::vector<SkeletonImage> encode(const SkeletonSequence& seq, Representation r, const ReprConfig& config,
                                  const SkeletonTopology& topology) {
    const SkeletonSequence selected = select_bodies(seq, config.persons);
    const ReferenceJointSet refs = kinect_reference_joints();
    switch (r) {
        case Representation::du: return {build_du(selected, config, topology)};
        case Representation::tssi: return {build_tssi(selected, config, topology)};
        case Representation::motion: return {build_motion(selected, config, topology)};
        case Representation::random: return {build_random_order(selected, config, topology)};
        case Representation::refjoints: {
            const auto images = build_refjoints(selected, refs, config, topology);
            return {stack(images)};
        }
        case Representation::tsrji_stacked: {
            const auto images = build_tsrji(selected, refs, config, topology);
            return {stack(images)};
        }
        case Representation::tsrji_a:
        case Representation::tsrji_b:
        case Representation::tsrji_c:
        case Representation::tsrji_d: {
            auto images = build_tsrji(selected, refs, config, topology);
            const auto which = static_cast<std::size_t>(static_cast<int>(r) - static_cast<int>(Representation::tsrji_a));
            return {std::move(images[which])};
        }
        case Representation::tsrji_late: {
            auto images = build_tsrji(selected, refs, config, topology);
            return {images.begin(), images.end()};
        }
    }
    throw Error(ErrorCode::invalid_argument, "unhandled representation");
}

}  // namespace skelimg
