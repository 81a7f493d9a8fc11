#include "skelimg/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "skelimg/error.hpp"
#include "skelimg/ingest.hpp"
#include "skelimg/keyvalue.hpp"
#include "skelimg/random.hpp"

namespace skelimg {

namespace {

// Neutral standing pose, 1-based Kinect ids, meters (x right, y up, z depth).
constexpr std::array<Vec3, 25> kNeutralPose = {{
    {0.00, 0.00, 3.00},    // 1 spine base
    {0.00, 0.30, 3.00},    // 2 spine mid
    {0.00, 0.65, 2.98},    // 3 neck
    {0.00, 0.80, 2.97},    // 4 head
    {-0.18, 0.52, 3.00},   // 5 left shoulder
    {-0.25, 0.27, 3.01},   // 6 left elbow
    {-0.28, 0.03, 3.00},   // 7 left wrist
    {-0.29, -0.05, 2.99},  // 8 left hand
    {0.18, 0.52, 3.00},    // 9 right shoulder
    {0.25, 0.27, 3.01},    // 10 right elbow
    {0.28, 0.03, 3.00},    // 11 right wrist
    {0.29, -0.05, 2.99},   // 12 right hand
    {-0.09, -0.02, 3.00},  // 13 left hip
    {-0.10, -0.45, 3.02},  // 14 left knee
    {-0.10, -0.85, 3.03},  // 15 left ankle
    {-0.10, -0.92, 2.93},  // 16 left foot
    {0.09, -0.02, 3.00},   // 17 right hip
    {0.10, -0.45, 3.02},   // 18 right knee
    {0.10, -0.85, 3.03},   // 19 right ankle
    {0.10, -0.92, 2.93},   // 20 right foot
    {0.00, 0.55, 3.00},    // 21 spine shoulder
    {-0.30, -0.13, 2.99},  // 22 left hand tip
    {-0.26, -0.07, 2.97},  // 23 left thumb
    {0.30, -0.13, 2.99},   // 24 right hand tip
    {0.26, -0.07, 2.97},   // 25 right thumb
}};

struct LimbJoint {
    int joint;
    double weight;  // fraction of the limb amplitude this joint receives
};

// Shoulders and hips are left still inside limbs so reference joints stay
// stable, except for the torso lean which moves the whole upper body.
const std::vector<std::vector<LimbJoint>>& limbs() {
    static const std::vector<std::vector<LimbJoint>> table = {
        {{6, 0.5}, {7, 1.0}, {8, 1.1}, {22, 1.25}, {23, 1.1}},      // left arm
        {{10, 0.5}, {11, 1.0}, {12, 1.1}, {24, 1.25}, {25, 1.1}},   // right arm
        {{14, 0.5}, {15, 1.0}, {16, 1.1}},                          // left leg
        {{18, 0.5}, {19, 1.0}, {20, 1.1}},                          // right leg
        {{3, 0.5}, {4, 1.0}},                                       // head
        {{2, 0.2}, {21, 0.5}, {3, 0.6}, {4, 0.7}, {5, 0.5}, {6, 0.5}, {7, 0.5}, {8, 0.5},
         {22, 0.5}, {23, 0.5}, {9, 0.5}, {10, 0.5}, {11, 0.5}, {12, 0.5}, {24, 0.5}, {25, 0.5}},  // torso lean
    };
    return table;
}

struct MotionProgram {
    std::vector<int> limb_ids;
    double cycles;  // oscillations over the whole sequence
    Vec3 direction;
};

MotionProgram program_for(int k) {
    const int limb_count = static_cast<int>(limbs().size());
    MotionProgram p;
    p.limb_ids.push_back(k % limb_count);
    if (k >= limb_count) p.limb_ids.push_back((k / limb_count + k + 1) % limb_count);
    p.cycles = 1.0 + 0.25 * k;
    const double theta = 0.7 * k;
    p.direction = {0.6 * std::cos(theta), 0.8, 0.6 * std::sin(theta)};
    return p;
}

Body animate(const MotionProgram& program, int performer, int frame, int frames, bool mirrored, std::uint64_t id) {
    constexpr double amplitude = 0.3;
    const double scale = 0.9 + 0.02 * (performer - 1);
    const double phase = 0.05 * std::numbers::pi * (performer - 1) + (mirrored ? std::numbers::pi : 0.0);
    const double angle =
        2.0 * std::numbers::pi * program.cycles * static_cast<double>(frame) / static_cast<double>(frames) + phase;
    const double swing = amplitude * std::sin(angle);

    Body body;
    body.body_id = id;
    body.joints.reserve(kNeutralPose.size());
    for (const Vec3& p : kNeutralPose) body.joints.push_back(scale * p);
    for (int limb : program.limb_ids) {
        for (const LimbJoint& lj : limbs()[static_cast<std::size_t>(limb)]) {
            Vec3& j = body.joints[static_cast<std::size_t>(lj.joint - 1)];
            j = j + (lj.weight * swing) * program.direction;
        }
    }
    if (mirrored) {
        for (Vec3& j : body.joints) j = Vec3{-j.x + 1.0, j.y, j.z};
    }
    return body;
}

}  // namespace

void validate(const SynthSpec& spec) {
    if (spec.num_classes < 2) throw Error(ErrorCode::invalid_spec, "num_classes must be >= 2");
    if (spec.num_classes > 999) throw Error(ErrorCode::invalid_spec, "num_classes must fit the 3-digit action field");
    if (spec.samples_per_class < 1 || spec.samples_per_class > 999) {
        throw Error(ErrorCode::invalid_spec, "samples_per_class must be in 1..999");
    }
    if (spec.frames < 2) throw Error(ErrorCode::invalid_spec, "frames must be >= 2");
    if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) {
        throw Error(ErrorCode::invalid_spec, "noise_std must be a finite value >= 0");
    }
    if (spec.persons != 1 && spec.persons != 2) throw Error(ErrorCode::invalid_spec, "persons must be 1 or 2");
}

SynthSpec parse_synth_spec(std::string_view text) {
    SynthSpec spec;
    for (const auto& [key, value] : parse_key_values(text)) {
        if (key == "num_classes") spec.num_classes = parse_int(key, value);
        else if (key == "samples_per_class") spec.samples_per_class = parse_int(key, value);
        else if (key == "frames") spec.frames = parse_int(key, value);
        else if (key == "noise_std") spec.noise_std = parse_real(key, value);
        else if (key == "seed") spec.seed = parse_seed(key, value);
        else if (key == "persons") spec.persons = parse_int(key, value);
        else throw Error(ErrorCode::invalid_spec, "unknown synth key '" + key + "'");
    }
    validate(spec);
    return spec;
}

std::string synth_spec_to_text(const SynthSpec& spec) {
    char noise[40];
    std::snprintf(noise, sizeof noise, "%.17g", spec.noise_std);
    return "num_classes = " + std::to_string(spec.num_classes) + "\nsamples_per_class = " +
           std::to_string(spec.samples_per_class) + "\nframes = " + std::to_string(spec.frames) +
           "\nnoise_std = " + noise + "\nseed = " + std::to_string(spec.seed) +
           "\npersons = " + std::to_string(spec.persons) + "\n";
}

std::string ntu_name(int setup, int camera, int performer, int replication, int action) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "S%03dC%03dP%03dR%03dA%03d", setup, camera, performer, replication, action);
    return buf;
}

std::vector<LabeledSequence> generate(const SynthSpec& spec, const SkeletonTopology& topology) {
    validate(spec);
    if (topology.joint_count() != static_cast<int>(kNeutralPose.size())) {
        throw Error(ErrorCode::invalid_spec, "synthetic poses are defined for the 25-joint Kinect topology");
    }
    Rng noise(spec.seed);
    std::vector<LabeledSequence> out;
    out.reserve(static_cast<std::size_t>(spec.num_classes) * static_cast<std::size_t>(spec.samples_per_class));
    for (int k = 0; k < spec.num_classes; ++k) {
        const MotionProgram program = program_for(k);
        for (int i = 0; i < spec.samples_per_class; ++i) {
            LabeledSequence sample;
            sample.label = k;
            SampleMeta& meta = sample.sequence.meta;
            meta.performer_id = i % 10 + 1;
            meta.camera_id = i % 3 + 1;
            meta.setup_id = i % 4 + 1;
            meta.replication_id = i + 1;
            meta.action_id = k + 1;
            meta.source_name =
                ntu_name(meta.setup_id, meta.camera_id, meta.performer_id, meta.replication_id, meta.action_id);
            for (int t = 0; t < spec.frames; ++t) {
                Frame frame;
                frame.timestamp_index = t;
                for (int person = 0; person < spec.persons; ++person) {
                    Body body = animate(program, meta.performer_id, t, spec.frames, person == 1,
                                        static_cast<std::uint64_t>(person + 1));
                    if (spec.noise_std > 0.0) {
                        for (Vec3& j : body.joints) {
                            j.x += spec.noise_std * noise.normal();
                            j.y += spec.noise_std * noise.normal();
                            j.z += spec.noise_std * noise.normal();
                        }
                    }
                    frame.bodies.push_back(std::move(body));
                }
                sample.sequence.frames.push_back(std::move(frame));
            }
            out.push_back(std::move(sample));
        }
    }
    return out;
}

std::vector<std::filesystem::path> write_fixtures(const std::filesystem::path& dir,
                                                  const std::vector<LabeledSequence>& samples) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (const LabeledSequence& s : samples) {
        const auto path = dir / (s.sequence.meta.source_name + ".skeleton");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
        out << write_skeleton_file(s.sequence);
        paths.push_back(path);
    }
    return paths;
}

}  // namespace skelimg
