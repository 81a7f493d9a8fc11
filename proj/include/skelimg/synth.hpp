#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "skelimg/skeleton.hpp"

namespace skelimg {

struct SynthSpec {
    int num_classes = 4;
    int samples_per_class = 40;
    int frames = 60;
    double noise_std = 0.01;  // meters
    std::uint64_t seed = 7;
    int persons = 1;
};

/// Throws Error(invalid_spec).
void validate(const SynthSpec& spec);

/// Key-value text with keys num_classes, samples_per_class, frames,
/// noise_std, seed, persons; omitted keys keep their defaults.
SynthSpec parse_synth_spec(std::string_view text);
std::string synth_spec_to_text(const SynthSpec& spec);

struct LabeledSequence {
    SkeletonSequence sequence;
    int label = 0;  // 0-based; meta.action_id == label + 1

    friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
};

/// Class k animates its own limb subset at its own frequency on top of a
/// neutral standing pose; the performer id shifts the phase and body scale.
/// Performer ids cycle 1..10, cameras 1..3, setups 1..4; replication is the
/// 1-based sample number within the class. Requires a 25-joint topology.
std::vector<LabeledSequence> generate(const SynthSpec& spec, const SkeletonTopology& topology = kinect25_topology());

/// Writes one `<source_name>.skeleton` file per sample; returns the paths.
std::vector<std::filesystem::path> write_fixtures(const std::filesystem::path& dir,
                                                  const std::vector<LabeledSequence>& samples);

/// NTU-style name for the given ids, e.g. S001C002P003R002A013.
std::string ntu_name(int setup, int camera, int performer, int replication, int action);

}  // namespace skelimg
