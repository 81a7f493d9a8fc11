#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "check_error.hpp"
#include "skelimg/eval.hpp"
#include "skelimg/ingest.hpp"
#include "skelimg/synth.hpp"

using namespace skelimg;

namespace {

DatasetIndex index_of(const std::vector<LabeledSequence>& samples) {
    DatasetIndex idx;
    idx.kind = DatasetKind::synthetic;
    for (const auto& s : samples) idx.entries.push_back({s.sequence.meta, {}});
    return idx;
}

}  // namespace

TEST_CASE("same spec, same samples") {
    SynthSpec spec;
    spec.samples_per_class = 5;
    CHECK(generate(spec) == generate(spec));
    SynthSpec other = spec;
    other.seed = 8;
    CHECK_FALSE(generate(spec) == generate(other));
}

TEST_CASE("sample layout and metadata") {
    SynthSpec spec;
    spec.num_classes = 3;
    spec.samples_per_class = 12;
    spec.frames = 20;
    const auto samples = generate(spec);
    REQUIRE(samples.size() == 36);
    std::map<std::string, int> names;
    for (const auto& s : samples) {
        check_sequence(s.sequence, kinect25_topology());
        CHECK(s.sequence.frame_count() == 20);
        CHECK(s.sequence.meta.action_id == s.label + 1);
        CHECK(s.sequence.meta.performer_id >= 1);
        CHECK(s.sequence.meta.performer_id <= 10);
        CHECK(s.sequence.meta.camera_id >= 1);
        CHECK(s.sequence.meta.camera_id <= 3);
        CHECK(parse_ntu_filename(s.sequence.meta.source_name) == s.sequence.meta);
        for (const auto& f : s.sequence.frames) CHECK(f.bodies.size() == 1);
        ++names[s.sequence.meta.source_name];
    }
    CHECK(names.size() == samples.size());

    spec.persons = 2;
    for (const auto& s : generate(spec)) {
        for (const auto& f : s.sequence.frames) CHECK(f.bodies.size() == 2);
    }
}

TEST_CASE("noise-free classes are distinct and performers repeat exactly") {
    SynthSpec spec;
    spec.num_classes = 2;
    spec.samples_per_class = 20;
    spec.noise_std = 0.0;
    const auto samples = generate(spec);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            const auto& a = samples[i];
            const auto& b = samples[j];
            const bool same_performer = a.sequence.meta.performer_id == b.sequence.meta.performer_id;
            if (a.label != b.label) {
                CHECK_FALSE(a.sequence.frames == b.sequence.frames);
            } else if (same_performer) {
                CHECK(a.sequence.frames == b.sequence.frames);
            }
        }
    }
}

TEST_CASE("the noise level shows in frame-to-frame jitter") {
    SynthSpec clean;
    clean.num_classes = 2;
    clean.samples_per_class = 1;
    clean.noise_std = 0.0;
    SynthSpec noisy = clean;
    noisy.noise_std = 0.05;
    const auto a = generate(clean).front().sequence;
    const auto b = generate(noisy).front().sequence;
    double sq = 0.0;
    long n = 0;
    for (std::size_t t = 0; t < a.frames.size(); ++t) {
        const auto& ja = a.frames[t].bodies[0].joints;
        const auto& jb = b.frames[t].bodies[0].joints;
        for (std::size_t j = 0; j < ja.size(); ++j) {
            const Vec3 d = jb[j] - ja[j];
            sq += d.x * d.x + d.y * d.y + d.z * d.z;
            n += 3;
        }
    }
    CHECK(std::sqrt(sq / static_cast<double>(n)) == doctest::Approx(0.05).epsilon(0.1));
}

TEST_CASE("synthetic default protocol leaves both sides populated") {
    for (int spc : {10, 11, 25, 40}) {
        SynthSpec spec;
        spec.samples_per_class = spc;
        spec.frames = 4;
        const auto samples = generate(spec);
        const Split s = split(index_of(samples), default_protocol(DatasetKind::synthetic, "cross-subject"));
        std::vector<int> train_per_class(4, 0), test_per_class(4, 0);
        for (std::size_t i : s.train) ++train_per_class[static_cast<std::size_t>(samples[i].label)];
        for (std::size_t i : s.test) ++test_per_class[static_cast<std::size_t>(samples[i].label)];
        for (int k = 0; k < 4; ++k) {
            CHECK(train_per_class[static_cast<std::size_t>(k)] > 0);
            CHECK(test_per_class[static_cast<std::size_t>(k)] > 0);
        }
    }
}

TEST_CASE("spec text") {
    const SynthSpec parsed = parse_synth_spec("num_classes = 6\n# comment\nnoise_std = 0.5\npersons = 2\n");
    CHECK(parsed.num_classes == 6);
    CHECK(parsed.noise_std == 0.5);
    CHECK(parsed.persons == 2);
    CHECK(parsed.samples_per_class == SynthSpec{}.samples_per_class);

    SynthSpec odd;
    odd.num_classes = 9;
    odd.seed = 123456789012345ULL;
    odd.noise_std = 0.1 + 0.2;
    const SynthSpec back = parse_synth_spec(synth_spec_to_text(odd));
    CHECK(back.num_classes == 9);
    CHECK(back.seed == odd.seed);
    CHECK(back.noise_std == odd.noise_std);

    CHECK_ERROR_CODE(parse_synth_spec("colour = red\n"), ErrorCode::invalid_spec);
    CHECK_ERROR_CODE(parse_synth_spec("num_classes = 1\n"), ErrorCode::invalid_spec);
    CHECK_ERROR_CODE(parse_synth_spec("frames = 1\n"), ErrorCode::invalid_spec);
    CHECK_ERROR_CODE(parse_synth_spec("persons = 3\n"), ErrorCode::invalid_spec);
    CHECK_ERROR_CODE(parse_synth_spec("noise_std = -1\n"), ErrorCode::invalid_spec);
    CHECK_ERROR_CODE(parse_synth_spec("num_classes = many\n"), ErrorCode::invalid_spec);
}

TEST_CASE("fixtures round trip through the reader") {
    SynthSpec spec;
    spec.num_classes = 2;
    spec.samples_per_class = 3;
    spec.frames = 8;
    spec.persons = 2;
    const auto samples = generate(spec);
    const auto dir = std::filesystem::temp_directory_path() / "skelimg_synth_fixtures";
    std::filesystem::remove_all(dir);
    const auto paths = write_fixtures(dir, samples);
    REQUIRE(paths.size() == samples.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto seq = read_skeleton_file(paths[i], kinect25_topology());
        CHECK(seq.meta == samples[i].sequence.meta);
        CHECK(seq.frames == samples[i].sequence.frames);
    }
    const auto scanned = scan_directory(dir, DatasetKind::synthetic);
    CHECK(scanned.index.entries.size() == samples.size());
    CHECK(scanned.skipped.empty());
    std::filesystem::remove_all(dir);
}

TEST_CASE("names") {
    CHECK(ntu_name(1, 2, 3, 2, 13) == "S001C002P003R002A013");
    CHECK(ntu_name(32, 3, 106, 2, 120) == "S032C003P106R002A120");
}
