// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// The training criteria (A5, A6) take a few minutes on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sequences.hpp"
#include "skelimg/eval.hpp"
#include "skelimg/ingest.hpp"
#include "skelimg/pipeline.hpp"
#include "skelimg/repr.hpp"
#include "skelimg/synth.hpp"
#include "skelimg/tinycnn.hpp"

using namespace skelimg;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::vector<int> ids(const Chain& c) {
    std::vector<int> out;
    for (JointId j : c.joints) out.push_back(j.index);
    return out;
}

ReprConfig one_person() {
    ReprConfig c;
    c.persons = 1;
    return c;
}

// ---------------------------------------------------------------------------

Outcome chain_fidelity() {
    const std::vector<int> published = {2,  21, 3,  4,  3,  21, 5,  6,  7,  8,  22, 23, 22, 8,  7,  6,  5,
                                        21, 9,  10, 11, 12, 24, 25, 24, 12, 11, 10, 9,  21, 2,  1,  13, 14,
                                        15, 16, 15, 14, 13, 1,  17, 18, 19, 20, 19, 18, 17, 1,  2};
    Outcome o;
    const auto chain = ids(depth_first_chain(kinect25_topology()));
    o.require(chain.size() == 49, "chain length " + std::to_string(chain.size()));
    o.require(chain == published, "chain differs from the published order");
    o.detail = o.pass ? "49 joints, element-for-element" : o.detail;
    return o;
}

Outcome chain_oracle() {
    Outcome o;
    std::mt19937_64 gen(1000);
    for (int trial = 0; trial < 1000 && o.pass; ++trial) {
        const auto tree = oracle::random_tree(gen, 12);
        const auto topo = tree.topology();
        const auto chain = ids(depth_first_chain(topo));
        const std::string at = "tree " + std::to_string(trial) + ": ";
        o.require(chain == oracle::euler_tour(tree.joint_count, tree.edges, tree.root), at + "differs from oracle");
        o.require(chain.size() == 2 * tree.edges.size() + 1, at + "bad length");
        for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
            const JointId a(chain[i]), b(chain[i + 1]);
            o.require(topo.has_edge(a, b) || topo.has_edge(b, a), at + "non-adjacent neighbours");
        }
    }
    if (o.pass) o.detail = "1000 random trees";
    return o;
}

Outcome translation_invariance() {
    Outcome o;
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 100 && o.pass; ++trial) {
        const int frames = std::uniform_int_distribution<int>(2, 60)(gen);
        const int bodies = 1 + trial % 2;
        const auto seq = testseq::random_sequence(gen, frames, bodies);
        ReprConfig rc;
        rc.persons = bodies;
        const Vec3 shift{testseq::grid_value(gen), testseq::grid_value(gen), testseq::grid_value(gen)};
        std::vector<Vec3> per_frame;
        for (int t = 0; t < frames; ++t) {
            per_frame.push_back({testseq::grid_value(gen), testseq::grid_value(gen), testseq::grid_value(gen)});
        }
        const auto fixed = testseq::translated(seq, [&](std::size_t) { return shift; });
        const auto moving = testseq::translated(seq, [&](std::size_t t) { return per_frame[t]; });
        const auto base = build_tsrji(seq, kinect_reference_joints(), rc);
        const auto a = build_tsrji(fixed, kinect_reference_joints(), rc);
        const auto b = build_tsrji(moving, kinect_reference_joints(), rc);
        for (int k = 0; k < 4; ++k) {
            o.require(base[k].data == a[k].data, "sequence " + std::to_string(trial) + ": constant offset changed image");
            o.require(base[k].data == b[k].data, "sequence " + std::to_string(trial) + ": per-frame offset changed image");
        }
    }
    // Asymmetric fixture: the body walks along x while its pose stays put.
    std::mt19937_64 fixture_gen(14);
    const auto still = testseq::random_sequence(fixture_gen, 30);
    const auto walking = testseq::translated(still, [](std::size_t t) { return Vec3{0.25 * static_cast<double>(t), 0.0, 0.0}; });
    o.require(build_tssi(still, one_person()).data != build_tssi(walking, one_person()).data, "tssi ignored the drift");
    o.require(build_du(still, one_person()).data != build_du(walking, one_person()).data, "du ignored the drift");
    if (o.pass) o.detail = "100 sequences bit-identical; tssi and du change under drift";
    return o;
}

// Biases off zero so no ReLU input sits on its kink.
CnnModel generic_point(CnnModel m, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.05, 0.25);
    for (std::size_t i = conv1_bias; i < param_count; i += 2) {
        for (double& v : m.params[i].value.data()) v = u(gen);
    }
    return m;
}

Outcome gradient_agreement() {
    Outcome o;
    double worst = 0.0;
    auto check = [&](const CnnConfig& cfg, std::size_t n, std::uint64_t seed) {
        std::mt19937_64 gen(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Tensor x({n, static_cast<std::size_t>(cfg.input_height), static_cast<std::size_t>(cfg.input_width),
                  static_cast<std::size_t>(cfg.input_channels)});
        for (double& v : x.data()) v = u(gen);
        std::vector<int> y;
        for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<int>(i % static_cast<std::size_t>(cfg.num_classes)));
        const CnnModel m = generic_point(init_model(cfg), seed);
        const auto r = gradient_check(m, x, y, 1e-5, 200, seed);
        for (std::size_t l = 0; l < r.layers.size(); ++l) {
            const std::size_t size = m.params[2 * l].value.size() + m.params[2 * l + 1].value.size();
            o.require(r.layers[l].checked >= std::min<std::size_t>(200, size),
                      r.layers[l].layer + ": too few parameters checked");
        }
        worst = std::max(worst, r.max_relative_error);
    };

    CnnConfig tiny;
    tiny.input_height = 8;
    tiny.input_width = 10;
    tiny.input_channels = 3;
    tiny.conv_filters = {2, 2, 2};
    tiny.hidden_units = 4;
    tiny.num_classes = 3;
    tiny.seed = 1;
    check(tiny, 4, 2);  // every layer is under 200 parameters: all of them are checked

    // Wider variant whose layers all exceed 200 parameters, sampled 200 per layer.
    CnnConfig wide = tiny;
    wide.input_height = 16;
    wide.input_width = 20;
    wide.conv_filters = {8, 8, 8};
    wide.hidden_units = 16;
    wide.num_classes = 13;
    check(wide, 3, 5);

    o.require(worst < 1e-4, "max relative error " + fmt("%.3g", worst));
    if (o.pass) o.detail = "max relative error " + fmt("%.3g", worst);
    return o;
}

struct SynthExperiment {
    LabeledImages train_set, test_set;
    SplitProtocol protocol;
};

SynthExperiment synth_experiment(Representation repr) {
    const SynthSpec spec;  // K = 4, 40 per class, T = 60, noise 0.01, seed 7
    const auto samples = generate(spec);
    DatasetIndex index;
    index.kind = DatasetKind::synthetic;
    std::vector<SkeletonSequence> seqs;
    for (const auto& s : samples) {
        index.entries.push_back({s.sequence.meta, {}});
        seqs.push_back(s.sequence);
    }
    SynthExperiment e{{}, {}, default_protocol(DatasetKind::synthetic, "cross-subject")};
    const auto images = encode_all(seqs, repr, one_person());
    const Split parts = split(index, e.protocol);
    for (std::size_t i : parts.train) {
        e.train_set.images.push_back(images[i]);
        e.train_set.labels.push_back(samples[i].label);
    }
    for (std::size_t i : parts.test) {
        e.test_set.images.push_back(images[i]);
        e.test_set.labels.push_back(samples[i].label);
    }
    return e;
}

CnnConfig scaled_down_network() {
    CnnConfig c;
    c.conv_filters = {8, 16, 32};
    c.hidden_units = 64;
    c.batch_size = 32;
    c.learning_rate = 0.001;
    c.momentum = 0.9;
    c.epochs = 100;
    c.num_classes = 4;
    c.seed = 7;
    return c;
}

Outcome separability() {
    Outcome o;
    const auto start = Clock::now();
    const auto e = synth_experiment(Representation::tsrji_stacked);
    const auto r = run_experiment(e.train_set, e.test_set, scaled_down_network(), e.protocol);
    const double elapsed = seconds_since(start);
    o.require(r.report.macro_accuracy >= 0.90, "macro accuracy " + fmt("%.3f", r.report.macro_accuracy));
    o.require(elapsed < 600.0, "runtime " + fmt("%.0f s", elapsed));
    if (o.pass) o.detail = "macro " + fmt("%.3f", r.report.macro_accuracy) + " in " + fmt("%.0f s", elapsed);
    return o;
}

Outcome fusion_sanity() {
    Outcome o;
    // Unit properties first: identity, mean, simplex.
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    auto random_scores = [&](std::size_t n, std::size_t k) {
        Tensor t({n, k});
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) sum += t.at(i, j) = u(gen);
            for (std::size_t j = 0; j < k; ++j) t.at(i, j) /= sum;
        }
        return t;
    };
    const Tensor p = random_scores(20, 5);
    const Tensor q = random_scores(20, 5);
    const Tensor single = late_fusion(std::vector<Tensor>{p});
    o.require(std::equal(single.data().begin(), single.data().end(), p.data().begin()), "single-input fusion changed scores");
    const Tensor pair = late_fusion(std::vector<Tensor>{p, q});
    for (std::size_t i = 0; i < 20; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            o.require(std::abs(pair.at(i, j) - 0.5 * (p.at(i, j) + q.at(i, j))) < 1e-15, "fusion is not the mean");
            o.require(pair.at(i, j) >= 0.0, "negative fused score");
            sum += pair.at(i, j);
        }
        o.require(std::abs(sum - 1.0) < 1e-12, "fused row leaves the simplex");
    }
    if (!o.pass) return o;

    const auto start = Clock::now();
    const auto e = synth_experiment(Representation::tsrji_late);
    const auto r = run_experiment(e.train_set, e.test_set, scaled_down_network(), e.protocol);
    double best = 0.0;
    std::string parts;
    for (const auto& s : r.part_scores) {
        const double macro = evaluate(s, e.test_set.labels).macro_accuracy;
        best = std::max(best, macro);
        parts += fmt("%.3f ", macro);
    }
    const double fused = r.report.macro_accuracy;
    o.require(fused >= best - 0.02, "fused " + fmt("%.3f", fused) + " below best single " + fmt("%.3f", best));
    if (o.pass) {
        o.detail = "fused " + fmt("%.3f", fused) + ", single " + parts + "in " + fmt("%.0f s", seconds_since(start));
    }
    return o;
}

Outcome protocol_partitions() {
    Outcome o;
    // Full grid: 4 setups x 3 cameras x 10 performers.
    DatasetIndex index;
    for (int s = 1; s <= 4; ++s) {
        for (int c = 1; c <= 3; ++c) {
            for (int p = 1; p <= 10; ++p) {
                SampleMeta m{s, c, p, 1, 1, ntu_name(s, c, p, 1, 1)};
                index.entries.push_back({m, {}});
            }
        }
    }
    auto check = [&](const SplitProtocol& protocol, std::size_t train, std::size_t test, const char* name) {
        const Split parts = split(index, protocol);
        std::set<std::size_t> all(parts.train.begin(), parts.train.end());
        all.insert(parts.test.begin(), parts.test.end());
        o.require(all.size() == parts.train.size() + parts.test.size(), std::string(name) + ": sides overlap");
        o.require(all.size() == index.entries.size(), std::string(name) + ": not exhaustive");
        o.require(parts.train.size() == train && parts.test.size() == test,
                  std::string(name) + ": sizes " + std::to_string(parts.train.size()) + "/" +
                      std::to_string(parts.test.size()));
        return parts;
    };
    check(default_protocol(DatasetKind::synthetic, "cross-subject"), 60, 60, "cross-subject");
    check(default_protocol(DatasetKind::ntu60, "cross-view"), 80, 40, "cross-view");
    check(CrossSubject{{2, 4, 5}}, 36, 84, "cross-subject {2,4,5}");
    const Split setup = check(default_protocol(DatasetKind::ntu120, "cross-setup"), 60, 60, "cross-setup");
    for (std::size_t i : setup.train) o.require(index.entries[i].meta.setup_id % 2 == 0, "odd setup in train");
    for (std::size_t i : setup.test) o.require(index.entries[i].meta.setup_id % 2 == 1, "even setup in test");

    // The synthetic default dataset: performers 1..5 hold half of every class.
    DatasetIndex synth;
    for (const auto& s : generate(SynthSpec{})) synth.entries.push_back({s.sequence.meta, {}});
    const Split sp = split(synth, default_protocol(DatasetKind::synthetic, "cross-subject"));
    o.require(sp.train.size() == 80 && sp.test.size() == 80, "synthetic default split is not 80/80");
    if (o.pass) o.detail = "grid 60/60, 80/40, 36/84, 60/60; synthetic default 80/80";
    return o;
}

Outcome numeric_properties() {
    Outcome o;
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        Array3 m(7, 1 + trial, 3);
        for (double& v : m.data()) v = u(gen);
        const Array3 n = normalize_minmax(m);
        for (double v : n.data()) o.require(v >= 0.0 && v <= 1.0, "normalized value out of [0, 1]");
        o.require(normalize_minmax(n) == n, "normalize is not idempotent");

        Array3 wide(4, 100, 3);
        for (double& v : wide.data()) v = u(gen);
        o.require(resize_temporal(wide, 100) == wide, "resize is not the identity at T = 100");

        const Array3 r = resize_temporal(m, 100);
        for (std::size_t row = 0; row < m.rows(); ++row) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                o.require(r(row, 0, ch) == m(row, 0, ch), "first frame moved");
                o.require(r(row, 99, ch) == m(row, m.cols() - 1, ch), "last frame moved");
            }
        }
        // A row increasing in time stays non-decreasing.
        Array3 ramp(1, 2 + trial, 1);
        double acc = u(gen);
        for (std::size_t c = 0; c < ramp.cols(); ++c) ramp(0, c, 0) = acc += std::abs(u(gen));
        const Array3 rr = resize_temporal(ramp, 100);
        for (std::size_t c = 1; c < 100; ++c) o.require(rr(0, c, 0) >= rr(0, c - 1, 0), "resize broke monotonicity");
    }
    o.require(quantize_value(0.0f) == 0, "quantize(0)");
    o.require(quantize_value(0.5f) == 128, "quantize(0.5)");
    o.require(quantize_value(1.0f) == 255, "quantize(1)");
    if (o.pass) o.detail = "normalize, resize and quantize properties hold";
    return o;
}

Outcome fixture_dry_run() {
    Outcome o;
    const auto built = scan_directory(SKELIMG_NTU_FIXTURES, DatasetKind::ntu60);
    const auto& entries = built.index.entries;
    o.require(entries.size() >= 3, "fewer than 3 fixture files");
    if (!o.pass) return o;

    ReprConfig rc;  // two persons, 100 frames
    LabeledImages train_set, test_set;
    const SplitProtocol protocol = default_protocol(DatasetKind::ntu60, "cross-subject");
    for (const auto& e : entries) {
        const SkeletonSequence seq = read_skeleton_file(e.path, kinect25_topology());
        check_sequence(seq, kinect25_topology());
        auto& side = is_train(e.meta, protocol) ? train_set : test_set;
        side.images.push_back(encode(seq, Representation::tsrji_stacked, rc));
        side.labels.push_back(e.meta.action_id - 1);
    }
    CnnConfig cnn;  // full-size network, one epoch
    cnn.num_classes = max_action_id(DatasetKind::ntu60);
    cnn.epochs = 1;
    cnn.seed = 1;
    const auto r = run_experiment(train_set, test_set, fit_input(cnn, train_set.images[0][0]), protocol);
    o.require(r.scores.shape()[0] == test_set.labels.size(), "score rows");
    if (o.pass) {
        o.detail = std::to_string(entries.size()) + " files: parse, encode, train 1 epoch, eval (" +
                   std::to_string(train_set.labels.size()) + " train / " + std::to_string(test_set.labels.size()) +
                   " test)";
    }
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"A1 chain fidelity", chain_fidelity},
        {"A2 chain oracle equivalence", chain_oracle},
        {"A3 translation invariance", translation_invariance},
        {"A4 gradient check", gradient_agreement},
        {"A5 end-to-end separability", separability},
        {"A6 fusion sanity", fusion_sanity},
        {"A7 protocol partitions", protocol_partitions},
        {"A8 numeric pipeline properties", numeric_properties},
        {"A9 fixture dry run", fixture_dry_run},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        const auto start = Clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("%s %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds_since(start));
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
