#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "check_error.hpp"
#include "skelimg/eval.hpp"
#include "skelimg/png.hpp"

using namespace skelimg;

namespace {

DatasetIndex index_of(const std::vector<SampleMeta>& metas) {
    DatasetIndex idx;
    for (const auto& m : metas) idx.entries.push_back({m, {}});
    return idx;
}

SampleMeta meta(int setup, int camera, int performer) {
    SampleMeta m;
    m.setup_id = setup;
    m.camera_id = camera;
    m.performer_id = performer;
    m.replication_id = 1;
    m.action_id = 1;
    return m;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Tensor matrix(std::vector<std::vector<double>> rows) {
    Tensor t({rows.size(), rows.front().size()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) t.at(i, j) = rows[i][j];
    }
    return t;
}

Tensor random_scores(std::mt19937_64& gen, std::size_t n, std::size_t k) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    Tensor t({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += t.at(i, j) = u(gen);
        for (std::size_t j = 0; j < k; ++j) t.at(i, j) /= sum;
    }
    return t;
}

}  // namespace

TEST_CASE("cross-subject split") {
    const auto idx = index_of({meta(1, 1, 1), meta(1, 1, 2), meta(2, 2, 1)});
    const Split s = split(idx, CrossSubject{{1}});
    CHECK(s.train == std::vector<std::size_t>{0, 2});
    CHECK(s.test == std::vector<std::size_t>{1});
}

TEST_CASE("cross-view split holds out one camera") {
    const auto idx = index_of({meta(1, 1, 1), meta(1, 2, 1), meta(1, 3, 1), meta(1, 1, 2)});
    const Split s = split(idx, CrossView{{1}});
    CHECK(s.test == std::vector<std::size_t>{0, 3});
    CHECK(s.train == std::vector<std::size_t>{1, 2});
}

TEST_CASE("cross-setup split uses setup parity") {
    std::vector<SampleMeta> metas;
    for (int setup = 1; setup <= 32; ++setup) metas.push_back(meta(setup, 1, 1));
    const Split s = split(index_of(metas), CrossSetup{Parity::even});
    CHECK(s.train.size() == 16);
    CHECK(s.test.size() == 16);
    for (std::size_t i : s.train) CHECK(metas[i].setup_id % 2 == 0);
    const Split odd = split(index_of(metas), CrossSetup{Parity::odd});
    CHECK(odd.train == s.test);
}

TEST_CASE("split errors") {
    const auto idx = index_of({meta(1, 1, 1), meta(1, 2, 1)});
    CHECK_ERROR_CODE(split(idx, CrossSubject{{1}}), ErrorCode::empty_side);
    CHECK_ERROR_CODE(split(idx, CrossSubject{{}}), ErrorCode::invalid_spec);
}

TEST_CASE("protocol config files match the built-in defaults") {
    const std::filesystem::path dir = SKELIMG_PROTOCOL_DIR;
    CHECK(parse_protocol_config(slurp(dir / "ntu60_cross_subject.cfg")) ==
          default_protocol(DatasetKind::ntu60, "cross-subject"));
    CHECK(parse_protocol_config(slurp(dir / "ntu60_cross_view.cfg")) ==
          default_protocol(DatasetKind::ntu60, "cross-view"));
    CHECK(parse_protocol_config(slurp(dir / "ntu120_cross_subject.cfg")) ==
          default_protocol(DatasetKind::ntu120, "cross-subject"));
    CHECK(parse_protocol_config(slurp(dir / "ntu120_cross_setup.cfg")) ==
          default_protocol(DatasetKind::ntu120, "cross-setup"));
    CHECK(parse_protocol_config(slurp(dir / "synthetic_cross_subject.cfg")) ==
          default_protocol(DatasetKind::synthetic, "cross-subject"));

    const auto ntu60 = std::get<CrossSubject>(default_protocol(DatasetKind::ntu60, "cross-subject"));
    const auto ntu120 = std::get<CrossSubject>(default_protocol(DatasetKind::ntu120, "cross-subject"));
    CHECK(ntu60.train_performers.size() == 20);
    CHECK(ntu120.train_performers.size() == 53);
    for (int p : ntu60.train_performers) CHECK(ntu120.train_performers.contains(p));
}

TEST_CASE("protocol config round trip and errors") {
    for (const SplitProtocol& p : {SplitProtocol{CrossSubject{{3, 1, 7}}}, SplitProtocol{CrossView{{2, 3}}},
                                   SplitProtocol{CrossSetup{Parity::odd}}}) {
        CHECK(parse_protocol_config(protocol_to_config(p)) == p);
    }
    CHECK(std::get<CrossSubject>(parse_protocol_config("protocol = cross-subject\ntrain_performers = 2-4, 9\n"))
              .train_performers == std::set<int>{2, 3, 4, 9});
    CHECK_ERROR_CODE(parse_protocol_config("protocol = cross-view\n"), ErrorCode::invalid_spec);
    CHECK_ERROR_CODE(parse_protocol_config("protocol = cross-setup\ntrain_parity = both\n"), ErrorCode::invalid_spec);
    CHECK_ERROR_CODE(parse_protocol_config("protocol = leave-one-out\n"), ErrorCode::invalid_spec);
    CHECK_ERROR_CODE(default_protocol(DatasetKind::ntu60, "cross-age"), ErrorCode::invalid_argument);
}

TEST_CASE("late fusion") {
    const Tensor p = matrix({{0.6, 0.4}});
    const Tensor q = matrix({{0.2, 0.8}});
    const std::vector<Tensor> one = {p};
    const Tensor single = late_fusion(one);
    CHECK(single.at(0, 0) == 0.6);
    CHECK(single.at(0, 1) == 0.4);

    const std::vector<Tensor> both = {p, q};
    const Tensor mean = late_fusion(both);
    CHECK(mean.at(0, 0) == doctest::Approx(0.4));
    CHECK(mean.at(0, 1) == doctest::Approx(0.6));

    std::mt19937_64 gen(1);
    const Tensor r = random_scores(gen, 20, 5);
    const std::vector<Tensor> copies(4, r);
    const Tensor fused = late_fusion(copies);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(fused.data()[i] == doctest::Approx(r.data()[i]).epsilon(1e-15));

    CHECK_ERROR_CODE(late_fusion(std::vector<Tensor>{}), ErrorCode::empty_list);
    CHECK_ERROR_CODE(late_fusion(std::vector<Tensor>{p, matrix({{0.5, 0.5}, {0.5, 0.5}})}), ErrorCode::shape_mismatch);
}

TEST_CASE("late fusion keeps the simplex and ignores input order") {
    std::mt19937_64 gen(2);
    std::vector<Tensor> sets;
    for (int k = 0; k < 4; ++k) sets.push_back(random_scores(gen, 30, 6));
    const Tensor fused = late_fusion(sets);
    for (std::size_t i = 0; i < 30; ++i) {
        double sum = 0.0;
        for (double v : fused.row(i)) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    std::vector<Tensor> reversed(sets.rbegin(), sets.rend());
    const Tensor other = late_fusion(reversed);
    for (std::size_t i = 0; i < fused.size(); ++i) CHECK(other.data()[i] == doctest::Approx(fused.data()[i]).epsilon(1e-15));
}

TEST_CASE("evaluate") {
    const std::vector<int> labels = {0, 1, 2, 1};
    const Tensor perfect = matrix({{0.9, 0.05, 0.05}, {0.1, 0.8, 0.1}, {0.0, 0.0, 1.0}, {0.2, 0.7, 0.1}});
    const EvalReport r = evaluate(perfect, labels);
    CHECK(r.macro_accuracy == 1.0);
    CHECK(r.overall_accuracy == 1.0);
    CHECK(r.confusion == std::vector<std::vector<long>>{{1, 0, 0}, {0, 2, 0}, {0, 0, 1}});

    const Tensor all_zero = matrix({{0.9, 0.1}, {0.8, 0.2}, {0.6, 0.4}, {0.7, 0.3}});
    const EvalReport z = evaluate(all_zero, std::vector<int>{0, 1, 0, 1});
    CHECK(z.macro_accuracy == 0.5);
    CHECK(z.overall_accuracy == 0.5);

    // Ties go to the smaller class index.
    const EvalReport tie = evaluate(matrix({{0.5, 0.5}}), std::vector<int>{1});
    CHECK(tie.confusion[1][0] == 1);

    CHECK_ERROR_CODE(evaluate(perfect, std::vector<int>{0, 1}), ErrorCode::length_mismatch);
}

TEST_CASE("evaluate matches a brute-force tally") {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t k = 2 + gen() % 6, n = 1 + gen() % 60;
        const Tensor scores = random_scores(gen, n, k);
        std::vector<int> labels;
        for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(gen() % k));
        const EvalReport r = evaluate(scores, labels);

        std::vector<long> hits(k, 0), totals(k, 0);
        long correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (scores.at(i, j) > scores.at(i, best)) best = j;
            }
            const auto y = static_cast<std::size_t>(labels[i]);
            ++totals[y];
            if (best == y) {
                ++hits[y];
                ++correct;
            }
        }
        double macro = 0.0;
        int present = 0;
        long matrix_total = 0;
        for (std::size_t c = 0; c < k; ++c) {
            long row = 0;
            for (long v : r.confusion[c]) row += v;
            matrix_total += row;
            CHECK(row == totals[c]);
            if (totals[c] == 0) {
                CHECK(std::isnan(r.per_class_accuracy[c]));
                continue;
            }
            const double acc = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
            CHECK(r.per_class_accuracy[c] == doctest::Approx(acc));
            macro += acc;
            ++present;
        }
        CHECK(matrix_total == static_cast<long>(n));
        CHECK(r.macro_accuracy == doctest::Approx(macro / present));
        CHECK(r.overall_accuracy == doctest::Approx(static_cast<double>(correct) / static_cast<double>(n)));
    }
}

TEST_CASE("fusing identical score sets keeps the argmax") {
    std::mt19937_64 gen(4);
    const Tensor s = random_scores(gen, 25, 4);
    std::vector<int> labels(25, 0);
    const EvalReport alone = evaluate(s, labels);
    const EvalReport fused = evaluate(late_fusion(std::vector<Tensor>{s, s, s}), labels);
    CHECK(alone.confusion == fused.confusion);
}

TEST_CASE("report exports") {
    const EvalReport r =
        evaluate(matrix({{0.9, 0.1}, {0.3, 0.7}, {0.6, 0.4}}), std::vector<int>{0, 1, 1}, CrossView{{1}});
    CHECK(confusion_to_csv(r) == "1,0\n1,1\n");
    CHECK(summary_line(r).rfind("cross-view,", 0) == 0);
    const std::string per_class = per_class_to_csv(r);
    CHECK(per_class.find("class,test_count,accuracy") == 0);
    const DecodedPng png = decode_png(confusion_to_png(r));
    CHECK(png.channels == 1);
    CHECK(png.width == png.height);
    CHECK(png.width % 2 == 0);
}

TEST_CASE("score csv round trip and fusion") {
    ScoreTable t;
    t.source_names = {"S001C001P001R001A001", "S001C001P001R001A002"};
    t.labels = {0, 1};
    t.scores = matrix({{0.25, 0.75}, {0.1, 0.9}});
    const std::string csv = scores_to_csv(t);
    CHECK(csv.rfind("source_name,true_label,", 0) == 0);
    const ScoreTable back = parse_scores_csv(csv);
    CHECK(back.source_names == t.source_names);
    CHECK(back.labels == t.labels);
    CHECK(std::equal(back.scores.data().begin(), back.scores.data().end(), t.scores.data().begin()));

    // Header row is optional.
    const ScoreTable headless = parse_scores_csv(csv.substr(csv.find('\n') + 1));
    CHECK(headless.labels == t.labels);

    const ScoreTable fused = fuse_tables(std::vector<ScoreTable>{t, t});
    CHECK(std::equal(fused.scores.data().begin(), fused.scores.data().end(), t.scores.data().begin()));

    ScoreTable renamed = t;
    renamed.source_names[1] = "other";
    CHECK_ERROR_CODE(fuse_tables(std::vector<ScoreTable>{t, renamed}), ErrorCode::shape_mismatch);
    CHECK_ERROR_CODE(parse_scores_csv("a,0,0.5\nb,1,0.25,0.75\n"), ErrorCode::shape_mismatch);
    CHECK_ERROR_CODE(parse_scores_csv("a,0\n"), ErrorCode::invalid_spec);
}
