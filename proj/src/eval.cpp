#include "skelimg/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "skelimg/error.hpp"
#include "skelimg/keyvalue.hpp"
#include "skelimg/png.hpp"

namespace skelimg {

namespace {

// Training subjects published with NTU RGB+D 60 and 120 by the dataset
// authors (external provenance); the same lists ship in protocols/*.cfg.
constexpr int kNtu60TrainSubjects[] = {1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38};
constexpr int kNtu120TrainSubjects[] = {1,  2,  4,  5,  8,  9,  13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34,
                                        35, 38, 45, 46, 47, 49, 50, 52, 53, 54, 55, 56, 57, 58, 59, 70, 74, 78,
                                        80, 81, 82, 83, 84, 85, 86, 89, 91, 92, 93, 94, 95, 97, 98, 100, 103};

std::string format_real(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string join(const std::set<int>& values) {
    std::string out;
    for (int v : values) {
        if (!out.empty()) out += ",";
        out += std::to_string(v);
    }
    return out;
}

void check_protocol(const SplitProtocol& p) {
    if (const auto* xs = std::get_if<CrossSubject>(&p); xs && xs->train_performers.empty()) {
        throw Error(ErrorCode::invalid_spec, "cross-subject protocol needs at least one training performer");
    }
    if (const auto* xv = std::get_if<CrossView>(&p); xv && xv->test_cameras.empty()) {
        throw Error(ErrorCode::invalid_spec, "cross-view protocol needs at least one test camera");
    }
}

}  // namespace

std::string_view protocol_name(const SplitProtocol& p) {
    switch (p.index()) {
        case 0: return "cross-subject";
        case 1: return "cross-view";
        default: return "cross-setup";
    }
}

SplitProtocol default_protocol(DatasetKind kind, std::string_view name) {
    if (name == "cross-subject") {
        switch (kind) {
            case DatasetKind::ntu60:
                return CrossSubject{{std::begin(kNtu60TrainSubjects), std::end(kNtu60TrainSubjects)}};
            case DatasetKind::ntu120:
                return CrossSubject{{std::begin(kNtu120TrainSubjects), std::end(kNtu120TrainSubjects)}};
            case DatasetKind::synthetic:
                return CrossSubject{{1, 2, 3, 4, 5}};
        }
    }
    if (name == "cross-view") return CrossView{{1}};
    if (name == "cross-setup") return CrossSetup{Parity::even};
    throw Error(ErrorCode::invalid_argument, "unknown protocol '" + std::string(name) + "'");
}

SplitProtocol parse_protocol_config(std::string_view text) {
    const auto kv = parse_key_values(text);
    auto it = kv.find("protocol");
    if (it == kv.end()) throw Error(ErrorCode::invalid_spec, "protocol config lacks 'protocol'");
    const std::string& name = it->second;
    auto require = [&kv](const std::string& key) -> const std::string& {
        auto f = kv.find(key);
        if (f == kv.end()) throw Error(ErrorCode::invalid_spec, "protocol config lacks '" + key + "'");
        return f->second;
    };
    SplitProtocol p;
    if (name == "cross-subject") {
        const auto list = parse_int_list("train_performers", require("train_performers"));
        p = CrossSubject{{list.begin(), list.end()}};
    } else if (name == "cross-view") {
        const auto list = parse_int_list("test_cameras", require("test_cameras"));
        p = CrossView{{list.begin(), list.end()}};
    } else if (name == "cross-setup") {
        const std::string& parity = require("train_parity");
        if (parity != "even" && parity != "odd") {
            throw Error(ErrorCode::invalid_spec, "train_parity must be 'even' or 'odd'");
        }
        p = CrossSetup{parity == "even" ? Parity::even : Parity::odd};
    } else {
        throw Error(ErrorCode::invalid_spec, "unknown protocol '" + name + "'");
    }
    check_protocol(p);
    return p;
}

std::string protocol_to_config(const SplitProtocol& p) {
    std::string out = "protocol = " + std::string(protocol_name(p)) + "\n";
    if (const auto* xs = std::get_if<CrossSubject>(&p)) out += "train_performers = " + join(xs->train_performers) + "\n";
    if (const auto* xv = std::get_if<CrossView>(&p)) out += "test_cameras = " + join(xv->test_cameras) + "\n";
    if (const auto* st = std::get_if<CrossSetup>(&p)) {
        out += std::string("train_parity = ") + (st->train_parity == Parity::even ? "even" : "odd") + "\n";
    }
    return out;
}

bool is_train(const SampleMeta& meta, const SplitProtocol& protocol) {
    if (const auto* xs = std::get_if<CrossSubject>(&protocol)) return xs->train_performers.contains(meta.performer_id);
    if (const auto* xv = std::get_if<CrossView>(&protocol)) return !xv->test_cameras.contains(meta.camera_id);
    const auto& st = std::get<CrossSetup>(protocol);
    const bool even = meta.setup_id % 2 == 0;
    return st.train_parity == Parity::even ? even : !even;
}

Split split(const DatasetIndex& index, const SplitProtocol& protocol) {
    check_protocol(protocol);
    Split out;
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
        (is_train(index.entries[i].meta, protocol) ? out.train : out.test).push_back(i);
    }
    if (out.train.empty() || out.test.empty()) {
        throw Error(ErrorCode::empty_side, std::string(protocol_name(protocol)) + " split leaves the " +
                                               (out.train.empty() ? "training" : "test") + " side empty");
    }
    return out;
}

Tensor late_fusion(std::span<const Tensor> score_sets) {
    if (score_sets.empty()) throw Error(ErrorCode::empty_list, "no score sets to fuse");
    const Tensor& first = score_sets.front();
    if (first.rank() != 2) throw Error(ErrorCode::shape_mismatch, "score sets must be N x K");
    Tensor fused(first.shape());
    for (const Tensor& s : score_sets) {
        if (s.shape() != first.shape()) {
            throw Error(ErrorCode::shape_mismatch,
                        "score set " + s.shape_string() + " does not match " + first.shape_string());
        }
        for (std::size_t i = 0; i < s.size(); ++i) fused[i] += s[i];
    }
    const double m = static_cast<double>(score_sets.size());
    for (double& v : fused.data()) v /= m;
    return fused;
}

EvalReport evaluate(const Tensor& scores, std::span<const int> labels, std::optional<SplitProtocol> protocol) {
    if (scores.rank() != 2) throw Error(ErrorCode::shape_mismatch, "scores must be N x K");
    const std::size_t n = scores.dim(0), k = scores.dim(1);
    if (labels.size() != n) {
        throw Error(ErrorCode::length_mismatch,
                    std::to_string(labels.size()) + " labels for " + std::to_string(n) + " score rows");
    }
    EvalReport report;
    report.protocol = std::move(protocol);
    report.confusion.assign(k, std::vector<long>(k, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= k) {
            throw Error(ErrorCode::invalid_argument, "label " + std::to_string(label) + " out of range");
        }
        const auto row = scores.row(i);
        // max_element returns the first maximum: ties go to the smaller index.
        const auto predicted = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        ++report.confusion[static_cast<std::size_t>(label)][predicted];
        if (predicted == static_cast<std::size_t>(label)) ++correct;
    }
    report.per_class_accuracy.resize(k);
    double macro_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c) {
        long total = 0;
        for (long v : report.confusion[c]) total += v;
        if (total == 0) {
            report.per_class_accuracy[c] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        report.per_class_accuracy[c] = static_cast<double>(report.confusion[c][c]) / static_cast<double>(total);
        macro_sum += report.per_class_accuracy[c];
        ++present;
    }
    report.macro_accuracy = present ? macro_sum / static_cast<double>(present) : 0.0;
    report.overall_accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
    return report;
}

std::string confusion_to_csv(const EvalReport& report) {
    std::string out;
    for (const auto& row : report.confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out += ",";
            out += std::to_string(row[j]);
        }
        out += "\n";
    }
    return out;
}

std::string per_class_to_csv(const EvalReport& report) {
    std::string out = "class,test_count,accuracy\n";
    for (std::size_t c = 0; c < report.num_classes(); ++c) {
        long total = 0;
        for (long v : report.confusion[c]) total += v;
        out += std::to_string(c) + "," + std::to_string(total) + "," +
               (std::isnan(report.per_class_accuracy[c]) ? std::string() : format_real(report.per_class_accuracy[c])) +
               "\n";
    }
    return out;
}

std::string summary_line(const EvalReport& report) {
    const std::string name = report.protocol ? std::string(protocol_name(*report.protocol)) : "unspecified";
    return name + "," + format_real(report.overall_accuracy) + "," + format_real(report.macro_accuracy) + "\n";
}

std::vector<std::uint8_t> confusion_to_png(const EvalReport& report) {
    const int k = static_cast<int>(report.num_classes());
    if (k == 0) throw Error(ErrorCode::empty_list, "empty confusion matrix");
    const int cell = std::max(1, 256 / k);
    const int side = k * cell;
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(side) * static_cast<std::size_t>(side), 0);
    for (int r = 0; r < k; ++r) {
        const auto& row = report.confusion[static_cast<std::size_t>(r)];
        long total = 0;
        for (long v : row) total += v;
        for (int c = 0; c < k; ++c) {
            const double frac = total ? static_cast<double>(row[static_cast<std::size_t>(c)]) / static_cast<double>(total) : 0.0;
            const auto value = static_cast<std::uint8_t>(std::lround(frac * 255.0));
            for (int y = r * cell; y < (r + 1) * cell; ++y) {
                std::fill_n(pixels.begin() + static_cast<std::ptrdiff_t>(y) * side + c * cell, cell, value);
            }
        }
    }
    return encode_png(side, side, 1, pixels);
}

std::string scores_to_csv(const ScoreTable& table) {
    const std::size_t k = table.scores.rank() == 2 ? table.scores.dim(1) : 0;
    std::string out = "source_name,true_label";
    for (std::size_t j = 0; j < k; ++j) out += ",p" + std::to_string(j);
    out += "\n";
    for (std::size_t i = 0; i < table.source_names.size(); ++i) {
        out += table.source_names[i] + "," + std::to_string(table.labels[i]);
        for (std::size_t j = 0; j < k; ++j) out += "," + format_real(table.scores.at(i, j));
        out += "\n";
    }
    return out;
}

ScoreTable parse_scores_csv(std::string_view text) {
    ScoreTable table;
    std::vector<double> values;
    std::size_t k = 0;
    int line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        for (std::size_t pos = 0;;) {
            const auto comma = line.find(',', pos);
            fields.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
        if (fields.front() == "source_name") continue;
        if (fields.size() < 3) {
            throw Error(ErrorCode::invalid_spec, "scores line " + std::to_string(line_no) + ": too few fields");
        }
        if (k == 0) k = fields.size() - 2;
        if (fields.size() - 2 != k) {
            throw Error(ErrorCode::shape_mismatch, "scores line " + std::to_string(line_no) + ": expected " +
                                                       std::to_string(k) + " probabilities");
        }
        table.source_names.emplace_back(fields[0]);
        table.labels.push_back(parse_int("true_label", fields[1]));
        for (std::size_t j = 2; j < fields.size(); ++j) values.push_back(parse_real("probability", fields[j]));
    }
    table.scores = Tensor({table.source_names.size(), k}, std::move(values));
    return table;
}

ScoreTable fuse_tables(std::span<const ScoreTable> tables) {
    if (tables.empty()) throw Error(ErrorCode::empty_list, "no score tables to fuse");
    std::vector<Tensor> sets;
    for (const ScoreTable& t : tables) {
        if (t.source_names != tables.front().source_names || t.labels != tables.front().labels) {
            throw Error(ErrorCode::shape_mismatch, "score tables list different samples or labels");
        }
        sets.push_back(t.scores);
    }
    ScoreTable fused{tables.front().source_names, tables.front().labels, late_fusion(sets)};
    return fused;
}

}  // namespace skelimg
