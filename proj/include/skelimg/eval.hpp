#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "skelimg/ingest.hpp"
#include "skelimg/tensor.hpp"

namespace skelimg {

struct CrossSubject {
    std::set<int> train_performers;
    friend bool operator==(const CrossSubject&, const CrossSubject&) = default;
};

struct CrossView {
    std::set<int> test_cameras;
    friend bool operator==(const CrossView&, const CrossView&) = default;
};

enum class Parity { even, odd };

struct CrossSetup {
    Parity train_parity = Parity::even;
    friend bool operator==(const CrossSetup&, const CrossSetup&) = default;
};

using SplitProtocol = std::variant<CrossSubject, CrossView, CrossSetup>;

/// "cross-subject", "cross-view" or "cross-setup".
std::string_view protocol_name(const SplitProtocol& p);

/// Dataset authors' published splits (ntu60/ntu120) or the synthetic
/// defaults; `name` is a protocol_name value.
SplitProtocol default_protocol(DatasetKind kind, std::string_view name);

/// Key-value text: `protocol = cross-subject` plus one of
/// `train_performers = 1,2,...`, `test_cameras = 1` or `train_parity = even`.
SplitProtocol parse_protocol_config(std::string_view text);
std::string protocol_to_config(const SplitProtocol& p);

struct Split {
    std::vector<std::size_t> train;  // positions in DatasetIndex::entries
    std::vector<std::size_t> test;
};

/// Exhaustive, disjoint partition. Throws Error(empty_side).
Split split(const DatasetIndex& index, const SplitProtocol& protocol);

bool is_train(const SampleMeta& meta, const SplitProtocol& protocol);

/// Elementwise mean of N x K score matrices.
/// Throws Error(empty_list) / Error(shape_mismatch).
Tensor late_fusion(std::span<const Tensor> score_sets);

struct EvalReport {
    std::vector<std::vector<long>> confusion;  // rows = true class, cols = predicted
    std::vector<double> per_class_accuracy;    // NaN for classes without test samples
    double macro_accuracy = 0.0;
    double overall_accuracy = 0.0;
    std::optional<SplitProtocol> protocol;

    std::size_t num_classes() const { return confusion.size(); }
};

/// Argmax per row, ties to the smaller class index. Throws Error(length_mismatch).
EvalReport evaluate(const Tensor& scores, std::span<const int> labels,
                    std::optional<SplitProtocol> protocol = std::nullopt);

std::string confusion_to_csv(const EvalReport& report);
/// class,test_count,accuracy
std::string per_class_to_csv(const EvalReport& report);
/// protocol,overall,macro (single line)
std::string summary_line(const EvalReport& report);
/// Grayscale heat map of the row-normalized confusion matrix.
std::vector<std::uint8_t> confusion_to_png(const EvalReport& report);

/// Score interchange rows: source_name, true_label, K probabilities.
struct ScoreTable {
    std::vector<std::string> source_names;
    std::vector<int> labels;
    Tensor scores;  // N x K
};

std::string scores_to_csv(const ScoreTable& table);
/// A leading `source_name,...` header row is optional.
ScoreTable parse_scores_csv(std::string_view text);

/// Fuses tables row by row; names and labels must agree.
ScoreTable fuse_tables(std::span<const ScoreTable> tables);

}  // namespace skelimg
