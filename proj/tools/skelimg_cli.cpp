// skelimg: index, synthesize, encode, train, evaluate and fuse from the shell.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "skelimg/error.hpp"
#include "skelimg/eval.hpp"
#include "skelimg/ingest.hpp"
#include "skelimg/pipeline.hpp"
#include "skelimg/repr.hpp"
#include "skelimg/synth.hpp"
#include "skelimg/tinycnn.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace skelimg;

namespace {

constexpr const char* kToolVersion = "skelimg 1.0";
constexpr const char* kLateSlots[] = {"a", "b", "c", "d"};
constexpr std::size_t kPredictChunk = 256;

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    const std::string text = read_text(path);
    return {text.begin(), text.end()};
}

void write_file(const fs::path& path, const void* data, std::size_t size) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
}

void write_file(const fs::path& path, const std::string& text) { write_file(path, text.data(), text.size()); }
void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    write_file(path, bytes.data(), bytes.size());
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

json formats() {
    return {{"tensor", "skelimg v1"}, {"checkpoint", "skelimg-cnn v1"}, {"scores", "source_name,true_label,p0..pK-1"}};
}

json cnn_to_json(const CnnConfig& c) {
    return {{"input_height", c.input_height},   {"input_width", c.input_width},
            {"input_channels", c.input_channels}, {"conv_filters", c.conv_filters},
            {"kernel", c.kernel},                 {"conv_strides", c.conv_strides},
            {"hidden_units", c.hidden_units},     {"num_classes", c.num_classes},
            {"dropout_rate", c.dropout_rate},     {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},         {"epochs", c.epochs},
            {"seed", c.seed},                     {"optimizer", std::string(to_string(c.optimizer))},
            {"momentum", c.momentum}};
}

// Where the skeletons come from: raw files under a root, or tensors written
// by `encode`.
struct Source {
    std::string root;
    std::string cache;
    DatasetKind kind = DatasetKind::synthetic;
};

struct Samples {
    DatasetIndex index;
    std::vector<std::vector<SkeletonImage>> images;  // parallel to index.entries
};

void report_skipped(const std::vector<std::string>& skipped) {
    for (const auto& s : skipped) {
        if (s.find("extension is not") == std::string::npos) std::cerr << "skipped " << s << "\n";
    }
}

fs::path cache_dir(const fs::path& cache, Representation repr, std::size_t slot) {
    fs::path dir = cache / std::string(to_string(repr));
    if (is_late_fusion(repr)) dir /= kLateSlots[slot];
    return dir;
}

Samples load_samples(const Source& src, Representation repr, const ReprConfig& rc) {
    Samples out;
    if (!src.cache.empty()) {
        const std::size_t slots = is_late_fusion(repr) ? 4 : 1;
        auto built = scan_directory(cache_dir(src.cache, repr, 0), src.kind, ".skimg");
        report_skipped(built.skipped);
        out.index = std::move(built.index);
        out.images.resize(out.index.entries.size());
        parallel_for(out.index.entries.size(), [&](std::size_t i) {
            const auto& e = out.index.entries[i];
            for (std::size_t s = 0; s < slots; ++s) {
                const fs::path p = cache_dir(src.cache, repr, s) / e.path.filename();
                try {
                    out.images[i].push_back(read_tensor_file(read_bytes(p)));
                } catch (const Error& err) {
                    throw Error(err.code(), p.string() + ": " + err.detail());
                }
            }
        });
        return out;
    }
    auto built = scan_directory(src.root, src.kind);
    report_skipped(built.skipped);
    out.index = std::move(built.index);
    out.images.resize(out.index.entries.size());
    parallel_for(out.index.entries.size(), [&](std::size_t i) {
        const auto& e = out.index.entries[i];
        try {
            SkeletonSequence seq = read_skeleton_file(e.path, kinect25_topology());
            out.images[i] = encode(seq, repr, rc);
        } catch (const Error& err) {
            throw Error(err.code(), e.path.string() + ": " + err.detail());
        }
    });
    return out;
}

int label_of(const SampleMeta& meta, int num_classes) {
    if (meta.action_id < 1 || meta.action_id > num_classes) {
        throw Error(ErrorCode::invalid_argument, meta.source_name + ": action id " + std::to_string(meta.action_id) +
                                                     " outside 1.." + std::to_string(num_classes));
    }
    return meta.action_id - 1;
}

int infer_num_classes(const DatasetIndex& index) {
    if (const int k = max_action_id(index.kind); k > 0) return k;
    int k = 0;
    for (const auto& e : index.entries) k = std::max(k, e.meta.action_id);
    return k;
}

SplitProtocol resolve_protocol(DatasetKind kind, const std::string& name, const std::string& config_path) {
    if (!config_path.empty()) return parse_protocol_config(read_text(config_path));
    return default_protocol(kind, name);
}

std::vector<SkeletonImage> slot_images(const Samples& samples, const std::vector<std::size_t>& rows, std::size_t slot) {
    std::vector<SkeletonImage> out;
    out.reserve(rows.size());
    for (std::size_t i : rows) out.push_back(samples.images[i][slot]);
    return out;
}

Tensor predict_chunked(const CnnModel& model, const std::vector<SkeletonImage>& images) {
    Tensor scores({images.size(), static_cast<std::size_t>(model.config.num_classes)});
    for (std::size_t start = 0; start < images.size(); start += kPredictChunk) {
        const std::size_t end = std::min(images.size(), start + kPredictChunk);
        const Tensor part = predict_scores(model, to_batch(std::span(images).subspan(start, end - start)));
        std::copy(part.data().begin(), part.data().end(), scores.data().begin() + static_cast<std::ptrdiff_t>(start) * model.config.num_classes);
    }
    return scores;
}

void write_report(const fs::path& out, const ScoreTable& table, std::optional<SplitProtocol> protocol) {
    const EvalReport report = evaluate(table.scores, table.labels, std::move(protocol));
    write_file(out / "scores.csv", scores_to_csv(table));
    write_file(out / "confusion.csv", confusion_to_csv(report));
    write_file(out / "confusion.png", confusion_to_png(report));
    write_file(out / "per_class.csv", per_class_to_csv(report));
    write_file(out / "summary.csv", "protocol,overall,macro\n" + summary_line(report));
    std::cout << summary_line(report);
}

void add_source_options(CLI::App* cmd, Source& src, std::string& dataset) {
    auto* root = cmd->add_option("--root", src.root, "Directory of .skeleton files");
    auto* cache = cmd->add_option("--cache", src.cache, "Output directory of a previous encode run");
    root->excludes(cache);
    cmd->add_option("--dataset", dataset, "ntu60 | ntu120 | synthetic")->capture_default_str();
}

Source finish_source(Source src, const std::string& dataset) {
    if (src.root.empty() == src.cache.empty()) {
        throw Error(ErrorCode::invalid_argument, "give exactly one of --root or --cache");
    }
    src.kind = parse_dataset_kind(dataset);
    return src;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Skeleton image encoding and action classification"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Seed for every random draw")->capture_default_str();

    // index
    auto* index_cmd = app.add_subcommand("index", "List a dataset directory as CSV");
    std::string index_root, index_out, index_dataset = "ntu60";
    index_cmd->add_option("--root", index_root)->required();
    index_cmd->add_option("--dataset", index_dataset)->capture_default_str();
    index_cmd->add_option("--out", index_out, "CSV path (stdout if omitted)");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Write synthetic .skeleton fixtures");
    std::string synth_spec, synth_out;
    synth_cmd->add_option("--spec", synth_spec, "Key-value spec file");
    synth_cmd->add_option("--out", synth_out)->required();

    // encode
    auto* encode_cmd = app.add_subcommand("encode", "Encode skeleton files into image tensors");
    std::string encode_root, encode_out, encode_repr = "tsrji-stacked", encode_dataset = "ntu60";
    bool encode_png = false;
    int encode_persons = 2, encode_frames = 100;
    encode_cmd->add_option("input,--root", encode_root, "Directory of .skeleton files");
    encode_cmd->add_option("--repr", encode_repr)->capture_default_str();
    encode_cmd->add_option("--out", encode_out, "Defaults to the input directory");
    encode_cmd->add_option("--dataset", encode_dataset)->capture_default_str();
    encode_cmd->add_option("--persons", encode_persons)->capture_default_str();
    encode_cmd->add_option("--frames", encode_frames, "Temporal size after resizing")->capture_default_str();
    encode_cmd->add_flag("--png", encode_png, "Also write 8-bit PNGs");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train on the train side of a protocol");
    Source train_src;
    std::string train_dataset = "ntu60", train_repr = "tsrji-stacked", train_protocol = "cross-subject",
                train_protocol_config, train_out, train_optimizer = "sgd";
    CnnConfig cnn;
    int train_persons = 2, train_frames = 100, train_classes = 0;
    add_source_options(train_cmd, train_src, train_dataset);
    train_cmd->add_option("--repr", train_repr)->capture_default_str();
    train_cmd->add_option("--protocol", train_protocol)->capture_default_str();
    train_cmd->add_option("--protocol-config", train_protocol_config, "Overrides --protocol");
    train_cmd->add_option("--out", train_out)->required();
    train_cmd->add_option("--epochs", cnn.epochs)->capture_default_str();
    train_cmd->add_option("--lr", cnn.learning_rate)->capture_default_str();
    train_cmd->add_option("--batch", cnn.batch_size)->capture_default_str();
    train_cmd->add_option("--filters", cnn.conv_filters)->capture_default_str();
    train_cmd->add_option("--hidden", cnn.hidden_units)->capture_default_str();
    train_cmd->add_option("--dropout", cnn.dropout_rate)->capture_default_str();
    train_cmd->add_option("--optimizer", train_optimizer, "sgd | adam")->capture_default_str();
    train_cmd->add_option("--momentum", cnn.momentum, "sgd only")->capture_default_str();
    train_cmd->add_option("--classes", train_classes, "Defaults to the dataset's action count");
    train_cmd->add_option("--persons", train_persons)->capture_default_str();
    train_cmd->add_option("--frames", train_frames)->capture_default_str();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score the test side with trained models");
    Source eval_src;
    std::string eval_dataset = "ntu60", eval_model, eval_out;
    add_source_options(eval_cmd, eval_src, eval_dataset);
    eval_cmd->add_option("--model", eval_model, "Output directory of train")->required();
    eval_cmd->add_option("--out", eval_out, "Defaults to the model directory");

    // fuse
    auto* fuse_cmd = app.add_subcommand("fuse", "Average score CSVs and evaluate");
    std::vector<std::string> fuse_inputs;
    std::string fuse_out;
    fuse_cmd->add_option("scores", fuse_inputs)->required();
    fuse_cmd->add_option("--out", fuse_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*index_cmd) {
            auto built = scan_directory(index_root, parse_dataset_kind(index_dataset));
            report_skipped(built.skipped);
            const std::string csv = index_to_csv(built.index);
            if (index_out.empty()) {
                std::cout << csv;
            } else {
                write_file(index_out, csv);
            }
        } else if (*synth_cmd) {
            SynthSpec spec = synth_spec.empty() ? SynthSpec{} : parse_synth_spec(read_text(synth_spec));
            if (app.count("--seed") > 0) spec.seed = seed;
            validate(spec);
            const auto samples = generate(spec);
            write_fixtures(synth_out, samples);
            write_json(fs::path(synth_out) / "manifest.json",
                       {{"tool", kToolVersion}, {"command", "synth"}, {"spec", synth_spec_to_text(spec)},
                        {"samples", samples.size()}});
            std::cout << "wrote " << samples.size() << " sequences to " << synth_out << "\n";
        } else if (*encode_cmd) {
            if (encode_root.empty()) throw Error(ErrorCode::invalid_argument, "encode needs an input directory");
            const fs::path out = encode_out.empty() ? fs::path(encode_root) : fs::path(encode_out);
            const Representation repr = parse_representation(encode_repr);
            const ReprConfig rc{encode_persons, encode_frames, seed};
            const Samples samples = load_samples({encode_root, "", parse_dataset_kind(encode_dataset)}, repr, rc);
            parallel_for(samples.images.size(), [&](std::size_t i) {
                const std::string& stem = samples.index.entries[i].meta.source_name;
                for (std::size_t s = 0; s < samples.images[i].size(); ++s) {
                    const SkeletonImage& img = samples.images[i][s];
                    const fs::path dir = cache_dir(out, repr, s);
                    write_file(dir / (stem + ".skimg"), write_tensor_file(img));
                    if (!encode_png) continue;
                    const auto pngs = quantize_to_image(img);
                    for (std::size_t c = 0; c < pngs.size(); ++c) {
                        const std::string name = pngs.size() == 1 ? stem + ".png" : stem + "_c" + std::to_string(c) + ".png";
                        write_file(dir / name, pngs[c]);
                    }
                }
            });
            write_json(out / std::string(to_string(repr)) / "manifest.json",
                       {{"tool", kToolVersion}, {"command", "encode"}, {"formats", formats()},
                        {"source", encode_root}, {"dataset", std::string(to_string(samples.index.kind))},
                        {"repr", std::string(to_string(repr))}, {"persons", encode_persons},
                        {"frames", encode_frames}, {"seed", seed}, {"samples", samples.images.size()}});
            std::cout << "encoded " << samples.images.size() << " sequences into " << out.string() << "\n";
        } else if (*train_cmd) {
            const Source src = finish_source(train_src, train_dataset);
            const Representation repr = parse_representation(train_repr);
            const SplitProtocol protocol = resolve_protocol(src.kind, train_protocol, train_protocol_config);
            const Samples samples = load_samples(src, repr, {train_persons, train_frames, seed});
            if (samples.index.entries.empty()) throw Error(ErrorCode::empty_training_set, "no samples found");
            const Split parts = split(samples.index, protocol);
            cnn.num_classes = train_classes > 0 ? train_classes : infer_num_classes(samples.index);
            cnn.seed = seed;
            cnn.optimizer = parse_optimizer(train_optimizer);

            std::vector<int> labels;
            for (std::size_t i : parts.train) labels.push_back(label_of(samples.index.entries[i].meta, cnn.num_classes));
            const fs::path out = train_out;
            json models = json::array();
            const std::size_t slots = samples.images.front().size();
            for (std::size_t s = 0; s < slots; ++s) {
                const auto images = slot_images(samples, parts.train, s);
                const CnnConfig cfg = fit_input(cnn, images.front());
                const TrainResult trained = train(cfg, Dataset{to_batch(images), labels});
                const std::string suffix = slots == 1 ? "" : std::string("_") + kLateSlots[s];
                write_file(out / ("model" + suffix + ".ckpt"), save_model(trained.model));
                write_file(out / ("history" + suffix + ".csv"), history_to_csv(trained.history));
                models.push_back("model" + suffix + ".ckpt");
                const auto& last = trained.history.epochs.back();
                std::cout << "model" << suffix << ": epoch " << last.epoch << " loss " << last.loss << " train_acc "
                          << last.train_accuracy << "\n";
            }
            write_json(out / "manifest.json",
                       {{"tool", kToolVersion},
                        {"command", "train"},
                        {"formats", formats()},
                        {"source", src.root.empty() ? src.cache : src.root},
                        {"source_is_cache", !src.cache.empty()},
                        {"dataset", std::string(to_string(src.kind))},
                        {"repr", std::string(to_string(repr))},
                        {"persons", train_persons},
                        {"frames", train_frames},
                        {"seed", seed},
                        {"protocol", protocol_to_config(protocol)},
                        {"train_samples", parts.train.size()},
                        {"test_samples", parts.test.size()},
                        {"cnn", cnn_to_json(cnn)},
                        {"models", models}});
        } else if (*eval_cmd) {
            const Source src = finish_source(eval_src, eval_dataset);
            const fs::path model_dir = eval_model;
            const json manifest = json::parse(read_text(model_dir / "manifest.json"));
            const Representation repr = parse_representation(manifest.at("repr").get<std::string>());
            const SplitProtocol protocol = parse_protocol_config(manifest.at("protocol").get<std::string>());
            const ReprConfig rc{manifest.at("persons").get<int>(), manifest.at("frames").get<int>(),
                                manifest.at("seed").get<std::uint64_t>()};
            const Samples samples = load_samples(src, repr, rc);
            const Split parts = split(samples.index, protocol);

            std::vector<CnnModel> models;
            for (const auto& name : manifest.at("models")) models.push_back(load_model(read_bytes(model_dir / name.get<std::string>())));
            const int k = models.front().config.num_classes;
            ScoreTable table;
            for (std::size_t i : parts.test) {
                table.source_names.push_back(samples.index.entries[i].meta.source_name);
                table.labels.push_back(label_of(samples.index.entries[i].meta, k));
            }
            const fs::path out = eval_out.empty() ? model_dir : fs::path(eval_out);
            std::vector<Tensor> part_scores;
            for (std::size_t s = 0; s < models.size(); ++s) {
                part_scores.push_back(predict_chunked(models[s], slot_images(samples, parts.test, s)));
                if (models.size() > 1) {
                    write_file(out / ("scores_" + std::string(kLateSlots[s]) + ".csv"),
                               scores_to_csv({table.source_names, table.labels, part_scores.back()}));
                }
            }
            table.scores = part_scores.size() == 1 ? part_scores.front() : late_fusion(part_scores);
            write_report(out, table, protocol);
            write_json(out / "eval_manifest.json",
                       {{"tool", kToolVersion}, {"command", "eval"}, {"formats", formats()},
                        {"model", model_dir.string()}, {"source", src.root.empty() ? src.cache : src.root},
                        {"test_samples", parts.test.size()}});
        } else if (*fuse_cmd) {
            std::vector<ScoreTable> tables;
            for (const auto& path : fuse_inputs) {
                try {
                    tables.push_back(parse_scores_csv(read_text(path)));
                } catch (const Error& err) {
                    throw Error(err.code(), path + ": " + err.detail());
                }
            }
            write_report(fuse_out, fuse_tables(tables), std::nullopt);
            write_json(fs::path(fuse_out) / "manifest.json",
                       {{"tool", kToolVersion}, {"command", "fuse"}, {"formats", formats()}, {"inputs", fuse_inputs}});
        }
    } catch (const Error& e) {
        std::cerr << "skelimg: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "skelimg: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
