#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "skelimg/error.hpp"
#include "skelimg/eval.hpp"
#include "skelimg/ingest.hpp"
#include "skelimg/pipeline.hpp"
#include "skelimg/repr.hpp"
#include "skelimg/synth.hpp"
#include "skelimg/tinycnn.hpp"

namespace py = pybind11;
using namespace skelimg;

namespace {

using Doubles = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Floats = py::array_t<float, py::array::c_style | py::array::forcecast>;

// (frames, bodies, joints, 3) array -> sequence with every body tracked.
SkeletonSequence to_sequence(const Doubles& joints, const std::string& name) {
    if (joints.ndim() != 4 || joints.shape(3) != 3) {
        throw Error(ErrorCode::shape_mismatch, "expected a (frames, bodies, joints, 3) array");
    }
    SkeletonSequence seq;
    const auto a = joints.unchecked<4>();
    for (py::ssize_t t = 0; t < a.shape(0); ++t) {
        Frame f;
        f.timestamp_index = static_cast<int>(t);
        for (py::ssize_t b = 0; b < a.shape(1); ++b) {
            Body body;
            body.body_id = static_cast<std::uint64_t>(b + 1);
            for (py::ssize_t j = 0; j < a.shape(2); ++j) body.joints.push_back({a(t, b, j, 0), a(t, b, j, 1), a(t, b, j, 2)});
            f.bodies.push_back(std::move(body));
        }
        seq.frames.push_back(std::move(f));
    }
    if (!name.empty()) seq.meta = parse_ntu_filename(name);
    return seq;
}

// Untracked padding comes back as zeros.
Doubles from_sequence(const SkeletonSequence& seq) {
    std::size_t bodies = 0;
    for (const auto& f : seq.frames) bodies = std::max(bodies, f.bodies.size());
    const std::size_t joints = static_cast<std::size_t>(kinect25_topology().joint_count());
    Doubles out({seq.frames.size(), bodies, joints, std::size_t{3}});
    auto a = out.mutable_unchecked<4>();
    std::memset(out.mutable_data(), 0, static_cast<std::size_t>(out.nbytes()));
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        for (std::size_t b = 0; b < seq.frames[t].bodies.size(); ++b) {
            const auto& body = seq.frames[t].bodies[b];
            for (std::size_t j = 0; j < body.joints.size(); ++j) {
                a(t, b, j, 0) = body.joints[j].x;
                a(t, b, j, 1) = body.joints[j].y;
                a(t, b, j, 2) = body.joints[j].z;
            }
        }
    }
    return out;
}

Floats image_array(const SkeletonImage& img) {
    Floats out({img.height, img.width, img.channels});
    std::memcpy(out.mutable_data(), img.data.data(), img.data.size() * sizeof(float));
    return out;
}

SkeletonImage image_from(const Floats& a) {
    if (a.ndim() != 3) throw Error(ErrorCode::shape_mismatch, "expected an (H, W, C) image");
    SkeletonImage img;
    img.height = static_cast<int>(a.shape(0));
    img.width = static_cast<int>(a.shape(1));
    img.channels = static_cast<int>(a.shape(2));
    img.data.assign(a.data(), a.data() + a.size());
    return img;
}

Tensor tensor_from(const Doubles& a) {
    std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Doubles array_from(const Tensor& t) {
    Doubles out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor batch_from(const Floats& images) {
    if (images.ndim() != 4) throw Error(ErrorCode::shape_mismatch, "expected an (N, H, W, C) batch");
    std::vector<std::size_t> shape(images.shape(), images.shape() + 4);
    return Tensor(std::move(shape), std::vector<double>(images.data(), images.data() + images.size()));
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["confusion"] = r.confusion;
    d["per_class_accuracy"] = r.per_class_accuracy;
    d["macro_accuracy"] = r.macro_accuracy;
    d["overall_accuracy"] = r.overall_accuracy;
    return d;
}

}  // namespace

PYBIND11_MODULE(_skelimg, m) {
    m.doc() = "Skeleton image encodings and a small CNN classifier";

    py::register_exception<Error>(m, "SkelimgError", PyExc_ValueError);

    m.def("kinect_chain", [] {
        std::vector<int> out;
        for (JointId j : depth_first_chain(kinect25_topology()).joints) out.push_back(j.index);
        return out;
    }, "Depth-first joint chain of the 25-joint Kinect skeleton (1-based ids).");

    m.def("chain", [](int joint_count, const std::vector<std::pair<int, int>>& edges, int root) {
        std::vector<Edge> e;
        for (auto [p, c] : edges) e.push_back({JointId(p), JointId(c)});
        std::vector<int> out;
        for (JointId j : depth_first_chain(SkeletonTopology(joint_count, std::move(e), JointId(root))).joints) {
            out.push_back(j.index);
        }
        return out;
    }, py::arg("joint_count"), py::arg("edges"), py::arg("root"),
       "Depth-first chain of an arbitrary tree given (parent, child) edges.");

    m.def("read_skeleton", [](const std::filesystem::path& path) {
        const SkeletonSequence seq = read_skeleton_file(path, kinect25_topology());
        return py::make_tuple(from_sequence(seq), seq.meta.source_name);
    }, py::arg("path"), "Reads an NTU .skeleton file; returns (joints[T, B, 25, 3], source_name).");

    m.def("parse_name", [](const std::string& name) {
        const SampleMeta meta = parse_ntu_filename(name);
        py::dict d;
        d["setup"] = meta.setup_id;
        d["camera"] = meta.camera_id;
        d["performer"] = meta.performer_id;
        d["replication"] = meta.replication_id;
        d["action"] = meta.action_id;
        return d;
    }, py::arg("name"));

    m.def("encode", [](const Doubles& joints, const std::string& repr, int persons, int frames, std::uint64_t seed) {
        const SkeletonSequence seq = to_sequence(joints, "");
        py::list out;
        for (const auto& img : encode(seq, parse_representation(repr), ReprConfig{persons, frames, seed})) {
            out.append(image_array(img));
        }
        return out;
    }, py::arg("joints"), py::arg("repr") = "tsrji-stacked", py::arg("persons") = 2, py::arg("frames") = 100,
       py::arg("seed") = 0,
       "Encodes a (T, B, 25, 3) sequence; returns a list of (H, W, C) float32 images (four for tsrji-late).");

    m.def("quantize", [](const Floats& image) {
        py::list out;
        for (const auto& png : quantize_to_image(image_from(image))) out.append(py::bytes(reinterpret_cast<const char*>(png.data()), png.size()));
        return out;
    }, py::arg("image"), "PNG bytes: one RGB image for 3 channels, else one grayscale image per channel.");

    m.def("synthesize", [](int num_classes, int samples_per_class, int frames, double noise_std, std::uint64_t seed,
                           int persons) {
        const SynthSpec spec{num_classes, samples_per_class, frames, noise_std, seed, persons};
        validate(spec);
        py::list out;
        for (const auto& s : generate(spec)) {
            out.append(py::make_tuple(from_sequence(s.sequence), s.label, s.sequence.meta.source_name));
        }
        return out;
    }, py::arg("num_classes") = 4, py::arg("samples_per_class") = 40, py::arg("frames") = 60,
       py::arg("noise_std") = 0.01, py::arg("seed") = 7, py::arg("persons") = 1,
       "Synthetic labelled sequences as (joints, label, source_name) tuples.");

    m.def("split", [](const std::vector<std::string>& names, const std::string& protocol_config) {
        DatasetIndex index;
        for (const auto& n : names) index.entries.push_back({parse_ntu_filename(n), {}});
        const Split s = split(index, parse_protocol_config(protocol_config));
        return py::make_tuple(s.train, s.test);
    }, py::arg("names"), py::arg("protocol_config"),
       "Train and test positions of NTU-style names under a protocol config text.");

    m.def("default_protocol", [](const std::string& dataset, const std::string& name) {
        return protocol_to_config(default_protocol(parse_dataset_kind(dataset), name));
    }, py::arg("dataset"), py::arg("name"), "Protocol config text of a built-in protocol.");

    m.def("late_fusion", [](const std::vector<Doubles>& score_sets) {
        std::vector<Tensor> sets;
        for (const auto& s : score_sets) sets.push_back(tensor_from(s));
        return array_from(late_fusion(sets));
    }, py::arg("score_sets"), "Elementwise mean of N x K score matrices.");

    m.def("evaluate", [](const Doubles& scores, const std::vector<int>& labels) {
        return report_dict(evaluate(tensor_from(scores), labels));
    }, py::arg("scores"), py::arg("labels"));

    py::class_<CnnModel>(m, "Model")
        .def_property_readonly("num_classes", [](const CnnModel& model) { return model.config.num_classes; })
        .def_property_readonly("parameter_count", &CnnModel::parameter_count)
        .def("predict", [](const CnnModel& model, const Floats& images) {
            return array_from(predict_scores(model, batch_from(images)));
        }, py::arg("images"), "Softmax scores for an (N, H, W, C) batch.")
        .def("save", [](const CnnModel& model) {
            const auto bytes = save_model(model);
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        })
        .def_static("load", [](const py::bytes& data) {
            const std::string s = data;
            return load_model(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
        });

    m.def("train", [](const Floats& images, const std::vector<int>& labels, int num_classes, int epochs,
                      double learning_rate, int batch_size, std::array<int, 3> filters, int hidden_units,
                      double dropout_rate, double momentum, const std::string& optimizer, std::uint64_t seed) {
        Dataset data{batch_from(images), labels};
        CnnConfig cfg;
        cfg.input_height = static_cast<int>(images.shape(1));
        cfg.input_width = static_cast<int>(images.shape(2));
        cfg.input_channels = static_cast<int>(images.shape(3));
        cfg.num_classes = num_classes;
        cfg.epochs = epochs;
        cfg.learning_rate = learning_rate;
        cfg.batch_size = batch_size;
        cfg.conv_filters = filters;
        cfg.hidden_units = hidden_units;
        cfg.dropout_rate = dropout_rate;
        cfg.momentum = momentum;
        cfg.optimizer = parse_optimizer(optimizer);
        cfg.seed = seed;
        TrainResult r;
        {
            py::gil_scoped_release release;
            r = train(cfg, data);
        }
        std::vector<double> losses;
        for (const auto& e : r.history.epochs) losses.push_back(e.loss);
        return py::make_tuple(std::move(r.model), losses);
    }, py::arg("images"), py::arg("labels"), py::arg("num_classes"), py::arg("epochs") = 30,
       py::arg("learning_rate") = 0.001, py::arg("batch_size") = 1000,
       py::arg("filters") = std::array<int, 3>{32, 64, 128}, py::arg("hidden_units") = 256,
       py::arg("dropout_rate") = 0.5, py::arg("momentum") = 0.0, py::arg("optimizer") = "sgd", py::arg("seed") = 0,
       "Trains on an (N, H, W, C) batch; returns (Model, per-epoch losses).");
}
