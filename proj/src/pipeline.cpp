#include "skelimg/pipeline.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <thread>

#include "skelimg/error.hpp"

namespace skelimg {

unsigned worker_count() {
    if (const char* env = std::getenv("SKELIMG_THREADS")) {
        unsigned v = 0;
        auto [p, ec] = std::from_chars(env, env + std::strlen(env), v);
        if (ec == std::errc{} && *p == '\0' && v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned workers) {
    if (n == 0) return;
    workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), n));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<std::vector<SkeletonImage>> encode_all(std::span<const SkeletonSequence> sequences, Representation repr,
                                                   const ReprConfig& config, const SkeletonTopology& topology) {
    std::vector<std::vector<SkeletonImage>> out(sequences.size());
    parallel_for(sequences.size(), [&](std::size_t i) {
        try {
            out[i] = encode(sequences[i], repr, config, topology);
        } catch (const Error& e) {
            throw Error(e.code(), sequences[i].meta.source_name + ": " + e.detail());
        }
    });
    return out;
}

Tensor to_batch(std::span<const SkeletonImage> images) {
    if (images.empty()) throw Error(ErrorCode::empty_list, "no images to batch");
    const auto& first = images.front();
    const std::size_t per = first.data.size();
    Tensor batch({images.size(), static_cast<std::size_t>(first.height), static_cast<std::size_t>(first.width),
                  static_cast<std::size_t>(first.channels)});
    double* dst = batch.data().data();
    for (const auto& img : images) {
        if (img.height != first.height || img.width != first.width || img.channels != first.channels) {
            throw Error(ErrorCode::shape_mismatch, "image shapes differ within a batch");
        }
        for (std::size_t k = 0; k < per; ++k) *dst++ = img.data[k];
    }
    return batch;
}

CnnConfig fit_input(CnnConfig base, const SkeletonImage& image) {
    base.input_height = image.height;
    base.input_width = image.width;
    base.input_channels = image.channels;
    return base;
}

namespace {

std::vector<SkeletonImage> slot(const LabeledImages& set, std::size_t s) {
    std::vector<SkeletonImage> out;
    out.reserve(set.images.size());
    for (const auto& per_sample : set.images) {
        if (s >= per_sample.size()) throw Error(ErrorCode::shape_mismatch, "samples carry different image counts");
        out.push_back(per_sample[s]);
    }
    return out;
}

}  // namespace

ExperimentResult run_experiment(const LabeledImages& train_set, const LabeledImages& test_set, const CnnConfig& cnn,
                                std::optional<SplitProtocol> protocol) {
    if (train_set.images.empty()) throw Error(ErrorCode::empty_training_set, "no training samples");
    if (test_set.images.empty()) throw Error(ErrorCode::empty_side, "no test samples");
    const std::size_t slots = train_set.images.front().size();

    ExperimentResult result;
    for (std::size_t s = 0; s < slots; ++s) {
        const auto train_images = slot(train_set, s);
        const auto test_images = slot(test_set, s);
        Dataset train_data{to_batch(train_images), train_set.labels};
        Dataset test_data{to_batch(test_images), test_set.labels};
        CnnConfig cfg = fit_input(cnn, train_images.front());
        TrainResult trained = train(cfg, train_data);
        result.part_scores.push_back(predict_scores(trained.model, test_data.images));
        result.models.push_back(std::move(trained));
    }
    result.scores = result.part_scores.size() == 1 ? result.part_scores.front() : late_fusion(result.part_scores);
    result.report = evaluate(result.scores, test_set.labels, std::move(protocol));
    return result;
}

}  // namespace skelimg
