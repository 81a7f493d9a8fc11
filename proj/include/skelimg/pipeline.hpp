#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "skelimg/eval.hpp"
#include "skelimg/repr.hpp"
#include "skelimg/tinycnn.hpp"

namespace skelimg {

/// SKELIMG_THREADS if set to a positive integer, else hardware concurrency.
unsigned worker_count();

/// Runs fn(0..n-1) on up to `workers` threads. If any call throws, the
/// exception from the lowest failing index is rethrown after all finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned workers = worker_count());

/// One encode() result per sequence, in input order.
std::vector<std::vector<SkeletonImage>> encode_all(std::span<const SkeletonSequence> sequences, Representation repr,
                                                   const ReprConfig& config,
                                                   const SkeletonTopology& topology = kinect25_topology());

/// Stacks equally shaped images into an N x H x W x C tensor.
/// Throws Error(shape_mismatch) or Error(empty_list).
Tensor to_batch(std::span<const SkeletonImage> images);

/// Copy of `base` with the input shape taken from `image`.
CnnConfig fit_input(CnnConfig base, const SkeletonImage& image);

struct LabeledImages {
    std::vector<std::vector<SkeletonImage>> images;  // per sample, one image or four for late fusion
    std::vector<int> labels;
};

struct ExperimentResult {
    std::vector<TrainResult> models;  // one, or four for late fusion
    std::vector<Tensor> part_scores;  // test scores per model
    Tensor scores;                    // fused when there are several models
    EvalReport report;
};

/// Trains one model per image slot and evaluates on the test side.
/// Throws Error(empty_training_set) when `train_set` is empty.
ExperimentResult run_experiment(const LabeledImages& train_set, const LabeledImages& test_set, const CnnConfig& cnn,
                                std::optional<SplitProtocol> protocol = std::nullopt);

}  // namespace skelimg
