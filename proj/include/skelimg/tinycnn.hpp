#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skelimg/random.hpp"
#include "skelimg/tensor.hpp"

namespace skelimg {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

/// Three 3x3 convolutions (strides 1, 1, 2; 2x2 max-pool after the first
/// two), a ReLU hidden layer with dropout, and a linear output layer.
struct CnnConfig {
    int input_height = 49;
    int input_width = 100;
    int input_channels = 12;
    std::array<int, 3> conv_filters{32, 64, 128};
    int kernel = 3;
    std::array<int, 3> conv_strides{1, 1, 2};
    int hidden_units = 256;
    int num_classes = 60;
    double dropout_rate = 0.5;
    double learning_rate = 0.001;
    int batch_size = 1000;
    int epochs = 30;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double momentum = 0.0;  // sgd only

    friend bool operator==(const CnnConfig&, const CnnConfig&) = default;
};

/// Spatial sizes through the stack. Stride-1 convolutions use "same" zero
/// padding; strided ones produce ceil(in / stride) with the extra padding row
/// or column at the bottom/right. Pooling floors odd sizes.
struct ConvGeometry {
    int in_h = 0, in_w = 0, in_c = 0;
    int out_h = 0, out_w = 0, out_c = 0;
    int stride = 1;
    int pad_top = 0, pad_left = 0;
    bool pooled = false;
    int pool_h = 0, pool_w = 0;  // after pooling; equal to out_* when not pooled

    int next_h() const { return pooled ? pool_h : out_h; }
    int next_w() const { return pooled ? pool_w : out_w; }
};

struct NetworkShape {
    std::array<ConvGeometry, 3> conv;
    int flat_dim = 0;
};

/// Throws Error(inconsistent_config) if any spatial size drops below 1.
NetworkShape compute_shape(const CnnConfig& cfg);

struct Parameter {
    std::string name;
    Tensor value;
};

enum ParamIndex : std::size_t {
    conv1_weight, conv1_bias, conv2_weight, conv2_bias, conv3_weight, conv3_bias,
    fc1_weight, fc1_bias, fc2_weight, fc2_bias, param_count
};

struct CnnModel {
    CnnConfig config;
    NetworkShape shape;
    std::vector<Parameter> params;  // ParamIndex order
    Rng dropout_rng{0};

    std::size_t parameter_count() const;
};

/// Uniform He-style init (bound sqrt(6 / fan_in)), zero biases, seeded by cfg.seed.
CnnModel init_model(const CnnConfig& cfg);

/// Activations kept by a training-mode forward pass for backward().
struct ForwardCache {
    std::size_t batch = 0;
    std::vector<double> input;                        // N x C x H x W
    std::array<std::vector<double>, 3> conv_out;      // post-ReLU, N x F x H x W
    std::array<std::vector<double>, 2> pooled;        // N x F x h x w
    std::array<std::vector<std::uint32_t>, 2> argmax; // source offset inside the conv plane
    std::vector<double> hidden;                       // post-ReLU, before dropout
    std::vector<double> dropout_mask;                 // 0 or 1/(1-p); empty when no dropout
};

struct ForwardResult {
    Tensor logits;
    std::optional<ForwardCache> cache;
};

/// `batch` is N x H x W x C. Dropout (and the cache) only when `training`;
/// dropout draws from model.dropout_rng.
ForwardResult forward(CnnModel& model, const Tensor& batch, bool training);

/// Inference-only forward pass.
Tensor infer_logits(const CnnModel& model, const Tensor& batch);

struct LossResult {
    double loss = 0.0;
    Tensor d_logits;
};

/// Mean over the batch of -log softmax(logits)[label].
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

struct Gradients {
    std::vector<Tensor> grads;  // ParamIndex order, shapes match the parameters

    static Gradients zeros_like(const CnnModel& model);
    void accumulate(const Gradients& other, double scale = 1.0);
};

/// Throws Error(missing_cache) when `cache` is empty.
Gradients backward(const CnnModel& model, const std::optional<ForwardCache>& cache, const Tensor& d_logits);

struct LayerCheck {
    std::string layer;
    std::size_t checked = 0;
    double max_relative_error = 0.0;
};

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::vector<LayerCheck> layers;
};

/// Compares backward() against central differences on up to
/// `samples_per_layer` randomly chosen parameters of each layer (all of them
/// for smaller layers), with dropout disabled. Relative error is
/// |a - n| / max(|a|, |n|, 1e-6).
GradientCheckResult gradient_check(const CnnModel& model, const Tensor& batch, std::span<const int> labels,
                                   double epsilon = 1e-5, std::size_t samples_per_layer = 256,
                                   std::uint64_t seed = 0);

/// w <- w - lr * g for every parameter.
void sgd_step(CnnModel& model, const Gradients& grads, double lr);

/// Stateful update rule selected by CnnConfig::optimizer.
class Optimizer {
public:
    explicit Optimizer(const CnnModel& model);
    void step(CnnModel& model, const Gradients& grads);

private:
    OptimizerKind kind_;
    double lr_;
    double momentum_;
    std::vector<Tensor> first_;
    std::vector<Tensor> second_;
    long steps_ = 0;
};

struct Dataset {
    Tensor images;  // N x H x W x C
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> val_accuracy;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

struct TrainResult {
    CnnModel model;
    TrainHistory history;
};

/// Mini-batch training with a per-epoch shuffle drawn from cfg.seed. The batch
/// size shrinks to the dataset size when the dataset is smaller.
TrainResult train(const CnnConfig& cfg, const Dataset& train_set, const Dataset* val_set = nullptr);

/// Softmax probabilities, N x num_classes, dropout off.
Tensor predict_scores(const CnnModel& model, const Tensor& batch);

std::vector<std::uint8_t> save_model(const CnnModel& model);
/// Throws Error(corrupt_checkpoint).
CnnModel load_model(std::span<const std::uint8_t> bytes);

/// epoch,loss,train_acc,val_acc
std::string history_to_csv(const TrainHistory& history);

}  // namespace skelimg
