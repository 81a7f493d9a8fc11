#include "skelimg/tinycnn.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>

#include "skelimg/error.hpp"

namespace skelimg {

namespace {

constexpr const char* kParamNames[param_count] = {
    "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "conv3.weight",
    "conv3.bias",   "fc1.weight", "fc1.bias",     "fc2.weight", "fc2.bias",
};

// Training splits a mini-batch into chunks of this many samples so the cache
// stays small; gradients are summed across chunks.
constexpr std::size_t kChunk = 16;

double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

std::size_t plane(int h, int w) { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }

std::size_t conv_in_size(const ConvGeometry& g) { return plane(g.in_h, g.in_w) * static_cast<std::size_t>(g.in_c); }
std::size_t conv_out_size(const ConvGeometry& g) {
    return plane(g.out_h, g.out_w) * static_cast<std::size_t>(g.out_c);
}
std::size_t pool_out_size(const ConvGeometry& g) {
    return plane(g.pool_h, g.pool_w) * static_cast<std::size_t>(g.out_c);
}

// cols is (in_c * k * k) x (out_h * out_w).
void im2col(const ConvGeometry& g, int k, const double* x, std::vector<double>& cols) {
    const std::size_t p_count = plane(g.out_h, g.out_w);
    cols.assign(static_cast<std::size_t>(g.in_c * k * k) * p_count, 0.0);
    std::size_t row = 0;
    for (int c = 0; c < g.in_c; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * plane(g.in_h, g.in_w);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                double* dst = cols.data() + row * p_count;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad_top;
                    if (iy < 0 || iy >= g.in_h) continue;
                    const double* src = xc + static_cast<std::size_t>(iy) * static_cast<std::size_t>(g.in_w);
                    double* out = dst + static_cast<std::size_t>(oy) * static_cast<std::size_t>(g.out_w);
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride + kx - g.pad_left;
                        if (ix >= 0 && ix < g.in_w) out[ox] = src[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, int k, const std::vector<double>& cols, double* dx) {
    const std::size_t p_count = plane(g.out_h, g.out_w);
    std::size_t row = 0;
    for (int c = 0; c < g.in_c; ++c) {
        double* dxc = dx + static_cast<std::size_t>(c) * plane(g.in_h, g.in_w);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                const double* src = cols.data() + row * p_count;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad_top;
                    if (iy < 0 || iy >= g.in_h) continue;
                    double* out = dxc + static_cast<std::size_t>(iy) * static_cast<std::size_t>(g.in_w);
                    const double* in = src + static_cast<std::size_t>(oy) * static_cast<std::size_t>(g.out_w);
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride + kx - g.pad_left;
                        if (ix >= 0 && ix < g.in_w) out[ix] += in[ox];
                    }
                }
            }
        }
    }
}

// Output positions are processed in tiles so one slab of im2col columns
// stays in cache while every filter reads it.
constexpr std::size_t kTile = 128;

// y = ReLU(W * im2col(x) + b), y is out_c x out_h x out_w.
void conv_forward(const ConvGeometry& g, int k, const double* x, const Tensor& w, const Tensor& b, double* y,
                  std::vector<double>& cols) {
    im2col(g, k, x, cols);
    const std::size_t p_count = plane(g.out_h, g.out_w);
    const std::size_t ck = static_cast<std::size_t>(g.in_c * k * k);
    const std::size_t filters = static_cast<std::size_t>(g.out_c);
    for (std::size_t f = 0; f < filters; ++f) std::fill(y + f * p_count, y + (f + 1) * p_count, b[f]);
    for (std::size_t p0 = 0; p0 < p_count; p0 += kTile) {
        const std::size_t len = std::min(kTile, p_count - p0);
        for (std::size_t f = 0; f < filters; ++f) {
            double* yf = y + f * p_count + p0;
            const double* wf = w.data().data() + f * ck;
            for (std::size_t r = 0; r < ck; ++r) {
                if (wf[r] != 0.0) axpy(wf[r], cols.data() + r * p_count + p0, yf, len);
            }
        }
    }
    for (std::size_t i = 0; i < filters * p_count; ++i) y[i] = std::max(y[i], 0.0);
}

// dy is overwritten with the pre-activation gradient. dx may be null.
void conv_backward(const ConvGeometry& g, int k, const double* x, const double* y, double* dy, const Tensor& w,
                   Tensor& dw, Tensor& db, double* dx, std::vector<double>& cols) {
    const std::size_t p_count = plane(g.out_h, g.out_w);
    const std::size_t ck = static_cast<std::size_t>(g.in_c * k * k);
    const std::size_t filters = static_cast<std::size_t>(g.out_c);
    for (std::size_t i = 0; i < p_count * filters; ++i) {
        if (y[i] <= 0.0) dy[i] = 0.0;
    }
    for (std::size_t f = 0; f < filters; ++f) {
        const double* df = dy + f * p_count;
        double bias_grad = 0.0;
        for (std::size_t p = 0; p < p_count; ++p) bias_grad += df[p];
        db[f] += bias_grad;
    }
    im2col(g, k, x, cols);
    std::vector<double> dcols(dx ? ck * p_count : 0, 0.0);
    for (std::size_t p0 = 0; p0 < p_count; p0 += kTile) {
        const std::size_t len = std::min(kTile, p_count - p0);
        for (std::size_t f = 0; f < filters; ++f) {
            const double* df = dy + f * p_count + p0;
            double* dwf = dw.data().data() + f * ck;
            const double* wf = w.data().data() + f * ck;
            for (std::size_t r = 0; r < ck; ++r) {
                dwf[r] += dot(df, cols.data() + r * p_count + p0, len);
                if (dx && wf[r] != 0.0) axpy(wf[r], df, dcols.data() + r * p_count + p0, len);
            }
        }
    }
    if (dx) col2im_add(g, k, dcols, dx);
}

void maxpool_forward(const ConvGeometry& g, const double* y, double* out, std::uint32_t* arg) {
    for (int c = 0; c < g.out_c; ++c) {
        const double* yc = y + static_cast<std::size_t>(c) * plane(g.out_h, g.out_w);
        const std::size_t base = static_cast<std::size_t>(c) * plane(g.out_h, g.out_w);
        for (int py = 0; py < g.pool_h; ++py) {
            for (int px = 0; px < g.pool_w; ++px) {
                std::size_t best = static_cast<std::size_t>(2 * py) * static_cast<std::size_t>(g.out_w) +
                                   static_cast<std::size_t>(2 * px);
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::size_t at = static_cast<std::size_t>(2 * py + dy) * static_cast<std::size_t>(g.out_w) +
                                               static_cast<std::size_t>(2 * px + dx);
                        if (yc[at] > yc[best]) best = at;
                    }
                }
                const std::size_t o = static_cast<std::size_t>(c) * plane(g.pool_h, g.pool_w) +
                                      static_cast<std::size_t>(py) * static_cast<std::size_t>(g.pool_w) +
                                      static_cast<std::size_t>(px);
                out[o] = yc[best];
                if (arg) arg[o] = static_cast<std::uint32_t>(base + best);
            }
        }
    }
}

void check_batch(const CnnConfig& cfg, const Tensor& batch) {
    if (batch.rank() != 4 || batch.dim(1) != static_cast<std::size_t>(cfg.input_height) ||
        batch.dim(2) != static_cast<std::size_t>(cfg.input_width) ||
        batch.dim(3) != static_cast<std::size_t>(cfg.input_channels)) {
        throw Error(ErrorCode::shape_mismatch, "batch of shape " + batch.shape_string() + " does not match input " +
                                                   std::to_string(cfg.input_height) + "x" +
                                                   std::to_string(cfg.input_width) + "x" +
                                                   std::to_string(cfg.input_channels));
    }
}

// NHWC sample -> CHW.
void to_planar(const CnnConfig& cfg, std::span<const double> sample, double* out) {
    const std::size_t hw = plane(cfg.input_height, cfg.input_width);
    const std::size_t c_count = static_cast<std::size_t>(cfg.input_channels);
    for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t c = 0; c < c_count; ++c) out[c * hw + p] = sample[p * c_count + c];
    }
}

// Runs the network on every sample of `batch`. Dropout is applied when `rng`
// is given; activations are recorded into `cache` when given.
Tensor run_forward(const CnnModel& model, const Tensor& batch, Rng* rng, ForwardCache* cache) {
    const CnnConfig& cfg = model.config;
    check_batch(cfg, batch);
    const NetworkShape& shape = model.shape;
    const auto& P = model.params;
    const std::size_t n = batch.dim(0);
    const std::size_t hidden = static_cast<std::size_t>(cfg.hidden_units);
    const std::size_t classes = static_cast<std::size_t>(cfg.num_classes);
    const std::size_t flat = static_cast<std::size_t>(shape.flat_dim);
    const bool dropout = rng && cfg.dropout_rate > 0.0;

    if (cache) {
        cache->batch = n;
        cache->input.resize(n * conv_in_size(shape.conv[0]));
        for (std::size_t i = 0; i < 3; ++i) cache->conv_out[i].resize(n * conv_out_size(shape.conv[i]));
        for (std::size_t i = 0; i < 2; ++i) {
            cache->pooled[i].resize(n * pool_out_size(shape.conv[i]));
            cache->argmax[i].resize(n * pool_out_size(shape.conv[i]));
        }
        cache->hidden.resize(n * hidden);
        cache->dropout_mask.assign(dropout ? n * hidden : 0, 0.0);
    }

    Tensor logits({n, classes});
    std::vector<double> input(conv_in_size(shape.conv[0]));
    std::array<std::vector<double>, 3> conv;
    std::array<std::vector<double>, 2> pooled;
    for (std::size_t i = 0; i < 3; ++i) conv[i].resize(conv_out_size(shape.conv[i]));
    for (std::size_t i = 0; i < 2; ++i) pooled[i].resize(pool_out_size(shape.conv[i]));
    std::vector<double> h(hidden);
    std::vector<double> cols;
    const double keep_scale = dropout ? 1.0 / (1.0 - cfg.dropout_rate) : 1.0;

    for (std::size_t s = 0; s < n; ++s) {
        double* x = cache ? cache->input.data() + s * input.size() : input.data();
        to_planar(cfg, batch.row(s), x);

        const double* layer_in = x;
        for (std::size_t l = 0; l < 3; ++l) {
            const ConvGeometry& g = shape.conv[l];
            double* y = cache ? cache->conv_out[l].data() + s * conv[l].size() : conv[l].data();
            conv_forward(g, cfg.kernel, layer_in, P[2 * l].value, P[2 * l + 1].value, y, cols);
            if (g.pooled) {
                double* pout = cache ? cache->pooled[l].data() + s * pooled[l].size() : pooled[l].data();
                std::uint32_t* arg = cache ? cache->argmax[l].data() + s * pooled[l].size() : nullptr;
                maxpool_forward(g, y, pout, arg);
                layer_in = pout;
            } else {
                layer_in = y;
            }
        }

        const double* w1 = P[fc1_weight].value.data().data();
        for (std::size_t u = 0; u < hidden; ++u) {
            h[u] = std::max(P[fc1_bias].value[u] + dot(w1 + u * flat, layer_in, flat), 0.0);
        }
        if (cache) std::copy(h.begin(), h.end(), cache->hidden.begin() + static_cast<std::ptrdiff_t>(s * hidden));
        if (dropout) {
            for (std::size_t u = 0; u < hidden; ++u) {
                const double m = rng->uniform() < cfg.dropout_rate ? 0.0 : keep_scale;
                h[u] *= m;
                if (cache) cache->dropout_mask[s * hidden + u] = m;
            }
        }
        const double* w2 = P[fc2_weight].value.data().data();
        for (std::size_t k = 0; k < classes; ++k) {
            logits.at(s, k) = P[fc2_bias].value[k] + dot(w2 + k * hidden, h.data(), hidden);
        }
    }
    return logits;
}

std::string format_double(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view text) {
    if (text == "sgd") return OptimizerKind::sgd;
    if (text == "adam") return OptimizerKind::adam;
    throw Error(ErrorCode::invalid_argument, "unknown optimizer '" + std::string(text) + "'");
}

NetworkShape compute_shape(const CnnConfig& cfg) {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::inconsistent_config, why); };
    if (cfg.input_height < 1 || cfg.input_width < 1 || cfg.input_channels < 1) fail("input dimensions must be >= 1");
    if (cfg.kernel < 1) fail("kernel must be >= 1");
    if (cfg.hidden_units < 1 || cfg.num_classes < 2) fail("need hidden_units >= 1 and num_classes >= 2");
    if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");

    NetworkShape shape;
    int h = cfg.input_height, w = cfg.input_width, c = cfg.input_channels;
    for (std::size_t l = 0; l < 3; ++l) {
        ConvGeometry& g = shape.conv[l];
        const int s = cfg.conv_strides[l];
        if (s < 1 || cfg.conv_filters[l] < 1) fail("conv " + std::to_string(l + 1) + ": bad stride or filter count");
        g.in_h = h;
        g.in_w = w;
        g.in_c = c;
        g.stride = s;
        g.out_c = cfg.conv_filters[l];
        g.out_h = (h + s - 1) / s;
        g.out_w = (w + s - 1) / s;
        g.pad_top = std::max((g.out_h - 1) * s + cfg.kernel - h, 0) / 2;
        g.pad_left = std::max((g.out_w - 1) * s + cfg.kernel - w, 0) / 2;
        g.pooled = l < 2;
        g.pool_h = g.pooled ? g.out_h / 2 : g.out_h;
        g.pool_w = g.pooled ? g.out_w / 2 : g.out_w;
        if (g.next_h() < 1 || g.next_w() < 1) {
            fail("spatial size collapses below 1x1 after conv " + std::to_string(l + 1) + " (input " +
                 std::to_string(cfg.input_height) + "x" + std::to_string(cfg.input_width) + ")");
        }
        h = g.next_h();
        w = g.next_w();
        c = g.out_c;
    }
    shape.flat_dim = h * w * c;
    return shape;
}

std::size_t CnnModel::parameter_count() const {
    std::size_t n = 0;
    for (const Parameter& p : params) n += p.value.size();
    return n;
}

CnnModel init_model(const CnnConfig& cfg) {
    CnnModel model;
    model.config = cfg;
    model.shape = compute_shape(cfg);
    model.dropout_rng = Rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    const std::size_t k2 = static_cast<std::size_t>(cfg.kernel * cfg.kernel);
    std::vector<std::vector<std::size_t>> shapes;
    for (std::size_t l = 0; l < 3; ++l) {
        const ConvGeometry& g = model.shape.conv[l];
        shapes.push_back({static_cast<std::size_t>(g.out_c), static_cast<std::size_t>(g.in_c) * k2});
        shapes.push_back({static_cast<std::size_t>(g.out_c)});
    }
    shapes.push_back({static_cast<std::size_t>(cfg.hidden_units), static_cast<std::size_t>(model.shape.flat_dim)});
    shapes.push_back({static_cast<std::size_t>(cfg.hidden_units)});
    shapes.push_back({static_cast<std::size_t>(cfg.num_classes), static_cast<std::size_t>(cfg.hidden_units)});
    shapes.push_back({static_cast<std::size_t>(cfg.num_classes)});

    Rng rng(cfg.seed);
    for (std::size_t i = 0; i < param_count; ++i) {
        Parameter p{kParamNames[i], Tensor(shapes[i])};
        if (shapes[i].size() == 2) {
            const double bound = std::sqrt(6.0 / static_cast<double>(shapes[i][1]));
            for (double& v : p.value.data()) v = rng.uniform(-bound, bound);
        }
        model.params.push_back(std::move(p));
    }
    return model;
}

ForwardResult forward(CnnModel& model, const Tensor& batch, bool training) {
    ForwardResult result;
    if (training) {
        result.cache.emplace();
        result.logits = run_forward(model, batch, &model.dropout_rng, &*result.cache);
    } else {
        result.logits = run_forward(model, batch, nullptr, nullptr);
    }
    return result;
}

Tensor infer_logits(const CnnModel& model, const Tensor& batch) { return run_forward(model, batch, nullptr, nullptr); }

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw Error(ErrorCode::shape_mismatch, "logits must be N x K");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) throw Error(ErrorCode::length_mismatch, "labels do not match batch size");
    if (n == 0) throw Error(ErrorCode::empty_list, "empty batch");
    LossResult result{0.0, Tensor({n, k})};
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= k) {
            throw Error(ErrorCode::invalid_argument, "label " + std::to_string(label) + " out of range");
        }
        const auto row = logits.row(i);
        const double top = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - top);
        const double log_sum = std::log(sum);
        result.loss += log_sum - (row[static_cast<std::size_t>(label)] - top);
        auto grad = result.d_logits.row(i);
        for (std::size_t j = 0; j < k; ++j) {
            grad[j] = std::exp(row[j] - top - log_sum) / static_cast<double>(n);
        }
        grad[static_cast<std::size_t>(label)] -= 1.0 / static_cast<double>(n);
    }
    result.loss /= static_cast<double>(n);
    return result;
}

Gradients Gradients::zeros_like(const CnnModel& model) {
    Gradients g;
    for (const Parameter& p : model.params) g.grads.emplace_back(p.value.shape());
    return g;
}

void Gradients::accumulate(const Gradients& other, double scale) {
    if (other.grads.size() != grads.size()) throw Error(ErrorCode::shape_mismatch, "gradient sets differ");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        auto dst = grads[i].data();
        const auto src = other.grads[i].data();
        if (dst.size() != src.size()) throw Error(ErrorCode::shape_mismatch, "gradient shapes differ");
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
    }
}

Gradients backward(const CnnModel& model, const std::optional<ForwardCache>& cache, const Tensor& d_logits) {
    if (!cache) throw Error(ErrorCode::missing_cache, "backward needs a training-mode forward pass");
    const CnnConfig& cfg = model.config;
    const NetworkShape& shape = model.shape;
    const auto& P = model.params;
    const std::size_t n = cache->batch;
    const std::size_t hidden = static_cast<std::size_t>(cfg.hidden_units);
    const std::size_t classes = static_cast<std::size_t>(cfg.num_classes);
    const std::size_t flat = static_cast<std::size_t>(shape.flat_dim);
    if (d_logits.rank() != 2 || d_logits.dim(0) != n || d_logits.dim(1) != classes) {
        throw Error(ErrorCode::shape_mismatch, "d_logits shape " + d_logits.shape_string() + " does not match cache");
    }

    Gradients g = Gradients::zeros_like(model);
    std::vector<double> h(hidden), dh(hidden), dflat(flat);
    std::array<std::vector<double>, 3> dconv;
    std::array<std::vector<double>, 2> dpool;
    for (std::size_t i = 0; i < 3; ++i) dconv[i].resize(conv_out_size(shape.conv[i]));
    for (std::size_t i = 0; i < 2; ++i) dpool[i].resize(pool_out_size(shape.conv[i]));
    std::vector<double> cols;

    const double* w1 = P[fc1_weight].value.data().data();
    const double* w2 = P[fc2_weight].value.data().data();
    double* gw1 = g.grads[fc1_weight].data().data();
    double* gw2 = g.grads[fc2_weight].data().data();

    for (std::size_t s = 0; s < n; ++s) {
        const auto dl = d_logits.row(s);
        const double* hid = cache->hidden.data() + s * hidden;
        const bool masked = !cache->dropout_mask.empty();
        for (std::size_t u = 0; u < hidden; ++u) h[u] = masked ? hid[u] * cache->dropout_mask[s * hidden + u] : hid[u];

        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t k = 0; k < classes; ++k) {
            const double d = dl[k];
            if (d == 0.0) continue;
            g.grads[fc2_bias][k] += d;
            axpy(d, h.data(), gw2 + k * hidden, hidden);
            axpy(d, w2 + k * hidden, dh.data(), hidden);
        }
        for (std::size_t u = 0; u < hidden; ++u) {
            if (masked) dh[u] *= cache->dropout_mask[s * hidden + u];
            if (hid[u] <= 0.0) dh[u] = 0.0;
        }

        const ConvGeometry& g3 = shape.conv[2];
        const double* flat_in = cache->conv_out[2].data() + s * conv_out_size(g3);
        std::fill(dflat.begin(), dflat.end(), 0.0);
        for (std::size_t u = 0; u < hidden; ++u) {
            const double d = dh[u];
            if (d == 0.0) continue;
            g.grads[fc1_bias][u] += d;
            axpy(d, flat_in, gw1 + u * flat, flat);
            axpy(d, w1 + u * flat, dflat.data(), flat);
        }

        // conv3 output is the flattened vector.
        std::copy(dflat.begin(), dflat.end(), dconv[2].begin());
        for (std::size_t l = 3; l-- > 0;) {
            const ConvGeometry& geo = shape.conv[l];
            const double* y = cache->conv_out[l].data() + s * conv_out_size(geo);
            const double* x = l == 0 ? cache->input.data() + s * conv_in_size(geo)
                                     : cache->pooled[l - 1].data() + s * pool_out_size(shape.conv[l - 1]);
            double* dx = nullptr;
            if (l > 0) {
                std::fill(dpool[l - 1].begin(), dpool[l - 1].end(), 0.0);
                dx = dpool[l - 1].data();
            }
            conv_backward(geo, cfg.kernel, x, y, dconv[l].data(), P[2 * l].value, g.grads[2 * l],
                          g.grads[2 * l + 1], dx, cols);
            if (l > 0) {
                // Route pooled gradients back to the arg-max positions.
                const ConvGeometry& prev = shape.conv[l - 1];
                std::fill(dconv[l - 1].begin(), dconv[l - 1].end(), 0.0);
                const std::uint32_t* arg = cache->argmax[l - 1].data() + s * pool_out_size(prev);
                for (std::size_t i = 0; i < pool_out_size(prev); ++i) dconv[l - 1][arg[i]] += dpool[l - 1][i];
            }
        }
    }
    return g;
}

namespace {

double loss_at(const CnnModel& model, const Tensor& batch, std::span<const int> labels) {
    return softmax_cross_entropy(infer_logits(model, batch), labels).loss;
}

}  // namespace

GradientCheckResult gradient_check(const CnnModel& model, const Tensor& batch, std::span<const int> labels,
                                   double epsilon, std::size_t samples_per_layer, std::uint64_t seed) {
    CnnModel probe = model;
    probe.config.dropout_rate = 0.0;
    ForwardResult fwd = forward(probe, batch, true);
    const LossResult loss = softmax_cross_entropy(fwd.logits, labels);
    const Gradients analytic = backward(probe, fwd.cache, loss.d_logits);

    GradientCheckResult result;
    Rng rng(seed);
    for (std::size_t layer = 0; layer < param_count; layer += 2) {
        // A layer is its weight tensor followed by its bias vector.
        const std::size_t weights = probe.params[layer].value.size();
        const std::size_t total = weights + probe.params[layer + 1].value.size();
        std::vector<std::size_t> picks(total);
        std::iota(picks.begin(), picks.end(), std::size_t{0});
        if (total > samples_per_layer) {
            rng.shuffle(picks);
            picks.resize(samples_per_layer);
        }
        LayerCheck check{probe.params[layer].name.substr(0, probe.params[layer].name.find('.')), picks.size(), 0.0};
        for (std::size_t flat_index : picks) {
            const std::size_t which = flat_index < weights ? layer : layer + 1;
            const std::size_t i = flat_index < weights ? flat_index : flat_index - weights;
            double& w = probe.params[which].value[i];
            const double saved = w;
            w = saved + epsilon;
            const double up = loss_at(probe, batch, labels);
            w = saved - epsilon;
            const double down = loss_at(probe, batch, labels);
            w = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = analytic.grads[which][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            check.max_relative_error = std::max(check.max_relative_error, std::abs(a - numeric) / denom);
        }
        result.max_relative_error = std::max(result.max_relative_error, check.max_relative_error);
        result.layers.push_back(std::move(check));
    }
    return result;
}

void sgd_step(CnnModel& model, const Gradients& grads, double lr) {
    if (grads.grads.size() != model.params.size()) throw Error(ErrorCode::shape_mismatch, "gradient count mismatch");
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        auto w = model.params[i].value.data();
        const auto g = grads.grads[i].data();
        if (w.size() != g.size()) throw Error(ErrorCode::shape_mismatch, "gradient shape mismatch for " + model.params[i].name);
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
    }
}

Optimizer::Optimizer(const CnnModel& model)
    : kind_(model.config.optimizer), lr_(model.config.learning_rate), momentum_(model.config.momentum) {
    if (kind_ == OptimizerKind::adam || momentum_ != 0.0) {
        for (const Parameter& p : model.params) first_.emplace_back(p.value.shape());
    }
    if (kind_ == OptimizerKind::adam) {
        for (const Parameter& p : model.params) second_.emplace_back(p.value.shape());
    }
}

void Optimizer::step(CnnModel& model, const Gradients& grads) {
    ++steps_;
    if (kind_ == OptimizerKind::sgd) {
        if (momentum_ == 0.0) {
            sgd_step(model, grads, lr_);
            return;
        }
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            auto w = model.params[i].value.data();
            auto v = first_[i].data();
            const auto g = grads.grads[i].data();
            for (std::size_t j = 0; j < w.size(); ++j) {
                v[j] = momentum_ * v[j] + g[j];
                w[j] -= lr_ * v[j];
            }
        }
        return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        auto w = model.params[i].value.data();
        auto m = first_[i].data();
        auto v = second_[i].data();
        const auto g = grads.grads[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
        }
    }
}

namespace {

Tensor gather(const Tensor& images, std::span<const std::size_t> rows) {
    std::vector<std::size_t> shape = images.shape();
    shape[0] = rows.size();
    Tensor out(shape);
    const std::size_t stride = images.size() / images.dim(0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = images.row(rows[i]);
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
}

std::size_t argmax_row(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

double accuracy(const CnnModel& model, const Dataset& data) {
    if (data.size() == 0) return 0.0;
    const Tensor scores = predict_scores(model, data.images);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (argmax_row(scores.row(i)) == static_cast<std::size_t>(data.labels[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

void check_dataset(const CnnConfig& cfg, const Dataset& data, const char* what) {
    if (data.images.rank() != 4 || data.images.dim(0) != data.labels.size()) {
        throw Error(ErrorCode::shape_mismatch, std::string(what) + ": images and labels disagree");
    }
    if (data.size() > 0) check_batch(cfg, data.images);
}

}  // namespace

TrainResult train(const CnnConfig& cfg, const Dataset& train_set, const Dataset* val_set) {
    if (train_set.size() == 0) throw Error(ErrorCode::empty_training_set, "no training samples");
    check_dataset(cfg, train_set, "training set");
    if (val_set) check_dataset(cfg, *val_set, "validation set");

    TrainResult result{init_model(cfg), {}};
    CnnModel& model = result.model;
    Optimizer optimizer(model);
    Rng shuffle_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);

    const std::size_t n = train_set.size();
    const std::size_t batch = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(cfg.batch_size, 1)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(n, start + batch);
            const double batch_n = static_cast<double>(stop - start);
            Gradients total = Gradients::zeros_like(model);
            for (std::size_t c = start; c < stop; c += kChunk) {
                const std::size_t c_stop = std::min(stop, c + kChunk);
                const std::span<const std::size_t> rows(order.data() + c, c_stop - c);
                std::vector<int> labels;
                for (std::size_t r : rows) labels.push_back(train_set.labels[r]);
                ForwardResult fwd = forward(model, gather(train_set.images, rows), true);
                const LossResult loss = softmax_cross_entropy(fwd.logits, labels);
                const double weight = static_cast<double>(rows.size());
                loss_sum += loss.loss * weight;
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    if (argmax_row(fwd.logits.row(i)) == static_cast<std::size_t>(labels[i])) ++correct;
                }
                // Chunk losses are chunk means; rescale to the mini-batch mean.
                total.accumulate(backward(model, fwd.cache, loss.d_logits), weight / batch_n);
            }
            optimizer.step(model, total);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = loss_sum / static_cast<double>(n);
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        if (val_set && val_set->size() > 0) stats.val_accuracy = accuracy(model, *val_set);
        result.history.epochs.push_back(stats);
    }
    return result;
}

Tensor predict_scores(const CnnModel& model, const Tensor& batch) {
    check_batch(model.config, batch);
    const std::size_t n = batch.dim(0);
    const std::size_t k = static_cast<std::size_t>(model.config.num_classes);
    Tensor scores({n, k});
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < n; start += kChunk) {
        rows.clear();
        for (std::size_t i = start; i < std::min(n, start + kChunk); ++i) rows.push_back(i);
        const Tensor logits = infer_logits(model, gather(batch, rows));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto row = logits.row(i);
            const double top = *std::max_element(row.begin(), row.end());
            double sum = 0.0;
            for (double v : row) sum += std::exp(v - top);
            auto out = scores.row(rows[i]);
            for (std::size_t j = 0; j < k; ++j) out[j] = std::exp(row[j] - top) / sum;
        }
    }
    return scores;
}

namespace {

constexpr std::string_view kCheckpointMagic = "skelimg-cnn v1";

std::string join3(const std::array<int, 3>& v) {
    return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]);
}

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorCode::corrupt_checkpoint, why); }

template <typename T>
T parse_value(const std::string& key, std::string_view text) {
    T value{};
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || p != text.data() + text.size()) corrupt("bad value for '" + key + "'");
    return value;
}

std::array<int, 3> parse_triple(const std::string& key, std::string_view text) {
    std::array<int, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto comma = text.find(',');
        if ((i < 2) == (comma == std::string_view::npos)) corrupt("bad triple for '" + key + "'");
        out[i] = parse_value<int>(key, text.substr(0, comma));
        if (i < 2) text.remove_prefix(comma + 1);
    }
    return out;
}

}  // namespace

std::vector<std::uint8_t> save_model(const CnnModel& model) {
    const CnnConfig& c = model.config;
    std::string header = std::string(kCheckpointMagic) + "\n";
    auto kv = [&header](const std::string& k, const std::string& v) { header += k + "=" + v + "\n"; };
    kv("input_height", std::to_string(c.input_height));
    kv("input_width", std::to_string(c.input_width));
    kv("input_channels", std::to_string(c.input_channels));
    kv("conv_filters", join3(c.conv_filters));
    kv("kernel", std::to_string(c.kernel));
    kv("conv_strides", join3(c.conv_strides));
    kv("hidden_units", std::to_string(c.hidden_units));
    kv("num_classes", std::to_string(c.num_classes));
    kv("dropout_rate", format_double(c.dropout_rate));
    kv("learning_rate", format_double(c.learning_rate));
    kv("batch_size", std::to_string(c.batch_size));
    kv("epochs", std::to_string(c.epochs));
    kv("seed", std::to_string(c.seed));
    kv("optimizer", std::string(to_string(c.optimizer)));
    kv("momentum", format_double(c.momentum));
    kv("parameters", std::to_string(model.parameter_count()));
    header += "end\n";

    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + model.parameter_count() * 8);
    for (const Parameter& p : model.params) {
        for (double v : p.value.data()) {
            const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
            for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
        }
    }
    return out;
}

CnnModel load_model(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const auto begin = bytes.begin() + static_cast<std::ptrdiff_t>(pos);
        const auto nl = std::find(begin, bytes.end(), std::uint8_t{'\n'});
        if (nl == bytes.end()) corrupt("truncated header");
        pos = static_cast<std::size_t>(nl - bytes.begin()) + 1;
        return std::string(begin, nl);
    };
    if (next_line() != kCheckpointMagic) corrupt("not a skelimg checkpoint");

    std::map<std::string, std::string> kv;
    for (std::string line = next_line(); line != "end"; line = next_line()) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) corrupt("bad header line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) corrupt("missing header key '" + k + "'");
        return it->second;
    };

    CnnConfig c;
    c.input_height = parse_value<int>("input_height", get("input_height"));
    c.input_width = parse_value<int>("input_width", get("input_width"));
    c.input_channels = parse_value<int>("input_channels", get("input_channels"));
    c.conv_filters = parse_triple("conv_filters", get("conv_filters"));
    c.kernel = parse_value<int>("kernel", get("kernel"));
    c.conv_strides = parse_triple("conv_strides", get("conv_strides"));
    c.hidden_units = parse_value<int>("hidden_units", get("hidden_units"));
    c.num_classes = parse_value<int>("num_classes", get("num_classes"));
    c.dropout_rate = parse_value<double>("dropout_rate", get("dropout_rate"));
    c.learning_rate = parse_value<double>("learning_rate", get("learning_rate"));
    c.batch_size = parse_value<int>("batch_size", get("batch_size"));
    c.epochs = parse_value<int>("epochs", get("epochs"));
    c.seed = parse_value<std::uint64_t>("seed", get("seed"));
    try {
        c.optimizer = parse_optimizer(get("optimizer"));
    } catch (const Error&) {
        corrupt("bad optimizer");
    }
    c.momentum = parse_value<double>("momentum", get("momentum"));
    const auto declared = parse_value<std::size_t>("parameters", get("parameters"));

    CnnModel model;
    try {
        model = init_model(c);
    } catch (const Error& e) {
        corrupt(std::string("header describes an invalid network: ") + e.what());
    }
    const std::size_t expected = model.parameter_count();
    if (declared != expected) corrupt("header declares " + std::to_string(declared) + " parameters, config implies " + std::to_string(expected));
    if (bytes.size() - pos != expected * 8) {
        corrupt("payload holds " + std::to_string(bytes.size() - pos) + " bytes, expected " + std::to_string(expected * 8));
    }
    const std::uint8_t* p = bytes.data() + pos;
    for (Parameter& param : model.params) {
        for (double& v : param.value.data()) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
            v = std::bit_cast<double>(bits);
            p += 8;
        }
    }
    return model;
}

std::string history_to_csv(const TrainHistory& history) {
    std::string out = "epoch,loss,train_acc,val_acc\n";
    for (const EpochStats& e : history.epochs) {
        out += std::to_string(e.epoch) + "," + format_double(e.loss) + "," + format_double(e.train_accuracy) + "," +
               (e.val_accuracy ? format_double(*e.val_accuracy) : std::string()) + "\n";
    }
    return out;
}

}  // namespace skelimg
