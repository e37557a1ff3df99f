#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slipfuse/dataset.hpp"
#include "slipfuse/errors.hpp"
#include "slipfuse/rng.hpp"
#include "slipfuse/sha256.hpp"

namespace slipfuse {

// Architecture hyperparameters of the trainable head. Defaults follow the
// reference configuration: per-pair FC to 64 features, two LSTM layers with
// 64 memory units, two-way softmax, dropout keep 0.5 after the FC and 0.8
// after each LSTM layer.
struct ModelConfig {
    int input_dim = 0;   // feature dim per timestep (after modality selection)
    int fused_dim = 64;
    int lstm_layers = 2;
    int lstm_units = 64;
    int num_classes = 2;
    double fc_dropout_keep = 0.5;
    double lstm_dropout_keep = 0.8;
    int seq_len = 8;
    // Fixed feature scaling applied inside the model; patch statistics arrive
    // in raw 0..255 intensity units.
    double input_scale = 1.0 / 255.0;
};

inline void validate_config(const ModelConfig& c) {
    if (c.input_dim < 1) throw InvalidConfig("input_dim must be >= 1");
    if (c.fused_dim < 1) throw InvalidConfig("fused_dim must be >= 1");
    if (c.lstm_layers < 1) throw InvalidConfig("lstm_layers must be >= 1");
    if (c.lstm_units < 1) throw InvalidConfig("lstm_units must be >= 1");
    if (c.num_classes != 2) throw InvalidConfig("num_classes must be 2");
    if (!(c.fc_dropout_keep > 0 && c.fc_dropout_keep <= 1))
        throw InvalidConfig("fc_dropout_keep must be in (0,1]");
    if (!(c.lstm_dropout_keep > 0 && c.lstm_dropout_keep <= 1))
        throw InvalidConfig("lstm_dropout_keep must be in (0,1]");
    if (c.seq_len < 1) throw InvalidConfig("seq_len must be >= 1");
    if (c.input_scale <= 0) throw InvalidConfig("input_scale must be > 0");
}

// Class index convention: 0 = STABLE, 1 = SLIP (output index 1 is P(slip)).
inline int class_of(Label l) { return l == Label::SLIP ? 1 : 0; }
inline Label label_of_class(int c) { return c == 1 ? Label::SLIP : Label::STABLE; }

// Gate blocks within the stacked 4H LSTM parameter rows.
enum : int { kGateI = 0, kGateF = 1, kGateC = 2, kGateO = 3 };

template <typename S>
struct LstmLayerT {
    std::vector<S> w_in;   // 4H x in_dim, row-major
    std::vector<S> w_rec;  // 4H x H
    std::vector<S> bias;   // 4H
};

template <typename S>
struct ModelStateT {
    ModelConfig config;
    std::vector<S> fusion_w;  // fused_dim x input_dim
    std::vector<S> fusion_b;  // fused_dim
    std::vector<LstmLayerT<S>> lstm;
    std::vector<S> cls_w;  // num_classes x lstm_units
    std::vector<S> cls_b;  // num_classes
    uint64_t dropout_seed = 0;
    uint64_t dropout_state = 0;
    bool training_mode = false;

    int lstm_input_dim(int layer) const {
        return layer == 0 ? config.fused_dim : config.lstm_units;
    }
};

using ModelState = ModelStateT<float>;

// Named view over every trainable parameter group. The optimizer walks this
// registry and nothing else, which is what keeps frozen backbones frozen.
template <typename S>
struct ParamRef {
    std::string name;
    std::vector<S>* values;
};

template <typename S>
std::vector<ParamRef<S>> param_registry(ModelStateT<S>& s) {
    std::vector<ParamRef<S>> r;
    r.push_back({"fusion.w", &s.fusion_w});
    r.push_back({"fusion.b", &s.fusion_b});
    for (size_t l = 0; l < s.lstm.size(); ++l) {
        const std::string p = "lstm" + std::to_string(l);
        r.push_back({p + ".w_in", &s.lstm[l].w_in});
        r.push_back({p + ".w_rec", &s.lstm[l].w_rec});
        r.push_back({p + ".b", &s.lstm[l].bias});
    }
    r.push_back({"cls.w", &s.cls_w});
    r.push_back({"cls.b", &s.cls_b});
    return r;
}

// Gradient buffers shaped exactly like the parameter registry.
template <typename S>
struct GradientsT {
    std::vector<std::vector<S>> groups;

    template <typename S2>
    static GradientsT zeros_like(ModelStateT<S2>& state) {
        GradientsT g;
        for (auto& p : param_registry(state)) g.groups.emplace_back(p.values->size(), S(0));
        return g;
    }
    void zero() {
        for (auto& v : groups) std::fill(v.begin(), v.end(), S(0));
    }
};

using Gradients = GradientsT<float>;

// Uniform fan-in initialization; biases zero except the LSTM forget gate
// (1.0) for stable early training. Deterministic for a fixed seed.
template <typename S = float>
ModelStateT<S> init_model(const ModelConfig& config, uint64_t seed) {
    validate_config(config);
    ModelStateT<S> s;
    s.config = config;
    s.dropout_seed = seed;
    s.dropout_state = mix_seed(seed, 0xd20b0a7ULL);
    Rng rng(mix_seed(seed, 0x1217ULL));

    auto fill_uniform = [&rng](std::vector<S>& v, size_t n, int fan_in) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        v.resize(n);
        for (auto& x : v) x = static_cast<S>(rng.uniform(-scale, scale));
    };

    const int D = config.input_dim, F = config.fused_dim, H = config.lstm_units;
    fill_uniform(s.fusion_w, static_cast<size_t>(F) * D, D);
    s.fusion_b.assign(F, S(0));
    s.lstm.resize(config.lstm_layers);
    for (int l = 0; l < config.lstm_layers; ++l) {
        const int in_dim = l == 0 ? F : H;
        fill_uniform(s.lstm[l].w_in, static_cast<size_t>(4) * H * in_dim, in_dim);
        fill_uniform(s.lstm[l].w_rec, static_cast<size_t>(4) * H * H, H);
        s.lstm[l].bias.assign(static_cast<size_t>(4) * H, S(0));
        for (int j = 0; j < H; ++j) s.lstm[l].bias[kGateF * H + j] = S(1);
    }
    fill_uniform(s.cls_w, static_cast<size_t>(config.num_classes) * H, H);
    s.cls_b.assign(config.num_classes, S(0));
    return s;
}

namespace detail {

template <typename S>
S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

// y += M x, with M of shape rows x cols (row-major).
template <typename S>
void matvec_acc(const S* m, const S* x, S* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        S acc = 0;
        const S* row = m + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// y += M^T d, with M of shape rows x cols: y has cols entries, d has rows.
template <typename S>
void matvec_t_acc(const S* m, const S* d, S* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const S dr = d[r];
        if (dr == S(0)) continue;
        const S* row = m + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) y[c] += dr * row[c];
    }
}

// G += d x^T (outer product accumulate), G rows x cols.
template <typename S>
void outer_acc(S* g, const S* d, const S* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const S dr = d[r];
        if (dr == S(0)) continue;
        S* row = g + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) row[c] += dr * x[c];
    }
}

// Everything the backward pass needs from one sample's forward pass.
template <typename S>
struct Workspace {
    std::vector<S> x_scaled;       // L x D
    std::vector<S> fused;          // L x F (post-tanh, pre-dropout)
    std::vector<S> fc_mask;        // L x F (inverted dropout factors)
    struct Layer {
        std::vector<S> input;      // L x in_dim (post-dropout output of below)
        std::vector<S> gates;      // L x 4H (post-activation)
        std::vector<S> cell;       // L x H
        std::vector<S> tanh_cell;  // L x H
        std::vector<S> hidden;     // L x H (pre-dropout)
        std::vector<S> mask;       // L x H
        std::vector<S> dropped;    // L x H
    };
    std::vector<Layer> layers;
    std::array<double, 2> probs{};
};

template <typename S>
void forward_sample(ModelStateT<S>& state, std::span<const float> features, bool training,
                    Workspace<S>& ws) {
    const ModelConfig& cfg = state.config;
    const int L = cfg.seq_len, D = cfg.input_dim, F = cfg.fused_dim, H = cfg.lstm_units;
    if (features.size() != static_cast<size_t>(L) * D)
        throw ShapeMismatch("feature buffer has " + std::to_string(features.size()) +
                            " values, expected " + std::to_string(L * D));

    ws.x_scaled.assign(static_cast<size_t>(L) * D, S(0));
    ws.fused.assign(static_cast<size_t>(L) * F, S(0));
    ws.fc_mask.assign(static_cast<size_t>(L) * F, S(1));
    ws.layers.assign(cfg.lstm_layers, {});

    Rng drop_rng(0);
    if (training) drop_rng.set_state(state.dropout_state);
    auto draw_mask = [&](std::vector<S>& mask, size_t off, int n, double keep) {
        if (!training || keep >= 1.0) return;
        for (int j = 0; j < n; ++j)
            mask[off + j] = drop_rng.next_double() < keep ? S(1.0 / keep) : S(0);
    };

    for (int t = 0; t < L; ++t) {
        S* x = &ws.x_scaled[static_cast<size_t>(t) * D];
        for (int j = 0; j < D; ++j)
            x[j] = static_cast<S>(features[static_cast<size_t>(t) * D + j] * cfg.input_scale);
        S* fused = &ws.fused[static_cast<size_t>(t) * F];
        for (int j = 0; j < F; ++j) fused[j] = state.fusion_b[j];
        matvec_acc(state.fusion_w.data(), x, fused, F, D);
        for (int j = 0; j < F; ++j) fused[j] = std::tanh(fused[j]);
        draw_mask(ws.fc_mask, static_cast<size_t>(t) * F, F, cfg.fc_dropout_keep);
    }

    for (int l = 0; l < cfg.lstm_layers; ++l) {
        auto& lay = ws.layers[l];
        const int in_dim = state.lstm_input_dim(l);
        lay.input.assign(static_cast<size_t>(L) * in_dim, S(0));
        lay.gates.assign(static_cast<size_t>(L) * 4 * H, S(0));
        lay.cell.assign(static_cast<size_t>(L) * H, S(0));
        lay.tanh_cell.assign(static_cast<size_t>(L) * H, S(0));
        lay.hidden.assign(static_cast<size_t>(L) * H, S(0));
        lay.mask.assign(static_cast<size_t>(L) * H, S(1));
        lay.dropped.assign(static_cast<size_t>(L) * H, S(0));

        for (int t = 0; t < L; ++t) {
            S* in = &lay.input[static_cast<size_t>(t) * in_dim];
            if (l == 0) {
                const S* fused = &ws.fused[static_cast<size_t>(t) * F];
                const S* mask = &ws.fc_mask[static_cast<size_t>(t) * F];
                for (int j = 0; j < F; ++j) in[j] = fused[j] * mask[j];
            } else {
                const S* below = &ws.layers[l - 1].dropped[static_cast<size_t>(t) * H];
                std::copy(below, below + H, in);
            }
            S* g = &lay.gates[static_cast<size_t>(t) * 4 * H];
            for (int j = 0; j < 4 * H; ++j) g[j] = state.lstm[l].bias[j];
            matvec_acc(state.lstm[l].w_in.data(), in, g, 4 * H, in_dim);
            if (t > 0)
                matvec_acc(state.lstm[l].w_rec.data(),
                           &lay.hidden[static_cast<size_t>(t - 1) * H], g, 4 * H, H);
            for (int j = 0; j < H; ++j) {
                g[kGateI * H + j] = sigmoid(g[kGateI * H + j]);
                g[kGateF * H + j] = sigmoid(g[kGateF * H + j]);
                g[kGateC * H + j] = std::tanh(g[kGateC * H + j]);
                g[kGateO * H + j] = sigmoid(g[kGateO * H + j]);
            }
            S* c = &lay.cell[static_cast<size_t>(t) * H];
            S* tc = &lay.tanh_cell[static_cast<size_t>(t) * H];
            S* h = &lay.hidden[static_cast<size_t>(t) * H];
            const S* c_prev = t > 0 ? &lay.cell[static_cast<size_t>(t - 1) * H] : nullptr;
            for (int j = 0; j < H; ++j) {
                const S prev = c_prev ? c_prev[j] : S(0);
                c[j] = g[kGateF * H + j] * prev + g[kGateI * H + j] * g[kGateC * H + j];
                tc[j] = std::tanh(c[j]);
                h[j] = g[kGateO * H + j] * tc[j];
            }
            draw_mask(lay.mask, static_cast<size_t>(t) * H, H, cfg.lstm_dropout_keep);
            S* hd = &lay.dropped[static_cast<size_t>(t) * H];
            const S* mask = &lay.mask[static_cast<size_t>(t) * H];
            for (int j = 0; j < H; ++j) hd[j] = h[j] * mask[j];
        }
    }
    if (training) state.dropout_state = drop_rng.state();

    const auto& top = ws.layers.back();
    const S* readout = &top.dropped[static_cast<size_t>(L - 1) * H];
    double logits[2] = {0, 0};
    for (int k = 0; k < 2; ++k) {
        double acc = static_cast<double>(state.cls_b[k]);
        const S* row = state.cls_w.data() + static_cast<size_t>(k) * H;
        for (int j = 0; j < H; ++j) acc += static_cast<double>(row[j]) * readout[j];
        logits[k] = acc;
    }
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
    ws.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
}

// Backpropagation through the classifier, both LSTM layers, dropout, and the
// fusion FC. Gradients accumulate into `grads` with the given weight (1/batch
// for mean losses). Feature gradients are never computed: the backbone below
// this head is frozen by construction.
template <typename S>
void backward_sample(const ModelStateT<S>& state, const Workspace<S>& ws, int label_class,
                     double weight, GradientsT<S>& grads) {
    const ModelConfig& cfg = state.config;
    const int L = cfg.seq_len, D = cfg.input_dim, F = cfg.fused_dim, H = cfg.lstm_units;

    size_t gi = 0;
    S* d_fusion_w = grads.groups[gi++].data();
    S* d_fusion_b = grads.groups[gi++].data();
    std::vector<std::array<S*, 3>> d_lstm(cfg.lstm_layers);
    for (int l = 0; l < cfg.lstm_layers; ++l) {
        d_lstm[l][0] = grads.groups[gi++].data();
        d_lstm[l][1] = grads.groups[gi++].data();
        d_lstm[l][2] = grads.groups[gi++].data();
    }
    S* d_cls_w = grads.groups[gi++].data();
    S* d_cls_b = grads.groups[gi++].data();

    // d loss / d logits for softmax + cross-entropy.
    S dlogits[2];
    for (int k = 0; k < 2; ++k)
        dlogits[k] = static_cast<S>((ws.probs[k] - (k == label_class ? 1.0 : 0.0)) * weight);

    const auto& top = ws.layers.back();
    const S* readout = &top.dropped[static_cast<size_t>(L - 1) * H];
    std::vector<S> dh_out(static_cast<size_t>(L) * H, S(0));  // grad wrt dropped output
    for (int k = 0; k < 2; ++k) {
        d_cls_b[k] += dlogits[k];
        S* gw = d_cls_w + static_cast<size_t>(k) * H;
        const S* row = state.cls_w.data() + static_cast<size_t>(k) * H;
        S* dtop = &dh_out[static_cast<size_t>(L - 1) * H];
        for (int j = 0; j < H; ++j) {
            gw[j] += dlogits[k] * readout[j];
            dtop[j] += dlogits[k] * row[j];
        }
    }

    std::vector<S> dh(H), dc(H), dh_rec(H), dc_rec(H), dpre(static_cast<size_t>(4) * H);
    std::vector<S> dx_below;
    for (int l = cfg.lstm_layers - 1; l >= 0; --l) {
        const auto& lay = ws.layers[l];
        const int in_dim = state.lstm_input_dim(l);
        dx_below.assign(static_cast<size_t>(L) * in_dim, S(0));
        std::fill(dh_rec.begin(), dh_rec.end(), S(0));
        std::fill(dc_rec.begin(), dc_rec.end(), S(0));

        for (int t = L - 1; t >= 0; --t) {
            const S* g = &lay.gates[static_cast<size_t>(t) * 4 * H];
            const S* tc = &lay.tanh_cell[static_cast<size_t>(t) * H];
            const S* mask = &lay.mask[static_cast<size_t>(t) * H];
            const S* c_prev = t > 0 ? &lay.cell[static_cast<size_t>(t - 1) * H] : nullptr;

            for (int j = 0; j < H; ++j) {
                // upstream grad arrives wrt the dropped output
                dh[j] = dh_out[static_cast<size_t>(t) * H + j] * mask[j] + dh_rec[j];
                dc[j] = dh[j] * g[kGateO * H + j] * (S(1) - tc[j] * tc[j]) + dc_rec[j];
            }
            for (int j = 0; j < H; ++j) {
                const S i_g = g[kGateI * H + j], f_g = g[kGateF * H + j];
                const S c_g = g[kGateC * H + j], o_g = g[kGateO * H + j];
                const S prev = c_prev ? c_prev[j] : S(0);
                dpre[kGateO * H + j] = dh[j] * tc[j] * o_g * (S(1) - o_g);
                dpre[kGateF * H + j] = dc[j] * prev * f_g * (S(1) - f_g);
                dpre[kGateI * H + j] = dc[j] * c_g * i_g * (S(1) - i_g);
                dpre[kGateC * H + j] = dc[j] * i_g * (S(1) - c_g * c_g);
                dc_rec[j] = dc[j] * f_g;
            }
            const S* in = &lay.input[static_cast<size_t>(t) * in_dim];
            outer_acc(d_lstm[l][0], dpre.data(), in, 4 * H, in_dim);
            if (t > 0)
                outer_acc(d_lstm[l][1], dpre.data(),
                          &lay.hidden[static_cast<size_t>(t - 1) * H], 4 * H, H);
            for (int j = 0; j < 4 * H; ++j) d_lstm[l][2][j] += dpre[j];

            matvec_t_acc(state.lstm[l].w_in.data(), dpre.data(),
                         &dx_below[static_cast<size_t>(t) * in_dim], 4 * H, in_dim);
            std::fill(dh_rec.begin(), dh_rec.end(), S(0));
            if (t > 0)
                matvec_t_acc(state.lstm[l].w_rec.data(), dpre.data(), dh_rec.data(), 4 * H, H);
        }
        dh_out = dx_below;  // becomes the layer below's output gradient
    }

    // dh_out now holds the gradient wrt the (dropped) fused features.
    for (int t = 0; t < L; ++t) {
        const S* fused = &ws.fused[static_cast<size_t>(t) * F];
        const S* mask = &ws.fc_mask[static_cast<size_t>(t) * F];
        const S* x = &ws.x_scaled[static_cast<size_t>(t) * D];
        std::vector<S> da(F);
        for (int j = 0; j < F; ++j) {
            const S dfused = dh_out[static_cast<size_t>(t) * F + j] * mask[j];
            da[j] = dfused * (S(1) - fused[j] * fused[j]);
            d_fusion_b[j] += da[j];
        }
        outer_acc(d_fusion_w, da.data(), x, F, D);
    }
}

}  // namespace detail

// Output: {P(stable), P(slip)}; sums to 1.
template <typename S>
std::array<double, 2> forward(ModelStateT<S>& state, std::span<const float> features,
                              bool training) {
    detail::Workspace<S> ws;
    detail::forward_sample(state, features, training, ws);
    return ws.probs;
}

template <typename S>
std::array<double, 2> forward(const ModelStateT<S>& state, std::span<const float> features) {
    detail::Workspace<S> ws;
    detail::forward_sample(const_cast<ModelStateT<S>&>(state), features, false, ws);
    return ws.probs;
}

struct Prediction {
    Label label;
    double p_slip;
};

// SLIP iff P(slip) >= 0.5; an exact tie resolves to SLIP (the safe verdict
// for a grasp controller).
template <typename S>
Prediction predict_label(const ModelStateT<S>& state, std::span<const float> features) {
    const auto probs = forward(state, features);
    return {probs[1] >= 0.5 ? Label::SLIP : Label::STABLE, probs[1]};
}

// Mean cross-entropy over the batch plus accumulated gradients. Returns the
// loss; per-sample probabilities are appended to `probs_out` when given.
template <typename S>
double forward_backward(ModelStateT<S>& state, const std::vector<std::span<const float>>& batch,
                        const std::vector<int>& label_classes, GradientsT<S>& grads, bool training,
                        std::vector<std::array<double, 2>>* probs_out = nullptr) {
    if (batch.size() != label_classes.size())
        throw ShapeMismatch("batch and label counts differ");
    if (batch.empty()) throw ShapeMismatch("empty batch");
    const double w = 1.0 / static_cast<double>(batch.size());
    double loss = 0;
    detail::Workspace<S> ws;
    for (size_t i = 0; i < batch.size(); ++i) {
        detail::forward_sample(state, batch[i], training, ws);
        loss += -std::log(std::max(ws.probs[label_classes[i]], 1e-12)) * w;
        detail::backward_sample(state, ws, label_classes[i], w, grads);
        if (probs_out) probs_out->push_back(ws.probs);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic, version, JSON header (config + caller
// metadata + dropout rng state), named little-endian f32 arrays, SHA-256.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'S', 'L', 'P', 'F', 'C', 'K', 'P', '1'};

inline void save_checkpoint(const ModelState& state, const nlohmann::json& meta,
                            const std::filesystem::path& path) {
    nlohmann::json header;
    header["config"] = {{"input_dim", state.config.input_dim},
                        {"fused_dim", state.config.fused_dim},
                        {"lstm_layers", state.config.lstm_layers},
                        {"lstm_units", state.config.lstm_units},
                        {"num_classes", state.config.num_classes},
                        {"fc_dropout_keep", state.config.fc_dropout_keep},
                        {"lstm_dropout_keep", state.config.lstm_dropout_keep},
                        {"seq_len", state.config.seq_len},
                        {"input_scale", state.config.input_scale}};
    header["dropout_seed"] = state.dropout_seed;
    header["dropout_state"] = state.dropout_state;
    header["meta"] = meta;

    auto& mutable_state = const_cast<ModelState&>(state);
    const auto registry = param_registry(mutable_state);
    header["arrays"] = nlohmann::json::array();
    for (const auto& p : registry)
        header["arrays"].push_back({{"name", p.name}, {"count", p.values->size()}});

    const std::string header_str = header.dump();
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), kCheckpointMagic, kCheckpointMagic + 8);
    const uint32_t hlen = static_cast<uint32_t>(header_str.size());
    buf.insert(buf.end(), reinterpret_cast<const uint8_t*>(&hlen),
               reinterpret_cast<const uint8_t*>(&hlen) + 4);
    buf.insert(buf.end(), header_str.begin(), header_str.end());
    for (const auto& p : registry) {
        const auto* bytes = reinterpret_cast<const uint8_t*>(p.values->data());
        buf.insert(buf.end(), bytes, bytes + p.values->size() * sizeof(float));
    }
    Sha256 sha;
    sha.update(buf.data(), buf.size());
    const auto digest = sha.finish();
    buf.insert(buf.end(), digest.begin(), digest.end());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint: " + path.string());
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("short write: " + path.string());
}

struct LoadedCheckpoint {
    ModelState state;
    nlohmann::json meta;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path.string());
    std::vector<uint8_t> buf(std::istreambuf_iterator<char>(f), {});
    if (buf.size() < 44 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
        throw CorruptCheckpoint("bad magic in " + path.string());

    Sha256 sha;
    sha.update(buf.data(), buf.size() - 32);
    const auto digest = sha.finish();
    if (std::memcmp(digest.data(), buf.data() + buf.size() - 32, 32) != 0)
        throw CorruptCheckpoint("checksum mismatch in " + path.string());

    uint32_t hlen = 0;
    std::memcpy(&hlen, buf.data() + 8, 4);
    if (12 + static_cast<size_t>(hlen) + 32 > buf.size())
        throw CorruptCheckpoint("truncated header in " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.begin() + 12, buf.begin() + 12 + hlen);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint(std::string("bad header json: ") + e.what());
    }

    LoadedCheckpoint out;
    const auto& cj = header.at("config");
    out.state.config.input_dim = cj.at("input_dim").get<int>();
    out.state.config.fused_dim = cj.at("fused_dim").get<int>();
    out.state.config.lstm_layers = cj.at("lstm_layers").get<int>();
    out.state.config.lstm_units = cj.at("lstm_units").get<int>();
    out.state.config.num_classes = cj.at("num_classes").get<int>();
    out.state.config.fc_dropout_keep = cj.at("fc_dropout_keep").get<double>();
    out.state.config.lstm_dropout_keep = cj.at("lstm_dropout_keep").get<double>();
    out.state.config.seq_len = cj.at("seq_len").get<int>();
    out.state.config.input_scale = cj.at("input_scale").get<double>();
    out.state.dropout_seed = header.at("dropout_seed").get<uint64_t>();
    out.state.dropout_state = header.at("dropout_state").get<uint64_t>();
    out.meta = header.value("meta", nlohmann::json::object());

    // Allocate shapes from config, then require the stored arrays to match.
    ModelState shaped = init_model<float>(out.state.config, 0);
    out.state.fusion_w.resize(shaped.fusion_w.size());
    out.state.fusion_b.resize(shaped.fusion_b.size());
    out.state.lstm.resize(shaped.lstm.size());
    for (size_t l = 0; l < shaped.lstm.size(); ++l) {
        out.state.lstm[l].w_in.resize(shaped.lstm[l].w_in.size());
        out.state.lstm[l].w_rec.resize(shaped.lstm[l].w_rec.size());
        out.state.lstm[l].bias.resize(shaped.lstm[l].bias.size());
    }
    out.state.cls_w.resize(shaped.cls_w.size());
    out.state.cls_b.resize(shaped.cls_b.size());

    const auto registry = param_registry(out.state);
    size_t pos = 12 + hlen;
    const auto& arrays = header.at("arrays");
    if (arrays.size() != registry.size())
        throw CorruptCheckpoint("array count mismatch in " + path.string());
    for (size_t i = 0; i < registry.size(); ++i) {
        const std::string name = arrays[i].at("name").get<std::string>();
        const size_t count = arrays[i].at("count").get<size_t>();
        if (name != registry[i].name || count != registry[i].values->size())
            throw CorruptCheckpoint("array " + name + " does not match model shape");
        const size_t bytes = count * sizeof(float);
        if (pos + bytes + 32 > buf.size())
            throw CorruptCheckpoint("truncated arrays in " + path.string());
        std::memcpy(registry[i].values->data(), buf.data() + pos, bytes);
        pos += bytes;
    }
    return out;
}

}  // namespace slipfuse
