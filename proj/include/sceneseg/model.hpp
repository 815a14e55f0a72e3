#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sceneseg/core.hpp"
#include "sceneseg/decode.hpp"
#include "sceneseg/errors.hpp"
#include "sceneseg/prng.hpp"
#include "sceneseg/tensor.hpp"

// Desk-scale multi-modal segmentation network.
//
// Forward path per video:
//   1. frame and audio features are concatenated and reweighted per channel
//      by a squeeze-excitation gate (se_fusion),
//   2. the gated features attend over the text tokens with multi-head cross
//      attention plus a projected residual of the query side
//      (cross_attention_fusion),
//   3. a 1x1 projection lifts the fused features to the working width and a
//      stack of residual dilated temporal convolution stages refines them
//      (mstcn_forward); stage 1 runs dual dilation branches per layer,
//      later stages a single branch,
//   4. per-frame label logits are read from the hidden states, while boundary
//      and offset heads read from their temporal differences
//      (temporal_difference, heads_forward).
//
// Everything runs in plain double matrices; sizes are small enough that a
// full forward over a corpus takes well under a second.

namespace sceneseg {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class FusionMode { single, dual };

struct ModelConfig {
    int frame_dim = 16;
    int audio_dim = 8;
    int text_dim = 12;
    int channels = 64;
    int stages = 2;
    int layers = 4; // per stage
    int se_reduction = 4;
    int attn_dim = 16;
    int attn_heads = 4;
    int num_classes = 82;
    double fps = 2.0;
    FusionMode fusion = FusionMode::single;
    double init_scale = 0.5;

    int fused_dim() const { return frame_dim + audio_dim; }
    int head_dim() const { return attn_dim / attn_heads; }
    double half_period() const { return 0.5 / fps; }
};

inline void check_model_config(const ModelConfig& c) {
    if (c.frame_dim <= 0 || c.audio_dim <= 0 || c.text_dim <= 0 || c.channels <= 0 || c.num_classes <= 0)
        throw ValidationError("model config: dimensions must be positive");
    if (c.stages < 1 || c.layers < 1) throw ValidationError("model config: need at least one stage and layer");
    if (c.se_reduction < 1 || c.fused_dim() % c.se_reduction != 0)
        throw ValidationError("model config: se_reduction must divide the fused width");
    if (c.attn_heads < 1 || c.attn_dim % c.attn_heads != 0)
        throw ValidationError("model config: attn_heads must divide attn_dim");
    if (!(c.fps > 0.0)) throw ValidationError("model config: fps must be positive");
    if (!(c.init_scale > 0.0)) throw ValidationError("model config: init_scale must be positive");
}

inline json model_config_to_json(const ModelConfig& c) {
    json j;
    j["schema_version"] = 1;
    j["frame_dim"] = c.frame_dim;
    j["audio_dim"] = c.audio_dim;
    j["text_dim"] = c.text_dim;
    j["channels"] = c.channels;
    j["stages"] = c.stages;
    j["layers"] = c.layers;
    j["se_reduction"] = c.se_reduction;
    j["attn_dim"] = c.attn_dim;
    j["attn_heads"] = c.attn_heads;
    j["num_classes"] = c.num_classes;
    j["fps"] = c.fps;
    j["fusion"] = c.fusion == FusionMode::dual ? "dual" : "single";
    j["init_scale"] = c.init_scale;
    return j;
}

inline ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    try {
        if (j.at("schema_version").get<int>() != 1) throw ParseError("model config: unsupported schema_version");
        c.frame_dim = j.at("frame_dim").get<int>();
        c.audio_dim = j.at("audio_dim").get<int>();
        c.text_dim = j.at("text_dim").get<int>();
        c.channels = j.at("channels").get<int>();
        c.stages = j.at("stages").get<int>();
        c.layers = j.at("layers").get<int>();
        c.se_reduction = j.at("se_reduction").get<int>();
        c.attn_dim = j.at("attn_dim").get<int>();
        c.attn_heads = j.at("attn_heads").get<int>();
        c.num_classes = j.at("num_classes").get<int>();
        c.fps = j.at("fps").get<double>();
        const std::string mode = j.at("fusion").get<std::string>();
        if (mode == "single")
            c.fusion = FusionMode::single;
        else if (mode == "dual")
            c.fusion = FusionMode::dual;
        else
            throw ParseError("model config: unknown fusion mode '" + mode + "'");
        c.init_scale = j.at("init_scale").get<double>();
    } catch (const ParseError&) {
        throw;
    } catch (const json::exception& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    check_model_config(c);
    return c;
}

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

struct FeatureBundle {
    std::string video_id;
    double fps = 2.0;
    double duration_s = 0.0;
    Mat frame; // frames x frame_dim
    Mat audio; // frames x audio_dim
    Mat text;  // tokens x text_dim
};

inline void check_feature_bundle(const FeatureBundle& b, const ModelConfig& c) {
    if (b.fps != c.fps)
        throw ValidationError("features '" + b.video_id + "': fps differs from the model config");
    const int t = frame_count(b.duration_s, b.fps);
    if (b.frame.rows != t || b.audio.rows != t)
        throw ValidationError("features '" + b.video_id + "': expected " + std::to_string(t) + " frames");
    if (b.frame.cols != c.frame_dim || b.audio.cols != c.audio_dim || b.text.cols != c.text_dim)
        throw ValidationError("features '" + b.video_id + "': width mismatch with the model config");
    if (b.text.rows < 1) throw ValidationError("features '" + b.video_id + "': need at least one text token");
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

struct SeWeights {
    Mat w1, b1; // fused -> fused / reduction
    Mat w2, b2; // back up to fused
};

struct AttnWeights {
    Mat wq, bq;
    Mat wk, bk;
    Mat wv, bv;
    Mat wo, bo;
};

struct LayerWeights {
    std::array<Mat, 3> ka; // dilated branch, taps at -d, 0, +d
    Mat ba;
    bool has_dual = false;
    std::array<Mat, 3> kb; // second branch, stage 1 only
    Mat bb;
    Mat fuse, fuse_b; // 1x1 after the activation
};

struct StageWeights {
    std::vector<LayerWeights> layers;
};

struct HeadWeights {
    Mat label_w, label_b;       // hidden -> classes, applied to h
    Mat boundary_w, boundary_b; // hidden -> 1, applied to the temporal difference
    Mat offset_w, offset_b;     // hidden -> 1, applied to the temporal difference
};

struct ModelWeights {
    SeWeights se;
    AttnWeights attn;
    std::optional<AttnWeights> attn_rev; // dual fusion only
    Mat in_w, in_b;                      // fused attention output -> channels
    std::vector<StageWeights> stages;
    HeadWeights heads;
};

// Visits every tensor in a fixed, documented order. The order is part of the
// reproducibility contract: weight initialization and the directory layout
// both follow it.
inline void for_each_tensor(ModelWeights& w, const std::function<void(const std::string&, Mat&)>& fn) {
    fn("se.w1", w.se.w1);
    fn("se.b1", w.se.b1);
    fn("se.w2", w.se.w2);
    fn("se.b2", w.se.b2);
    auto attn = [&](const std::string& prefix, AttnWeights& a) {
        fn(prefix + ".wq", a.wq);
        fn(prefix + ".bq", a.bq);
        fn(prefix + ".wk", a.wk);
        fn(prefix + ".bk", a.bk);
        fn(prefix + ".wv", a.wv);
        fn(prefix + ".bv", a.bv);
        fn(prefix + ".wo", a.wo);
        fn(prefix + ".bo", a.bo);
    };
    attn("attn", w.attn);
    if (w.attn_rev) attn("attn_rev", *w.attn_rev);
    fn("in.w", w.in_w);
    fn("in.b", w.in_b);
    for (std::size_t s = 0; s < w.stages.size(); ++s) {
        for (std::size_t l = 0; l < w.stages[s].layers.size(); ++l) {
            LayerWeights& lw = w.stages[s].layers[l];
            const std::string p = "stage" + std::to_string(s) + ".layer" + std::to_string(l);
            for (int j = 0; j < 3; ++j) fn(p + ".ka" + std::to_string(j), lw.ka[static_cast<std::size_t>(j)]);
            fn(p + ".ba", lw.ba);
            if (lw.has_dual) {
                for (int j = 0; j < 3; ++j) fn(p + ".kb" + std::to_string(j), lw.kb[static_cast<std::size_t>(j)]);
                fn(p + ".bb", lw.bb);
            }
            fn(p + ".fuse", lw.fuse);
            fn(p + ".fuse_b", lw.fuse_b);
        }
    }
    fn("heads.label_w", w.heads.label_w);
    fn("heads.label_b", w.heads.label_b);
    fn("heads.boundary_w", w.heads.boundary_w);
    fn("heads.boundary_b", w.heads.boundary_b);
    fn("heads.offset_w", w.heads.offset_w);
    fn("heads.offset_b", w.heads.offset_b);
}

// Allocates all tensors with the shapes demanded by the config. Values are
// zero; call init_weights for a seeded random start.
inline ModelWeights make_weights(const ModelConfig& c) {
    check_model_config(c);
    ModelWeights w;
    const int f = c.fused_dim();
    const int r = f / c.se_reduction;
    w.se.w1 = Mat(f, r);
    w.se.b1 = Mat(1, r);
    w.se.w2 = Mat(r, f);
    w.se.b2 = Mat(1, f);

    auto make_attn = [&](int query_dim, int kv_dim) {
        AttnWeights a;
        a.wq = Mat(query_dim, c.attn_dim);
        a.bq = Mat(1, c.attn_dim);
        a.wk = Mat(kv_dim, c.attn_dim);
        a.bk = Mat(1, c.attn_dim);
        a.wv = Mat(kv_dim, c.attn_dim);
        a.bv = Mat(1, c.attn_dim);
        a.wo = Mat(c.attn_dim, c.attn_dim);
        a.bo = Mat(1, c.attn_dim);
        return a;
    };
    w.attn = make_attn(f, c.text_dim);
    if (c.fusion == FusionMode::dual) w.attn_rev = make_attn(c.text_dim, f);

    w.in_w = Mat(f + c.attn_dim, c.channels);
    w.in_b = Mat(1, c.channels);

    w.stages.resize(static_cast<std::size_t>(c.stages));
    for (int s = 0; s < c.stages; ++s) {
        auto& stage = w.stages[static_cast<std::size_t>(s)];
        stage.layers.resize(static_cast<std::size_t>(c.layers));
        for (int l = 0; l < c.layers; ++l) {
            LayerWeights& lw = stage.layers[static_cast<std::size_t>(l)];
            for (auto& k : lw.ka) k = Mat(c.channels, c.channels);
            lw.ba = Mat(1, c.channels);
            lw.has_dual = (s == 0);
            if (lw.has_dual) {
                for (auto& k : lw.kb) k = Mat(c.channels, c.channels);
                lw.bb = Mat(1, c.channels);
            }
            lw.fuse = Mat(c.channels, c.channels);
            lw.fuse_b = Mat(1, c.channels);
        }
    }

    w.heads.label_w = Mat(c.channels, c.num_classes);
    w.heads.label_b = Mat(1, c.num_classes);
    w.heads.boundary_w = Mat(c.channels, 1);
    w.heads.boundary_b = Mat(1, 1);
    w.heads.offset_w = Mat(c.channels, 1);
    w.heads.offset_b = Mat(1, 1);
    return w;
}

// Seeded initialization: single-row tensors are biases and start at zero;
// everything else draws uniformly from ±init_scale / sqrt(fan-in), with an
// independent stream per tensor so the layout of earlier tensors never
// shifts the values of later ones.
inline ModelWeights init_weights(const ModelConfig& c, std::uint64_t seed) {
    ModelWeights w = make_weights(c);
    std::uint64_t ordinal = 0;
    for_each_tensor(w, [&](const std::string&, Mat& m) {
        const std::uint64_t index = ordinal++;
        if (m.rows == 1) return;
        Rng rng(seed, stream_purpose::kWeights, index);
        const double bound = c.init_scale / std::sqrt(static_cast<double>(m.rows));
        for (double& x : m.v) x = rng.uniform(-bound, bound);
    });
    return w;
}

// ---------------------------------------------------------------------------
// Weight directory I/O
// ---------------------------------------------------------------------------
//
// A weight directory holds config.json, manifest.json and one binary tensor
// container per tensor, named after the tensor with dots replaced by
// underscores.

inline std::string tensor_file_name(const std::string& tensor_name) {
    std::string s = tensor_name;
    std::replace(s.begin(), s.end(), '.', '_');
    return s + ".bin";
}

inline void save_weights(const std::string& dir, const ModelConfig& c, ModelWeights& w) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    nlohmann::json tensors = nlohmann::json::array();
    for_each_tensor(w, [&](const std::string& name, Mat& m) {
        const std::string file = tensor_file_name(name);
        write_container_file(dir + "/" + file, mat_to_container(m, "tensor"));
        nlohmann::json jt;
        jt["name"] = name;
        jt["file"] = file;
        jt["rows"] = m.rows;
        jt["cols"] = m.cols;
        tensors.push_back(jt);
    });
    manifest["tensors"] = tensors;
    std::ofstream mf(dir + "/manifest.json", std::ios::binary | std::ios::trunc);
    if (!mf) throw IoError("cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
    std::ofstream cf(dir + "/config.json", std::ios::binary | std::ios::trunc);
    if (!cf) throw IoError("cannot write " + dir + "/config.json");
    cf << model_config_to_json(c).dump(2) << "\n";
}

struct LoadedModel {
    ModelConfig config;
    ModelWeights weights;
};

inline LoadedModel load_weights(const std::string& dir) {
    std::ifstream cf(dir + "/config.json", std::ios::binary);
    if (!cf) throw IoError("cannot open " + dir + "/config.json");
    nlohmann::json jc;
    try {
        cf >> jc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(dir + "/config.json: " + e.what());
    }
    LoadedModel m;
    m.config = model_config_from_json(jc);
    m.weights = make_weights(m.config);

    std::ifstream mf(dir + "/manifest.json", std::ios::binary);
    if (!mf) throw IoError("cannot open " + dir + "/manifest.json");
    nlohmann::json jm;
    try {
        mf >> jm;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(dir + "/manifest.json: " + e.what());
    }
    std::map<std::string, std::string> files;
    try {
        for (const auto& jt : jm.at("tensors")) files[jt.at("name").get<std::string>()] = jt.at("file").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(dir + "/manifest.json: " + e.what());
    }

    for_each_tensor(m.weights, [&](const std::string& name, Mat& mat) {
        auto it = files.find(name);
        if (it == files.end()) throw ParseError(dir + ": manifest is missing tensor '" + name + "'");
        const Container c = read_container_file(dir + "/" + it->second);
        if (static_cast<int>(c.rows) != mat.rows || static_cast<int>(c.cols) != mat.cols)
            throw ValidationError(dir + ": tensor '" + name + "' has the wrong shape");
        mat = container_to_mat(c);
    });
    return m;
}

// ---------------------------------------------------------------------------
// Forward building blocks
// ---------------------------------------------------------------------------

namespace nn {

inline Mat relu(Mat m) {
    for (double& x : m.v) x = x > 0.0 ? x : 0.0;
    return m;
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

// y = x * w + b, with b broadcast over rows.
inline Mat linear(const Mat& x, const Mat& w, const Mat& b) {
    Mat y = matmul(x, w);
    for (int i = 0; i < y.rows; ++i)
        for (int j = 0; j < y.cols; ++j) y.at(i, j) += b.at(0, j);
    return y;
}

// Sinusoidal position encoding, added in place. Positions are row indices.
inline void add_position_encoding(Mat& x) {
    const int d = x.cols;
    for (int pos = 0; pos < x.rows; ++pos) {
        for (int i = 0; i < d; ++i) {
            const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            x.at(pos, i) += (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
}

// Row-wise softmax, stabilized by the row maximum.
inline void softmax_rows(Mat& m) {
    for (int i = 0; i < m.rows; ++i) {
        double* row = m.row(i);
        double mx = row[0];
        for (int j = 1; j < m.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < m.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < m.cols; ++j) row[j] /= sum;
    }
}

// Dilated temporal convolution with kernel 3, symmetric zero padding: taps
// read d frames back, the frame itself, and d frames ahead.
inline Mat conv_dilated(const Mat& h, const std::array<Mat, 3>& taps, const Mat& bias, int dilation) {
    Mat out(h.rows, taps[0].cols);
    for (int t = 0; t < h.rows; ++t)
        for (int j = 0; j < out.cols; ++j) out.at(t, j) = bias.at(0, j);
    for (int j = 0; j < 3; ++j) {
        const int shift = (j - 1) * dilation;
        const Mat& k = taps[static_cast<std::size_t>(j)];
        for (int t = 0; t < h.rows; ++t) {
            const int src = t + shift;
            if (src < 0 || src >= h.rows) continue;
            const double* hrow = h.row(src);
            double* orow = out.row(t);
            for (int m = 0; m < h.cols; ++m) {
                const double v = hrow[m];
                if (v == 0.0) continue;
                const double* krow = k.row(m);
                for (int c = 0; c < out.cols; ++c) orow[c] += v * krow[c];
            }
        }
    }
    return out;
}

} // namespace nn

// Squeeze-excitation gate over the concatenated frame and audio channels:
// squeeze is the per-channel mean over time, excitation a two-layer
// bottleneck ending in a sigmoid, and the gate rescales each channel.
inline Mat se_fusion(const Mat& frame, const Mat& audio, const SeWeights& w) {
    if (frame.rows != audio.rows) throw ValidationError("se_fusion: frame and audio length mismatch");
    Mat x(frame.rows, frame.cols + audio.cols);
    for (int t = 0; t < x.rows; ++t) {
        for (int j = 0; j < frame.cols; ++j) x.at(t, j) = frame.at(t, j);
        for (int j = 0; j < audio.cols; ++j) x.at(t, frame.cols + j) = audio.at(t, j);
    }

    Mat squeeze(1, x.cols);
    for (int j = 0; j < x.cols; ++j) {
        double sum = 0.0;
        for (int t = 0; t < x.rows; ++t) sum += x.at(t, j);
        squeeze.at(0, j) = sum / static_cast<double>(x.rows);
    }
    Mat gate = nn::linear(nn::relu(nn::linear(squeeze, w.w1, w.b1)), w.w2, w.b2);
    for (double& g : gate.v) g = nn::sigmoid(g);

    for (int t = 0; t < x.rows; ++t)
        for (int j = 0; j < x.cols; ++j) x.at(t, j) *= gate.at(0, j);
    return x;
}

// Multi-head scaled dot-product attention of `query_in` over `kv_in`, with
// sinusoidal position encodings added to queries and keys (addressing only;
// values come from the raw input) and attention scores scaled by
// 1/sqrt(head width). Output rows follow the query side.
inline Mat multi_head_attention(const Mat& query_in, const Mat& kv_in, const AttnWeights& w, int heads) {
    Mat qx = query_in;
    Mat kx = kv_in;
    nn::add_position_encoding(qx);
    nn::add_position_encoding(kx);

    const Mat q = nn::linear(qx, w.wq, w.bq);
    const Mat k = nn::linear(kx, w.wk, w.bk);
    const Mat v = nn::linear(kv_in, w.wv, w.bv);

    const int hd = q.cols / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    Mat concat(q.rows, q.cols);
    for (int h = 0; h < heads; ++h) {
        const int c0 = h * hd;
        Mat scores(q.rows, k.rows);
        for (int i = 0; i < q.rows; ++i)
            for (int j = 0; j < k.rows; ++j) {
                double dot = 0.0;
                for (int m = 0; m < hd; ++m) dot += q.at(i, c0 + m) * k.at(j, c0 + m);
                scores.at(i, j) = dot * scale;
            }
        nn::softmax_rows(scores);
        for (int i = 0; i < q.rows; ++i)
            for (int m = 0; m < hd; ++m) {
                double acc = 0.0;
                for (int j = 0; j < k.rows; ++j) acc += scores.at(i, j) * v.at(j, c0 + m);
                concat.at(i, c0 + m) = acc;
            }
    }
    return nn::linear(concat, w.wo, w.bo);
}

// Cross-attention fusion of the gated frame/audio features with the text
// tokens: the attended text block is concatenated onto the input channels,
// so the gated features pass through untouched. In dual mode a second
// attention runs in the reverse direction (text attending over the frames);
// its output is mean-pooled over tokens and broadcast onto the attended
// block before concatenation.
inline Mat cross_attention_fusion(const Mat& fused, const Mat& text, const ModelWeights& w,
                                  const ModelConfig& c) {
    Mat att = multi_head_attention(fused, text, w.attn, c.attn_heads);
    if (c.fusion == FusionMode::dual) {
        if (!w.attn_rev) throw ValidationError("dual fusion requested but reverse attention weights are absent");
        const Mat rev = multi_head_attention(text, fused, *w.attn_rev, c.attn_heads);
        std::vector<double> pooled(static_cast<std::size_t>(rev.cols), 0.0);
        for (int i = 0; i < rev.rows; ++i)
            for (int j = 0; j < rev.cols; ++j) pooled[static_cast<std::size_t>(j)] += rev.at(i, j);
        for (double& p : pooled) p /= static_cast<double>(rev.rows);
        for (int i = 0; i < att.rows; ++i)
            for (int j = 0; j < att.cols; ++j) att.at(i, j) += pooled[static_cast<std::size_t>(j)];
    }
    Mat out(fused.rows, fused.cols + att.cols);
    for (int i = 0; i < out.rows; ++i) {
        std::copy(fused.row(i), fused.row(i) + fused.cols, out.row(i));
        std::copy(att.row(i), att.row(i) + att.cols, out.row(i) + fused.cols);
    }
    return out;
}

// One residual temporal stage. Layers use kernel-3 dilated convolutions with
// symmetric padding; layer l (1-based) dilates by 2^(l-1) on the main branch
// and, in dual-branch stages, 2^(L-l) on the second branch. The branch sum
// passes through a ReLU and a 1x1 projection before being added back.
inline Mat stage_forward(const Mat& input, const StageWeights& stage) {
    Mat h = input;
    const int layer_count = static_cast<int>(stage.layers.size());
    for (int l = 1; l <= layer_count; ++l) {
        const LayerWeights& lw = stage.layers[static_cast<std::size_t>(l - 1)];
        const int dil_a = 1 << (l - 1);
        Mat z = nn::conv_dilated(h, lw.ka, lw.ba, dil_a);
        if (lw.has_dual) {
            const int dil_b = 1 << (layer_count - l);
            const Mat zb = nn::conv_dilated(h, lw.kb, lw.bb, dil_b);
            for (std::size_t i = 0; i < z.v.size(); ++i) z.v[i] += zb.v[i];
        }
        z = nn::relu(std::move(z));
        const Mat y = nn::linear(z, lw.fuse, lw.fuse_b);
        for (std::size_t i = 0; i < h.v.size(); ++i) h.v[i] += y.v[i];
    }
    return h;
}

// Runs all stages, returning each stage's output (deep supervision reads all
// of them; the last one drives predictions).
inline std::vector<Mat> mstcn_forward(const Mat& x0, const ModelWeights& w) {
    std::vector<Mat> outs;
    Mat h = x0;
    for (const auto& stage : w.stages) {
        h = stage_forward(h, stage);
        outs.push_back(h);
    }
    return outs;
}

// d[0] = 0, d[k] = h[k] - h[k-1]. Boundary-sensitive heads read this signal.
inline Mat temporal_difference(const Mat& h) {
    Mat d(h.rows, h.cols);
    for (int t = 1; t < h.rows; ++t)
        for (int j = 0; j < h.cols; ++j) d.at(t, j) = h.at(t, j) - h.at(t - 1, j);
    return d;
}

struct HeadOutputs {
    Mat label_logits;                  // frames x classes, from h
    std::vector<double> boundary_logit; // from d
    std::vector<double> offset_raw;     // from d, before tanh scaling
    std::vector<double> offset_s;       // tanh(offset_raw) * half frame period
};

inline HeadOutputs heads_forward(const Mat& h, const Mat& d, const HeadWeights& w, const ModelConfig& c) {
    HeadOutputs out;
    out.label_logits = nn::linear(h, w.label_w, w.label_b);
    const Mat b = nn::linear(d, w.boundary_w, w.boundary_b);
    const Mat o = nn::linear(d, w.offset_w, w.offset_b);
    out.boundary_logit.resize(static_cast<std::size_t>(h.rows));
    out.offset_raw.resize(static_cast<std::size_t>(h.rows));
    out.offset_s.resize(static_cast<std::size_t>(h.rows));
    for (int t = 0; t < h.rows; ++t) {
        out.boundary_logit[static_cast<std::size_t>(t)] = b.at(t, 0);
        out.offset_raw[static_cast<std::size_t>(t)] = o.at(t, 0);
        out.offset_s[static_cast<std::size_t>(t)] = std::tanh(o.at(t, 0)) * c.half_period();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full forward
// ---------------------------------------------------------------------------

struct StageTrace {
    Mat h;
    Mat d;
    HeadOutputs heads;
};

struct ForwardTrace {
    Mat fused;    // SE output
    Mat attended; // cross-attention output
    Mat x0;       // lifted to working width
    std::vector<StageTrace> stages;
    FrameOutputs outputs; // last stage, probabilities
};

inline ForwardTrace model_forward(const FeatureBundle& b, const ModelConfig& c, const ModelWeights& w) {
    check_feature_bundle(b, c);
    ForwardTrace trace;
    trace.fused = se_fusion(b.frame, b.audio, w.se);
    trace.attended = cross_attention_fusion(trace.fused, b.text, w, c);
    trace.x0 = nn::linear(trace.attended, w.in_w, w.in_b);

    const std::vector<Mat> hs = mstcn_forward(trace.x0, w);
    for (const Mat& h : hs) {
        StageTrace st;
        st.h = h;
        st.d = temporal_difference(h);
        st.heads = heads_forward(st.h, st.d, w.heads, c);
        trace.stages.push_back(std::move(st));
    }

    const StageTrace& last = trace.stages.back();
    FrameOutputs out;
    out.video_id = b.video_id;
    out.fps = b.fps;
    out.duration_s = b.duration_s;
    out.label_probs = Mat(last.h.rows, c.num_classes);
    for (int t = 0; t < last.h.rows; ++t)
        for (int j = 0; j < c.num_classes; ++j)
            out.label_probs.at(t, j) = nn::sigmoid(last.heads.label_logits.at(t, j));
    out.boundary_prob.resize(static_cast<std::size_t>(last.h.rows));
    for (int t = 0; t < last.h.rows; ++t)
        out.boundary_prob[static_cast<std::size_t>(t)] = nn::sigmoid(last.heads.boundary_logit[static_cast<std::size_t>(t)]);
    out.offset_s = last.heads.offset_s;
    trace.outputs = std::move(out);
    return trace;
}

// ---------------------------------------------------------------------------
// Target rasterization
// ---------------------------------------------------------------------------

struct RasterTargets {
    Mat labels;                    // frames x classes, 0/1
    std::vector<double> boundary;  // frames, 0/1
    std::vector<double> offset_s;  // frames; refinement toward the true cut
    std::vector<std::pair<int, int>> scene_frames; // [first, one-past-last) per scene
    std::vector<std::string> warnings;
};

// Paints per-frame training targets from an annotation. Frame k carries the
// labels of the scene containing time k/fps (scene membership is [start,
// end)). Each interior boundary marks its nearest sample (exact halfway ties
// go to the earlier sample) and stores the signed gap to the true cut there.
// Two boundaries landing on one sample keep the first and warn.
inline RasterTargets rasterize_targets(const VideoAnnotation& ann, int num_classes, double fps) {
    const int t = frame_count(ann.duration_s, fps);
    RasterTargets r;
    r.labels = Mat(t, num_classes);
    r.boundary.assign(static_cast<std::size_t>(t), 0.0);
    r.offset_s.assign(static_cast<std::size_t>(t), 0.0);

    int frame = 0;
    for (const Scene& s : ann.scenes) {
        const int first = frame;
        while (frame < t && static_cast<double>(frame) / fps < s.end_s) {
            for (int id : s.labels)
                if (id >= 0 && id < num_classes) r.labels.at(frame, id) = 1.0;
            ++frame;
        }
        r.scene_frames.emplace_back(first, frame);
    }
    // trailing samples (possible only through rounding at the video end)
    for (; frame < t; ++frame)
        for (int id : ann.scenes.back().labels)
            if (id >= 0 && id < num_classes) r.labels.at(frame, id) = 1.0;

    int index = 0;
    for (double b : internal_boundaries(ann)) {
        const int k = std::clamp(static_cast<int>(std::ceil(b * fps - 0.5)), 0, t - 1);
        if (r.boundary[static_cast<std::size_t>(k)] != 0.0) {
            r.warnings.push_back("boundary " + std::to_string(index) + " collides with an earlier one at sample " +
                                 std::to_string(k) + "; kept the earlier");
        } else {
            r.boundary[static_cast<std::size_t>(k)] = 1.0;
            r.offset_s[static_cast<std::size_t>(k)] = b - static_cast<double>(k) / fps;
        }
        ++index;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct VecLoss {
    double value = 0.0;
    std::vector<double> grad;
};

struct MatLoss {
    double value = 0.0;
    Mat grad;
};

namespace nn {

// One binary cross-entropy term on a logit, in the stable softplus form.
// Returns {loss, dloss/dlogit}. pos_weight scales the positive class.
inline std::pair<double, double> bce_term(double z, double t, double pos_weight = 1.0) {
    const double loss = pos_weight * t * softplus(-z) + (1.0 - t) * softplus(z);
    const double s = sigmoid(z);
    const double grad = (1.0 - t) * s - pos_weight * t * (1.0 - s);
    return {loss, grad};
}

} // namespace nn

// Mean binary cross-entropy over the boundary sequence, with an optional
// weight on the (rare) positive samples.
inline VecLoss loss_boundary_bce(const std::vector<double>& logits, const std::vector<double>& targets,
                                 double pos_weight = 1.0) {
    if (logits.size() != targets.size()) throw std::invalid_argument("loss_boundary_bce: length mismatch");
    VecLoss out;
    out.grad.assign(logits.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto [loss, grad] = nn::bce_term(logits[i], targets[i], pos_weight);
        out.value += loss * inv;
        out.grad[i] = grad * inv;
    }
    return out;
}

// Smooth L1 on the offset predictions, restricted to samples where mask is
// nonzero and normalized by the number of such samples. Quadratic within
// beta, linear outside.
inline VecLoss loss_offset_smooth_l1(const std::vector<double>& pred_s, const std::vector<double>& target_s,
                                     const std::vector<double>& mask, double beta = 0.1) {
    if (pred_s.size() != target_s.size() || pred_s.size() != mask.size())
        throw std::invalid_argument("loss_offset_smooth_l1: length mismatch");
    if (!(beta > 0.0)) throw std::invalid_argument("loss_offset_smooth_l1: beta must be positive");
    std::size_t active = 0;
    for (double m : mask)
        if (m != 0.0) ++active;
    VecLoss out;
    out.grad.assign(pred_s.size(), 0.0);
    if (active == 0) return out;
    const double inv = 1.0 / static_cast<double>(active);
    for (std::size_t i = 0; i < pred_s.size(); ++i) {
        if (mask[i] == 0.0) continue;
        const double diff = pred_s[i] - target_s[i];
        const double a = std::abs(diff);
        if (a < beta) {
            out.value += 0.5 * diff * diff / beta * inv;
            out.grad[i] = diff / beta * inv;
        } else {
            out.value += (a - 0.5 * beta) * inv;
            out.grad[i] = (diff > 0.0 ? 1.0 : -1.0) * inv;
        }
    }
    return out;
}

// Plain multi-label BCE, mean over all entries.
inline MatLoss loss_bce_multilabel(const Mat& logits, const Mat& targets) {
    if (!logits.same_shape(targets)) throw std::invalid_argument("loss_bce_multilabel: shape mismatch");
    MatLoss out;
    out.grad = Mat(logits.rows, logits.cols);
    const double inv = 1.0 / static_cast<double>(logits.v.size());
    for (std::size_t i = 0; i < logits.v.size(); ++i) {
        const auto [loss, grad] = nn::bce_term(logits.v[i], targets.v[i]);
        out.value += loss * inv;
        out.grad.v[i] = grad * inv;
    }
    return out;
}

struct AslOptions {
    double gamma_pos = 0.0;
    double gamma_neg = 4.0;
    double margin = 0.05; // probability shift applied to negatives
};

// Asymmetric loss for multi-label classification. Positives are focal-scaled
// by (1-p)^gamma_pos; negatives shift the probability down by the margin
// before focal scaling with gamma_neg, which silences easy negatives. With
// both gammas and the margin at zero this reduces exactly to
// loss_bce_multilabel (same arithmetic path, bit for bit).
inline MatLoss loss_asl(const Mat& logits, const Mat& targets, const AslOptions& opt = {}) {
    if (!logits.same_shape(targets)) throw std::invalid_argument("loss_asl: shape mismatch");
    if (opt.gamma_pos == 0.0 && opt.gamma_neg == 0.0 && opt.margin == 0.0)
        return loss_bce_multilabel(logits, targets);

    MatLoss out;
    out.grad = Mat(logits.rows, logits.cols);
    const double inv = 1.0 / static_cast<double>(logits.v.size());
    for (std::size_t i = 0; i < logits.v.size(); ++i) {
        const double z = logits.v[i];
        const double p = nn::sigmoid(z);
        double loss, grad;
        if (targets.v[i] != 0.0) {
            const double log_p = -nn::softplus(-z); // log sigmoid(z)
            const double focus = std::pow(1.0 - p, opt.gamma_pos);
            loss = -focus * log_p;
            grad = opt.gamma_pos * p * focus * log_p - focus * (1.0 - p);
        } else {
            const double pm = std::max(p - opt.margin, 0.0);
            if (pm == 0.0) {
                loss = 0.0;
                grad = 0.0;
            } else {
                double log_1m; // log(1 - pm)
                if (opt.margin == 0.0)
                    log_1m = -nn::softplus(z);
                else
                    log_1m = std::log(1.0 - pm);
                const double focus = std::pow(pm, opt.gamma_neg);
                loss = -focus * log_1m;
                const double dl_dpm = -opt.gamma_neg * (opt.gamma_neg == 0.0 ? 0.0 : std::pow(pm, opt.gamma_neg - 1.0)) * log_1m +
                                      focus / std::max(1.0 - pm, 1e-300);
                grad = dl_dpm * p * (1.0 - p);
            }
        }
        out.value += loss * inv;
        out.grad.v[i] = grad * inv;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Multi-scale label loss
// ---------------------------------------------------------------------------

namespace detail {

// Max-pools logits and targets over row ranges. Remembers, per pooled entry,
// the source row (first maximum) so gradients can be routed back.
struct Pooled {
    Mat logits;
    Mat targets;
    std::vector<std::vector<int>> argmax; // [pooled row][col] -> source row
};

inline Pooled max_pool_rows(const Mat& logits, const Mat& targets,
                            const std::vector<std::pair<int, int>>& ranges) {
    Pooled p;
    int kept = 0;
    for (const auto& [r0, r1] : ranges)
        if (r1 > r0) ++kept;
    p.logits = Mat(kept, logits.cols);
    p.targets = Mat(kept, logits.cols);
    p.argmax.assign(static_cast<std::size_t>(kept), std::vector<int>(static_cast<std::size_t>(logits.cols), 0));
    int row = 0;
    for (const auto& [r0, r1] : ranges) {
        if (r1 <= r0) continue; // a scene too short to own a sample
        for (int c = 0; c < logits.cols; ++c) {
            double best = logits.at(r0, c);
            int best_row = r0;
            double tbest = targets.at(r0, c);
            for (int r = r0 + 1; r < r1; ++r) {
                if (logits.at(r, c) > best) {
                    best = logits.at(r, c);
                    best_row = r;
                }
                tbest = std::max(tbest, targets.at(r, c));
            }
            p.logits.at(row, c) = best;
            p.targets.at(row, c) = tbest;
            p.argmax[static_cast<std::size_t>(row)][static_cast<std::size_t>(c)] = best_row;
        }
        ++row;
    }
    return p;
}

} // namespace detail

struct MultiscaleLoss {
    double frame = 0.0;
    double scene = 0.0;
    double video = 0.0;
    double total = 0.0;
    Mat grad; // with respect to the frame logits
};

// Label loss at three scales, summed with unit weights: per frame, per scene
// (logits max-pooled over each scene's frames) and per video (max-pooled over
// everything). Pooled gradients flow to the frame that held the maximum.
inline MultiscaleLoss loss_multiscale(const Mat& logits, const Mat& targets,
                                      const std::vector<std::pair<int, int>>& scene_frames,
                                      const AslOptions& opt = {}) {
    if (!logits.same_shape(targets)) throw std::invalid_argument("loss_multiscale: shape mismatch");
    MultiscaleLoss out;
    out.grad = Mat(logits.rows, logits.cols);

    const MatLoss frame = loss_asl(logits, targets, opt);
    out.frame = frame.value;
    for (std::size_t i = 0; i < out.grad.v.size(); ++i) out.grad.v[i] += frame.grad.v[i];

    const detail::Pooled scene = detail::max_pool_rows(logits, targets, scene_frames);
    if (scene.logits.rows > 0) {
        const MatLoss sl = loss_asl(scene.logits, scene.targets, opt);
        out.scene = sl.value;
        for (int r = 0; r < scene.logits.rows; ++r)
            for (int c = 0; c < scene.logits.cols; ++c)
                out.grad.at(scene.argmax[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)], c) +=
                    sl.grad.at(r, c);
    }

    const detail::Pooled video = detail::max_pool_rows(logits, targets, {{0, logits.rows}});
    const MatLoss vl = loss_asl(video.logits, video.targets, opt);
    out.video = vl.value;
    for (int c = 0; c < logits.cols; ++c)
        out.grad.at(video.argmax[0][static_cast<std::size_t>(c)], c) += vl.grad.at(0, c);

    out.total = out.frame + out.scene + out.video;
    return out;
}

// ---------------------------------------------------------------------------
// Combined training objective (value only, deep supervision over stages)
// ---------------------------------------------------------------------------

struct ModelLoss {
    double label = 0.0;
    double boundary = 0.0;
    double offset = 0.0;
    double total = 0.0;
};

inline ModelLoss model_loss(const ForwardTrace& trace, const RasterTargets& targets,
                            const AslOptions& asl = {}, double boundary_pos_weight = 1.0) {
    ModelLoss out;
    for (const StageTrace& st : trace.stages) {
        out.label += loss_multiscale(st.heads.label_logits, targets.labels, targets.scene_frames, asl).total;
        out.boundary += loss_boundary_bce(st.heads.boundary_logit, targets.boundary, boundary_pos_weight).value;
        out.offset += loss_offset_smooth_l1(st.heads.offset_s, targets.offset_s, targets.boundary).value;
    }
    out.total = out.label + out.boundary + out.offset;
    return out;
}

// ---------------------------------------------------------------------------
// Head fitting
// ---------------------------------------------------------------------------

struct FitOptions {
    int label_iterations = 60;
    int boundary_iterations = 1500;
    double label_lr = 4.0;
    double boundary_lr = 2.0;
    double momentum = 0.9;
    double boundary_pos_weight = 0.0; // 0: set from the target statistics
    double offset_beta = 0.1;
};

struct FitReport {
    std::vector<double> label_history;
    std::vector<double> boundary_history; // weighted boundary BCE plus offset loss
    double final_label_loss = 0.0;
    double final_boundary_loss = 0.0;
};

// Fits the three heads by full-batch gradient descent with heavy-ball
// momentum, backbone frozen: hidden states and temporal differences are
// computed once and stacked across videos. Labels train with plain BCE,
// boundaries with positive-weighted BCE, offsets with smooth L1 chained
// through the tanh scaling. Losses are means over the stacked frames, so
// long videos weigh proportionally more.
inline FitReport fit_heads(const std::vector<FeatureBundle>& videos,
                           const std::vector<RasterTargets>& targets, const ModelConfig& c,
                           ModelWeights& w, const FitOptions& opt = {}) {
    if (videos.size() != targets.size()) throw std::invalid_argument("fit_heads: videos/targets mismatch");
    if (videos.empty()) throw std::invalid_argument("fit_heads: no videos");

    int total_frames = 0;
    for (const auto& tg : targets) total_frames += tg.labels.rows;

    Mat h_all(total_frames, c.channels);
    Mat d_all(total_frames, c.channels);
    Mat label_t(total_frames, c.num_classes);
    std::vector<double> bnd_t(static_cast<std::size_t>(total_frames));
    std::vector<double> off_t(static_cast<std::size_t>(total_frames));
    double pos = 0.0, neg = 0.0;

    int row = 0;
    for (std::size_t i = 0; i < videos.size(); ++i) {
        ForwardTrace trace = model_forward(videos[i], c, w);
        const Mat& h = trace.stages.back().h;
        const Mat& d = trace.stages.back().d;
        if (h.rows != targets[i].labels.rows)
            throw ValidationError("fit_heads: targets for '" + videos[i].video_id + "' have the wrong length");
        for (int r = 0; r < h.rows; ++r, ++row) {
            std::copy(h.row(r), h.row(r) + c.channels, h_all.row(row));
            std::copy(d.row(r), d.row(r) + c.channels, d_all.row(row));
            std::copy(targets[i].labels.row(r), targets[i].labels.row(r) + c.num_classes, label_t.row(row));
            bnd_t[static_cast<std::size_t>(row)] = targets[i].boundary[static_cast<std::size_t>(r)];
            off_t[static_cast<std::size_t>(row)] = targets[i].offset_s[static_cast<std::size_t>(r)];
            (bnd_t[static_cast<std::size_t>(row)] != 0.0 ? pos : neg) += 1.0;
        }
    }
    const double pos_weight =
        opt.boundary_pos_weight > 0.0 ? opt.boundary_pos_weight : std::max(1.0, neg / std::max(1.0, pos));

    FitReport report;
    const Mat h_all_t = transpose(h_all);
    const Mat d_all_t = transpose(d_all);
    const double amp = c.half_period();
    const double mu = opt.momentum;
    auto step = [mu](Mat& param, Mat& vel, const Mat& grad, double lr) {
        for (std::size_t i = 0; i < param.v.size(); ++i) {
            vel.v[i] = mu * vel.v[i] - lr * grad.v[i];
            param.v[i] += vel.v[i];
        }
    };

    Mat v_label_w(c.channels, c.num_classes), v_label_b(1, c.num_classes);
    for (int iter = 0; iter < opt.label_iterations; ++iter) {
        const Mat logits = nn::linear(h_all, w.heads.label_w, w.heads.label_b);
        const MatLoss ll = loss_bce_multilabel(logits, label_t);
        report.label_history.push_back(ll.value);
        const Mat gw = matmul(h_all_t, ll.grad);
        Mat gb(1, c.num_classes);
        for (int r = 0; r < ll.grad.rows; ++r)
            for (int j = 0; j < c.num_classes; ++j) gb.at(0, j) += ll.grad.at(r, j);
        step(w.heads.label_w, v_label_w, gw, opt.label_lr);
        step(w.heads.label_b, v_label_b, gb, opt.label_lr);
    }

    Mat v_bnd_w(c.channels, 1), v_off_w(c.channels, 1);
    double v_bnd_b = 0.0, v_off_b = 0.0;
    for (int iter = 0; iter < opt.boundary_iterations; ++iter) {
        std::vector<double> zb(static_cast<std::size_t>(total_frames));
        std::vector<double> zo(static_cast<std::size_t>(total_frames));
        std::vector<double> off_pred(static_cast<std::size_t>(total_frames));
        for (int r = 0; r < total_frames; ++r) {
            double sb = w.heads.boundary_b.at(0, 0);
            double so = w.heads.offset_b.at(0, 0);
            const double* drow = d_all.row(r);
            for (int m = 0; m < c.channels; ++m) {
                sb += drow[m] * w.heads.boundary_w.at(m, 0);
                so += drow[m] * w.heads.offset_w.at(m, 0);
            }
            zb[static_cast<std::size_t>(r)] = sb;
            zo[static_cast<std::size_t>(r)] = so;
            off_pred[static_cast<std::size_t>(r)] = std::tanh(so) * amp;
        }
        const VecLoss bl = loss_boundary_bce(zb, bnd_t, pos_weight);
        const VecLoss ol = loss_offset_smooth_l1(off_pred, off_t, bnd_t, opt.offset_beta);
        report.boundary_history.push_back(bl.value + ol.value);

        Mat g_bnd_w(c.channels, 1), g_off_w(c.channels, 1);
        double g_bnd_b = 0.0, g_off_b = 0.0;
        for (int r = 0; r < total_frames; ++r) {
            const double gb = bl.grad[static_cast<std::size_t>(r)];
            const double th = std::tanh(zo[static_cast<std::size_t>(r)]);
            const double go = ol.grad[static_cast<std::size_t>(r)] * amp * (1.0 - th * th);
            if (gb == 0.0 && go == 0.0) continue;
            const double* drow = d_all.row(r);
            for (int m = 0; m < c.channels; ++m) {
                g_bnd_w.at(m, 0) += drow[m] * gb;
                g_off_w.at(m, 0) += drow[m] * go;
            }
            g_bnd_b += gb;
            g_off_b += go;
        }
        step(w.heads.boundary_w, v_bnd_w, g_bnd_w, opt.boundary_lr);
        step(w.heads.offset_w, v_off_w, g_off_w, opt.boundary_lr);
        v_bnd_b = mu * v_bnd_b - opt.boundary_lr * g_bnd_b;
        v_off_b = mu * v_off_b - opt.boundary_lr * g_off_b;
        w.heads.boundary_b.at(0, 0) += v_bnd_b;
        w.heads.offset_b.at(0, 0) += v_off_b;
    }

    report.final_label_loss = report.label_history.empty() ? 0.0 : report.label_history.back();
    report.final_boundary_loss = report.boundary_history.empty() ? 0.0 : report.boundary_history.back();
    return report;
}

} // namespace sceneseg
