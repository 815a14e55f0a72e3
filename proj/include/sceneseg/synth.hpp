#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sceneseg/core.hpp"
#include "sceneseg/decode.hpp"
#include "sceneseg/errors.hpp"
#include "sceneseg/model.hpp"
#include "sceneseg/prng.hpp"

// Seeded synthetic corpus generation.
//
// A corpus bundles annotations, shot boundaries, per-frame features that a
// desk-scale model can actually learn from, and idealized frame outputs for
// exercising the decoders without a model. Everything is derived from the
// portable generator in prng.hpp with one sub-stream per concern and video,
// so a (seed, config, taxonomy) triple reproduces the corpus byte for byte
// on any platform. All times are quantized to whole milliseconds, which also
// makes JSON serialization round-trip exactly.

namespace sceneseg {

inline double quantize_ms(double t) { return std::round(t * 1000.0) / 1000.0; }

struct SynthConfig {
    std::uint64_t seed = 1;
    int num_videos = 100;
    std::string split_name = "synth";
    double min_duration_s = 25.0;
    double max_duration_s = 60.0;
    int min_scenes = 2;
    int max_scenes = 4;
    double min_scene_s = 2.0;
    double scene_length_spread = 0.35; // sigma of the log-normal length draw
    double mean_labels_per_scene = 6.0;
    double zipf_exponent = 1.1;
    double fps = 2.0;
    double feature_noise = 0.05;
    double boundary_signal = 1.0; // magnitude of the cut indicator in the features
    int max_text_tokens = 8;
    double shot_jitter_s = 0.15;  // shot cuts land this far from scene changes at most
    double extra_shots_per_s = 0.08;
};

// Per-class scene probabilities implied by the config: a zipf profile over
// class ids, scaled so the expected label count per scene matches the config.
// Classes in an exclusion group are additionally downweighted by the chance
// of being the group's representative for a video.
struct LabelModel {
    double kappa = 0.0;
    std::vector<double> eligible_prob;   // P(class | it is eligible in the video)
    std::vector<double> selection_prob;  // P(class is eligible): 1, or its share of the group
    std::vector<double> scene_prob;      // product: per-scene marginal across videos
};

inline LabelModel build_label_model(const SynthConfig& cfg, const Taxonomy& tax) {
    const int n = tax.num_classes();
    std::vector<double> zipf(static_cast<std::size_t>(n));
    double zsum = 0.0;
    for (int c = 0; c < n; ++c) {
        zipf[static_cast<std::size_t>(c)] = 1.0 / std::pow(static_cast<double>(c + 1), cfg.zipf_exponent);
        zsum += zipf[static_cast<std::size_t>(c)];
    }
    for (double& z : zipf) z /= zsum;

    LabelModel m;
    m.selection_prob.assign(static_cast<std::size_t>(n), 1.0);
    std::map<int, double> group_weight;
    for (const auto& c : tax.classes)
        if (c.exclusion_group) group_weight[*c.exclusion_group] += zipf[static_cast<std::size_t>(c.id)];
    for (const auto& c : tax.classes)
        if (c.exclusion_group)
            m.selection_prob[static_cast<std::size_t>(c.id)] =
                zipf[static_cast<std::size_t>(c.id)] / group_weight[*c.exclusion_group];

    auto expected = [&](double kappa) {
        double sum = 0.0;
        for (int c = 0; c < n; ++c) {
            const double q = std::min(1.0, kappa * zipf[static_cast<std::size_t>(c)]);
            sum += m.selection_prob[static_cast<std::size_t>(c)] * q;
        }
        return sum;
    };
    if (cfg.mean_labels_per_scene >= static_cast<double>(n))
        throw ValidationError("synth: mean_labels_per_scene must be below the class count");
    double lo = 0.0, hi = 1.0;
    while (expected(hi) < cfg.mean_labels_per_scene) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (expected(mid) < cfg.mean_labels_per_scene ? lo : hi) = mid;
    }
    m.kappa = 0.5 * (lo + hi);
    m.eligible_prob.resize(static_cast<std::size_t>(n));
    m.scene_prob.resize(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
        m.eligible_prob[static_cast<std::size_t>(c)] = std::min(1.0, m.kappa * zipf[static_cast<std::size_t>(c)]);
        m.scene_prob[static_cast<std::size_t>(c)] =
            m.selection_prob[static_cast<std::size_t>(c)] * m.eligible_prob[static_cast<std::size_t>(c)];
    }
    return m;
}

// Per-class feature signatures plus the two directions that carry boundary
// information in the frame features: an indicator and a phase whose
// coefficient encodes the sub-frame offset of the cut.
struct FeatureSignatures {
    std::vector<std::vector<double>> frame; // [class][frame_dim]
    std::vector<std::vector<double>> audio; // [class][audio_dim]
    std::vector<std::vector<double>> text;  // [class][text_dim]
    std::vector<double> cut_indicator;      // frame_dim
    std::vector<double> cut_phase;          // frame_dim
};

inline FeatureSignatures build_signatures(std::uint64_t seed, int num_classes, const ModelConfig& mc) {
    Rng rng(seed, stream_purpose::kSignatures, 0);
    auto draw = [&](int dim) {
        std::vector<double> v(static_cast<std::size_t>(dim));
        const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
        for (double& x : v) x = rng.gaussian() * scale;
        return v;
    };
    FeatureSignatures s;
    for (int c = 0; c < num_classes; ++c) {
        s.frame.push_back(draw(mc.frame_dim));
        s.audio.push_back(draw(mc.audio_dim));
        s.text.push_back(draw(mc.text_dim));
    }
    s.cut_indicator = draw(mc.frame_dim);
    s.cut_phase = draw(mc.frame_dim);
    return s;
}

struct SynthBookkeeping {
    LabelModel label_model;
    // distance from each interior boundary to its nearest shot cut, aligned
    // with internal_boundaries(ann); empty vector when a video has no shots
    std::vector<std::vector<double>> boundary_shot_distance;
};

struct SynthCorpus {
    DatasetSplit split;
    std::vector<ShotBoundarySet> shots;
    std::vector<FeatureBundle> features;
    std::vector<FrameOutputs> ideal_outputs;
    SynthBookkeeping book;
};

namespace detail {

inline std::string synth_video_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "video_%04d", index);
    return buf;
}

// Idealized output levels: clearly separated from the 0.5 decision threshold
// even at full noise amplitude. Noise amplitudes are calibrated for
// feature_noise = kIdealNoiseLevel and scale linearly with it, so a zero
// noise level makes decoding reproduce the annotations exactly.
constexpr double kIdealLabelOn = 0.85;
constexpr double kIdealLabelOff = 0.12;
constexpr double kIdealLabelNoise = 0.10;
constexpr double kIdealBoundaryOn = 0.92;
constexpr double kIdealBoundaryOff = 0.04;
constexpr double kIdealBoundaryNoise = 0.06;
constexpr double kIdealOffsetNoise = 0.01;
constexpr double kIdealNoiseLevel = 0.05;

} // namespace detail

// Generates the full corpus for a config. The model config only contributes
// feature dimensions and fps; pass the defaults unless a test needs others.
inline SynthCorpus gen_corpus(const SynthConfig& cfg, const Taxonomy& tax, const ModelConfig& mc = {}) {
    if (cfg.num_videos < 1) throw ValidationError("synth: need at least one video");
    if (cfg.min_scenes < 1 || cfg.max_scenes < cfg.min_scenes)
        throw ValidationError("synth: bad scene count range");
    if (!(cfg.min_scene_s > 0.0)) throw ValidationError("synth: min_scene_s must be positive");
    if (cfg.min_duration_s < cfg.min_scene_s * cfg.max_scenes)
        throw ValidationError("synth: durations cannot fit the scene count");
    if (mc.num_classes != tax.num_classes())
        throw ValidationError("synth: model config class count differs from the taxonomy");

    SynthCorpus corpus;
    corpus.split.name = cfg.split_name;
    corpus.book.label_model = build_label_model(cfg, tax);
    const FeatureSignatures sig = build_signatures(cfg.seed, tax.num_classes(), mc);
    const LabelModel& lm = corpus.book.label_model;

    std::vector<int> exclusion_groups;
    {
        std::set<int> groups;
        for (const auto& c : tax.classes)
            if (c.exclusion_group) groups.insert(*c.exclusion_group);
        exclusion_groups.assign(groups.begin(), groups.end());
    }

    for (int v = 0; v < cfg.num_videos; ++v) {
        const auto vi = static_cast<std::uint64_t>(v);
        VideoAnnotation ann;
        ann.video_id = detail::synth_video_id(v);

        // --- scene partition ---
        {
            Rng rng(cfg.seed, stream_purpose::kScenes, vi);
            ann.duration_s = quantize_ms(rng.uniform(cfg.min_duration_s, cfg.max_duration_s));
            const int n = rng.uniform_int(cfg.min_scenes, cfg.max_scenes);
            std::vector<double> raw(static_cast<std::size_t>(n));
            double rsum = 0.0;
            for (double& x : raw) {
                x = std::exp(cfg.scene_length_spread * rng.gaussian());
                rsum += x;
            }
            const double free = ann.duration_s - cfg.min_scene_s * n;
            double cursor = 0.0;
            for (int i = 0; i < n; ++i) {
                const double len = cfg.min_scene_s + free * raw[static_cast<std::size_t>(i)] / rsum;
                const double end = (i == n - 1) ? ann.duration_s : quantize_ms(cursor + len);
                ann.scenes.push_back({cursor, end, {}});
                cursor = end;
            }
        }

        // --- labels ---
        {
            Rng rng(cfg.seed, stream_purpose::kLabels, vi);
            // one representative per exclusion group for the whole video
            std::vector<bool> eligible(static_cast<std::size_t>(tax.num_classes()), true);
            for (int g : exclusion_groups) {
                std::vector<int> members;
                for (const auto& c : tax.classes)
                    if (c.exclusion_group && *c.exclusion_group == g) members.push_back(c.id);
                double wsum = 0.0;
                for (int id : members) wsum += lm.selection_prob[static_cast<std::size_t>(id)];
                const double u = rng.uniform01() * wsum;
                double acc = 0.0;
                int chosen = members.back();
                for (int id : members) {
                    acc += lm.selection_prob[static_cast<std::size_t>(id)];
                    if (u < acc) {
                        chosen = id;
                        break;
                    }
                }
                for (int id : members)
                    if (id != chosen) eligible[static_cast<std::size_t>(id)] = false;
            }
            for (auto& scene : ann.scenes) {
                for (int c = 0; c < tax.num_classes(); ++c) {
                    const double u = rng.uniform01();
                    if (eligible[static_cast<std::size_t>(c)] && u < lm.eligible_prob[static_cast<std::size_t>(c)])
                        scene.labels.push_back(c);
                }
                if (scene.labels.empty()) {
                    // force one draw so every scene is labelled
                    double wsum = 0.0;
                    for (int c = 0; c < tax.num_classes(); ++c)
                        if (eligible[static_cast<std::size_t>(c)]) wsum += lm.eligible_prob[static_cast<std::size_t>(c)];
                    const double u = rng.uniform01() * wsum;
                    double acc = 0.0;
                    int chosen = 0;
                    for (int c = 0; c < tax.num_classes(); ++c) {
                        if (!eligible[static_cast<std::size_t>(c)]) continue;
                        acc += lm.eligible_prob[static_cast<std::size_t>(c)];
                        chosen = c;
                        if (u < acc) break;
                    }
                    scene.labels.push_back(chosen);
                }
            }
        }

        // --- shot cuts ---
        {
            Rng rng(cfg.seed, stream_purpose::kShots, vi);
            std::vector<double> cuts;
            for (double b : internal_boundaries(ann)) {
                const double s = quantize_ms(b + rng.uniform(-cfg.shot_jitter_s, cfg.shot_jitter_s));
                if (s > 0.05 && s < ann.duration_s - 0.05) cuts.push_back(s);
            }
            for (const auto& scene : ann.scenes) {
                const double len = scene.end_s - scene.start_s;
                const int extras = static_cast<int>(std::floor(len * cfg.extra_shots_per_s));
                for (int e = 0; e < extras; ++e) {
                    if (len < 0.8) break;
                    cuts.push_back(quantize_ms(rng.uniform(scene.start_s + 0.3, scene.end_s - 0.3)));
                }
            }
            std::sort(cuts.begin(), cuts.end());
            cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
            corpus.shots.push_back({ann.video_id, cuts});

            std::vector<double> dist;
            for (double b : internal_boundaries(ann)) {
                double best = std::numeric_limits<double>::infinity();
                for (double s : cuts) best = std::min(best, std::abs(s - b));
                dist.push_back(best);
            }
            corpus.book.boundary_shot_distance.push_back(std::move(dist));
        }

        const RasterTargets raster = rasterize_targets(ann, tax.num_classes(), cfg.fps);
        const int t = raster.labels.rows;

        // --- features ---
        {
            Rng rng(cfg.seed, stream_purpose::kFeatures, vi);
            FeatureBundle fb;
            fb.video_id = ann.video_id;
            fb.fps = cfg.fps;
            fb.duration_s = ann.duration_s;
            fb.frame = Mat(t, mc.frame_dim);
            fb.audio = Mat(t, mc.audio_dim);

            for (int k = 0; k < t; ++k)
                for (int j = 0; j < mc.frame_dim; ++j) fb.frame.at(k, j) = cfg.feature_noise * rng.gaussian();
            for (int k = 0; k < t; ++k)
                for (int j = 0; j < mc.audio_dim; ++j) fb.audio.at(k, j) = cfg.feature_noise * rng.gaussian();

            for (int k = 0; k < t; ++k) {
                std::vector<int> active;
                for (int c = 0; c < tax.num_classes(); ++c)
                    if (raster.labels.at(k, c) != 0.0) active.push_back(c);
                const double blend = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, active.size())));
                for (int c : active) {
                    for (int j = 0; j < mc.frame_dim; ++j)
                        fb.frame.at(k, j) += blend * sig.frame[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
                    for (int j = 0; j < mc.audio_dim; ++j)
                        fb.audio.at(k, j) += blend * sig.audio[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
                }
                if (raster.boundary[static_cast<std::size_t>(k)] != 0.0) {
                    const double phase = raster.offset_s[static_cast<std::size_t>(k)] * 2.0 * cfg.fps;
                    for (int j = 0; j < mc.frame_dim; ++j)
                        fb.frame.at(k, j) += cfg.boundary_signal * sig.cut_indicator[static_cast<std::size_t>(j)] +
                                             phase * sig.cut_phase[static_cast<std::size_t>(j)];
                }
            }

            std::set<int> video_labels;
            for (const auto& scene : ann.scenes) video_labels.insert(scene.labels.begin(), scene.labels.end());
            std::vector<int> tokens(video_labels.begin(), video_labels.end());
            if (static_cast<int>(tokens.size()) > cfg.max_text_tokens) tokens.resize(static_cast<std::size_t>(cfg.max_text_tokens));
            fb.text = Mat(std::max<int>(1, static_cast<int>(tokens.size())), mc.text_dim);
            for (std::size_t j = 0; j < tokens.size(); ++j)
                for (int m = 0; m < mc.text_dim; ++m)
                    fb.text.at(static_cast<int>(j), m) =
                        sig.text[static_cast<std::size_t>(tokens[j])][static_cast<std::size_t>(m)] +
                        cfg.feature_noise * rng.gaussian();
            if (tokens.empty())
                for (int m = 0; m < mc.text_dim; ++m) fb.text.at(0, m) = cfg.feature_noise * rng.gaussian();
            corpus.features.push_back(std::move(fb));
        }

        // --- idealized outputs ---
        {
            Rng rng(cfg.seed, stream_purpose::kOutputNoise, vi);
            const double nz = cfg.feature_noise / detail::kIdealNoiseLevel;
            FrameOutputs out;
            out.video_id = ann.video_id;
            out.fps = cfg.fps;
            out.duration_s = ann.duration_s;
            out.label_probs = Mat(t, tax.num_classes());
            for (int k = 0; k < t; ++k)
                for (int c = 0; c < tax.num_classes(); ++c) {
                    const bool on = raster.labels.at(k, c) != 0.0;
                    const double base = on ? detail::kIdealLabelOn : detail::kIdealLabelOff;
                    out.label_probs.at(k, c) =
                        std::clamp(base + nz * detail::kIdealLabelNoise * rng.uniform(-1.0, 1.0), 0.0, 1.0);
                }
            out.boundary_prob.resize(static_cast<std::size_t>(t));
            out.offset_s.resize(static_cast<std::size_t>(t));
            for (int k = 0; k < t; ++k) {
                const bool on = raster.boundary[static_cast<std::size_t>(k)] != 0.0;
                const double base = on ? detail::kIdealBoundaryOn : detail::kIdealBoundaryOff;
                out.boundary_prob[static_cast<std::size_t>(k)] =
                    std::clamp(base + nz * detail::kIdealBoundaryNoise * rng.uniform(-1.0, 1.0), 0.0, 1.0);
                out.offset_s[static_cast<std::size_t>(k)] =
                    on ? raster.offset_s[static_cast<std::size_t>(k)] +
                             nz * detail::kIdealOffsetNoise * rng.uniform(-1.0, 1.0)
                       : 0.0;
            }
            corpus.ideal_outputs.push_back(std::move(out));
        }

        corpus.split.annotations.push_back(std::move(ann));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// Controlled degradation
// ---------------------------------------------------------------------------

// Gaussian jitter on every interior boundary, order-preserving: each shift is
// clamped to just under half the original gap to either neighbour. sigma 0
// returns the split unchanged. With drop_one_label, every scene holding more
// than one label loses a uniformly chosen one.
inline DatasetSplit perturb_boundaries(const DatasetSplit& split, double sigma_s, std::uint64_t seed,
                                       bool drop_one_label = false) {
    DatasetSplit out = split;
    for (std::size_t v = 0; v < out.annotations.size(); ++v) {
        VideoAnnotation& ann = out.annotations[v];
        Rng rng(seed, stream_purpose::kPerturb, static_cast<std::uint64_t>(v));
        const std::vector<double> original = internal_boundaries(ann);
        std::vector<double> moved = original;
        for (std::size_t i = 0; i < original.size(); ++i) {
            const double delta = sigma_s * rng.gaussian();
            const double prev = (i == 0) ? 0.0 : original[i - 1];
            const double next = (i + 1 < original.size()) ? original[i + 1] : ann.duration_s;
            const double cap = 0.49 * std::min(original[i] - prev, next - original[i]);
            moved[i] = sigma_s == 0.0 ? original[i] : quantize_ms(original[i] + std::clamp(delta, -cap, cap));
        }
        for (std::size_t i = 0; i < moved.size(); ++i) {
            ann.scenes[i].end_s = moved[i];
            ann.scenes[i + 1].start_s = moved[i];
        }
        if (drop_one_label) {
            for (auto& scene : ann.scenes) {
                if (scene.labels.size() < 2) continue;
                const int pick = rng.uniform_int(0, static_cast<int>(scene.labels.size()) - 1);
                scene.labels.erase(scene.labels.begin() + pick);
            }
        }
    }
    return out;
}

// Rigid shift of every interior boundary by delta seconds. Throws when a
// shift would break the partition ordering.
inline DatasetSplit shift_boundaries(const DatasetSplit& split, double delta_s) {
    DatasetSplit out = split;
    for (auto& ann : out.annotations) {
        std::vector<double> moved = internal_boundaries(ann);
        for (double& b : moved) b += delta_s;
        for (std::size_t i = 0; i < moved.size(); ++i) {
            const double lo = (i == 0) ? 0.0 : moved[i - 1];
            const double hi = (i + 1 < moved.size()) ? moved[i + 1] : ann.duration_s;
            if (!(moved[i] > lo && moved[i] < hi))
                throw ValidationError("shift_boundaries: shift of " + std::to_string(delta_s) +
                                      "s breaks video '" + ann.video_id + "'");
        }
        for (std::size_t i = 0; i < moved.size(); ++i) {
            ann.scenes[i].end_s = moved[i];
            ann.scenes[i + 1].start_s = moved[i];
        }
    }
    return out;
}

} // namespace sceneseg
