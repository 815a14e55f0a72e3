#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sceneseg/core.hpp"
#include "sceneseg/errors.hpp"
#include "sceneseg/tensor.hpp"

// Frame-wise model outputs and their conversion into predicted scenes.
//
// Two decoders are provided: boundary peak picking with offset refinement
// (the main path) and a frame-wise score threshold baseline.

namespace sceneseg {

// Sample count for a video: sample times are k/fps for k = 0..T-1, all
// strictly inside [0, duration).
inline int frame_count(double duration_s, double fps) {
    if (!(duration_s > 0.0) || !(fps > 0.0))
        throw std::invalid_argument("frame_count: duration and fps must be positive");
    const int t = static_cast<int>(std::ceil(duration_s * fps - 1e-9));
    return std::max(1, t);
}

struct FrameOutputs {
    std::string video_id;
    double fps = 2.0;
    double duration_s = 0.0;
    Mat label_probs;                   // frames x classes, each in [0, 1]
    std::vector<double> boundary_prob; // per frame, in [0, 1]
    std::vector<double> offset_s;      // per frame, refinement in seconds

    int frames() const { return label_probs.rows; }
    int classes() const { return label_probs.cols; }
};

inline void check_frame_outputs(const FrameOutputs& out) {
    const int t = frame_count(out.duration_s, out.fps);
    if (out.label_probs.rows != t)
        throw ValidationError("outputs '" + out.video_id + "': expected " + std::to_string(t) +
                              " frames, got " + std::to_string(out.label_probs.rows));
    if (static_cast<int>(out.boundary_prob.size()) != t || static_cast<int>(out.offset_s.size()) != t)
        throw ValidationError("outputs '" + out.video_id + "': per-frame array length mismatch");
    for (double v : out.label_probs.v)
        if (!(v >= 0.0 && v <= 1.0))
            throw ValidationError("outputs '" + out.video_id + "': label probability out of [0,1]");
    for (double v : out.boundary_prob)
        if (!(v >= 0.0 && v <= 1.0))
            throw ValidationError("outputs '" + out.video_id + "': boundary probability out of [0,1]");
    for (double v : out.offset_s)
        if (!std::isfinite(v)) throw ValidationError("outputs '" + out.video_id + "': non-finite offset");
}

// ---------------------------------------------------------------------------
// Container round-trip
// ---------------------------------------------------------------------------

// Note the container payload is 32-bit floats: a round-trip quantizes the
// doubles held in memory.
inline Container outputs_to_container(const FrameOutputs& out) {
    Container c;
    c.kind = "outputs";
    c.rows = static_cast<std::uint32_t>(out.frames());
    c.cols = static_cast<std::uint32_t>(out.classes());
    c.fps = out.fps;
    c.duration_s = out.duration_s;
    c.data.reserve(out.label_probs.v.size() + 2 * out.boundary_prob.size());
    for (double x : out.label_probs.v) c.data.push_back(static_cast<float>(x));
    for (double x : out.boundary_prob) c.data.push_back(static_cast<float>(x));
    for (double x : out.offset_s) c.data.push_back(static_cast<float>(x));
    return c;
}

inline FrameOutputs outputs_from_container(const Container& c, const std::string& origin = "") {
    if (c.kind != "outputs")
        throw ParseError("container " + origin + ": expected an outputs container, got '" + c.kind + "'");
    const auto t = static_cast<std::size_t>(c.rows);
    const auto n = static_cast<std::size_t>(c.cols);
    if (c.data.size() != t * n + 2 * t) throw ParseError("container " + origin + ": outputs payload size mismatch");

    FrameOutputs out;
    out.fps = c.fps;
    out.duration_s = c.duration_s;
    out.label_probs = Mat(static_cast<int>(t), static_cast<int>(n));
    for (std::size_t i = 0; i < t * n; ++i) out.label_probs.v[i] = static_cast<double>(c.data[i]);
    out.boundary_prob.resize(t);
    out.offset_s.resize(t);
    for (std::size_t k = 0; k < t; ++k) {
        out.boundary_prob[k] = static_cast<double>(c.data[t * n + k]);
        out.offset_s[k] = static_cast<double>(c.data[t * n + t + k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Boundary peak picking
// ---------------------------------------------------------------------------

struct BoundaryPick {
    int frame = 0;
    double prob = 0.0;
    double time_s = 0.0; // refined: frame/fps + clamped offset
};

struct PickOptions {
    double threshold = 0.5;    // minimum peak probability
    double nms_window_s = 1.0; // a peak suppresses weaker peaks within this distance
};

// Boundary candidates from the per-frame boundary probabilities.
//
// A candidate is a frame whose probability meets the threshold and is a local
// maximum (strictly above its left neighbour, at or above its right, so a
// plateau yields its leftmost frame). Candidates then go through greedy
// suppression in descending probability order (ties to the earlier frame):
// a candidate is dropped when a kept peak lies within the suppression
// window. Kept peaks are refined by their offset, clamped to half
// a frame period, and must land strictly inside (0, duration). Refined times
// closer than half a frame period collapse into the stronger one.
inline std::vector<BoundaryPick> pick_boundaries(const FrameOutputs& out, const PickOptions& opt = {}) {
    const int t = static_cast<int>(out.boundary_prob.size());
    const double half_period = 0.5 / out.fps;

    std::vector<int> candidates;
    for (int k = 0; k < t; ++k) {
        const double p = out.boundary_prob[static_cast<std::size_t>(k)];
        if (p < opt.threshold) continue;
        if (k > 0 && !(p > out.boundary_prob[static_cast<std::size_t>(k - 1)])) continue;
        if (k + 1 < t && !(p >= out.boundary_prob[static_cast<std::size_t>(k + 1)])) continue;
        candidates.push_back(k);
    }

    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        const double pa = out.boundary_prob[static_cast<std::size_t>(a)];
        const double pb = out.boundary_prob[static_cast<std::size_t>(b)];
        if (pa != pb) return pa > pb;
        return a < b;
    });
    std::vector<int> kept;
    for (int k : candidates) {
        bool suppressed = false;
        for (int j : kept) {
            if (std::abs(k - j) / out.fps <= opt.nms_window_s) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(k);
    }
    std::sort(kept.begin(), kept.end());

    std::vector<BoundaryPick> picks;
    for (int k : kept) {
        const double off = std::clamp(out.offset_s[static_cast<std::size_t>(k)], -half_period, half_period);
        const double time = static_cast<double>(k) / out.fps + off;
        if (!(time > 0.0 && time < out.duration_s)) continue;
        picks.push_back({k, out.boundary_prob[static_cast<std::size_t>(k)], time});
    }

    // Offset refinement can pull two picks together; collapse near-duplicates.
    std::sort(picks.begin(), picks.end(), [](const BoundaryPick& a, const BoundaryPick& b) {
        if (a.time_s != b.time_s) return a.time_s < b.time_s;
        return a.frame < b.frame;
    });
    std::vector<BoundaryPick> merged;
    for (const auto& p : picks) {
        if (!merged.empty() && p.time_s - merged.back().time_s < half_period) {
            if (p.prob > merged.back().prob) merged.back() = p; // tie keeps the earlier
        } else {
            merged.push_back(p);
        }
    }
    return merged;
}

inline std::vector<double> pick_times(const std::vector<BoundaryPick>& picks) {
    std::vector<double> times;
    times.reserve(picks.size());
    for (const auto& p : picks) times.push_back(p.time_s);
    return times;
}

// Splits [0, duration] at the given interior cut points.
inline std::vector<Interval> segments_from_boundaries(const std::vector<double>& boundaries,
                                                      double duration_s) {
    if (!(duration_s > 0.0)) throw std::invalid_argument("segments_from_boundaries: duration must be positive");
    double prev = 0.0;
    std::vector<Interval> segs;
    for (double b : boundaries) {
        if (!(b > prev && b < duration_s))
            throw std::invalid_argument("segments_from_boundaries: cuts must strictly increase within (0, duration)");
        segs.push_back({prev, b});
        prev = b;
    }
    segs.push_back({prev, duration_s});
    return segs;
}

// ---------------------------------------------------------------------------
// Segment labelling
// ---------------------------------------------------------------------------

// Scores each segment by max-pooling the frame label probabilities over the
// frames whose sample time lies in [start, end). A segment too short to
// contain a sample borrows the frame nearest to its midpoint. Classes scoring
// below min_score are dropped from the segment's score map.
inline PredictedSceneSet label_segments(const FrameOutputs& out, const std::vector<Interval>& segments,
                                        double min_score = 0.0) {
    PredictedSceneSet pred;
    pred.video_id = out.video_id;
    const int t = out.frames();
    const int n = out.classes();

    for (const auto& seg : segments) {
        int k0 = static_cast<int>(std::ceil(seg.start_s * out.fps - 1e-9));
        int k1 = static_cast<int>(std::ceil(seg.end_s * out.fps - 1e-9)); // one past the last sample
        k0 = std::clamp(k0, 0, t);
        k1 = std::clamp(k1, 0, t);

        PredictedScene ps;
        ps.start_s = seg.start_s;
        ps.end_s = seg.end_s;
        if (k0 >= k1) {
            const double mid = 0.5 * (seg.start_s + seg.end_s);
            const int k = std::clamp(static_cast<int>(std::lround(mid * out.fps)), 0, t - 1);
            k0 = k;
            k1 = k + 1;
        }
        for (int c = 0; c < n; ++c) {
            double best = 0.0;
            for (int k = k0; k < k1; ++k)
                best = std::max(best, out.label_probs.at(k, c));
            if (best >= min_score) ps.scores[c] = best;
        }
        pred.segments.push_back(std::move(ps));
    }
    check_prediction_set(pred);
    return pred;
}

struct DecodeOptions {
    PickOptions pick;
    double min_score = 0.0;
};

// Main decode path: peak picking, segmentation, max-pool labelling.
inline PredictedSceneSet decode_boundary(const FrameOutputs& out, const DecodeOptions& opt = {}) {
    const std::vector<double> cuts = pick_times(pick_boundaries(out, opt.pick));
    const std::vector<Interval> segs = segments_from_boundaries(cuts, out.duration_s);
    return label_segments(out, segs, opt.min_score);
}

// ---------------------------------------------------------------------------
// Frame-wise threshold baseline
// ---------------------------------------------------------------------------

struct FramewiseDecodeResult {
    PredictedSceneSet pred;
    bool all_empty_fallback = false; // no frame cleared the threshold anywhere
};

// Baseline decoder: threshold the per-frame label probabilities, form maximal
// runs of identical label sets, and emit one segment per run. Frames whose
// set is empty inherit the previous frame's set (leading empties inherit the
// first non-empty). If every frame is empty the whole video becomes a single
// segment scored by per-class max, flagged as a fallback.
inline FramewiseDecodeResult framewise_threshold_decode(const FrameOutputs& out, double threshold = 0.5) {
    const int t = out.frames();
    const int n = out.classes();

    FramewiseDecodeResult result;
    result.pred.video_id = out.video_id;

    std::vector<std::vector<int>> sets(static_cast<std::size_t>(t));
    bool any = false;
    for (int k = 0; k < t; ++k) {
        for (int c = 0; c < n; ++c)
            if (out.label_probs.at(k, c) >= threshold) sets[static_cast<std::size_t>(k)].push_back(c);
        if (!sets[static_cast<std::size_t>(k)].empty()) any = true;
    }

    if (!any) {
        result.all_empty_fallback = true;
        PredictedScene ps;
        ps.start_s = 0.0;
        ps.end_s = out.duration_s;
        for (int c = 0; c < n; ++c) {
            double best = 0.0;
            for (int k = 0; k < t; ++k) best = std::max(best, out.label_probs.at(k, c));
            ps.scores[c] = best;
        }
        result.pred.segments.push_back(std::move(ps));
        check_prediction_set(result.pred);
        return result;
    }

    int first_filled = 0;
    while (sets[static_cast<std::size_t>(first_filled)].empty()) ++first_filled;
    for (int k = first_filled - 1; k >= 0; --k)
        sets[static_cast<std::size_t>(k)] = sets[static_cast<std::size_t>(k + 1)];
    for (int k = first_filled + 1; k < t; ++k)
        if (sets[static_cast<std::size_t>(k)].empty()) sets[static_cast<std::size_t>(k)] = sets[static_cast<std::size_t>(k - 1)];

    int run_start = 0;
    for (int k = 1; k <= t; ++k) {
        if (k < t && sets[static_cast<std::size_t>(k)] == sets[static_cast<std::size_t>(run_start)]) continue;
        PredictedScene ps;
        ps.start_s = static_cast<double>(run_start) / out.fps;
        ps.end_s = (k < t) ? static_cast<double>(k) / out.fps : out.duration_s;
        for (int c : sets[static_cast<std::size_t>(run_start)]) {
            double best = 0.0;
            for (int f = run_start; f < k; ++f) best = std::max(best, out.label_probs.at(f, c));
            ps.scores[c] = best;
        }
        result.pred.segments.push_back(std::move(ps));
        run_start = k;
    }
    check_prediction_set(result.pred);
    return result;
}

} // namespace sceneseg
