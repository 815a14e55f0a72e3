#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "sceneseg/core.hpp"
#include "sceneseg/metrics.hpp"

// Reference implementations of the metrics, written independently of
// metrics.hpp and deliberately structured differently: interval overlap is
// derived from a hull sweep instead of the closed form, precision-recall
// points are recomputed from scratch for every rank prefix, and boundary
// matching is verified against an exhaustive maximum-cardinality bound.
//
// These exist to cross-check the fast implementations in tests. They are
// test-scale only and throw on instances larger than the caps below.

namespace sceneseg::oracle {

inline constexpr std::size_t kMaxDetections = 64;
inline constexpr std::size_t kMaxGtPerClass = 64;
inline constexpr std::size_t kMaxBoundaries = 12;

// Overlap ratio via the convex hull: when the intervals touch or overlap the
// union is the hull span, otherwise the sum of lengths.
inline double ref_tiou(const Interval& a, const Interval& b) {
    if (!(a.end_s > a.start_s) || !(b.end_s > b.start_s))
        throw std::invalid_argument("ref_tiou: intervals must have positive length");
    const double inner_lo = std::max(a.start_s, b.start_s);
    const double inner_hi = std::min(a.end_s, b.end_s);
    const double hull = std::max(a.end_s, b.end_s) - std::min(a.start_s, b.start_s);
    if (inner_hi <= inner_lo) return 0.0;
    const double inter = inner_hi - inner_lo;
    return inter / hull; // hull == len(a) + len(b) - inter when overlapping
}

namespace detail {

// Matching for the first `take` detections of the ranked list, recomputed
// from scratch: every detection claims the unclaimed interval of its video
// with the highest overlap at or above the threshold, earlier interval on ties.
inline std::size_t matches_in_prefix(const std::vector<Detection>& ranked, std::size_t take,
                                     const std::map<std::string, std::vector<Interval>>& gt,
                                     double tiou_threshold) {
    std::map<std::string, std::set<std::size_t>> open;
    for (const auto& [vid, segs] : gt) {
        for (std::size_t i = 0; i < segs.size(); ++i) open[vid].insert(i);
    }
    std::size_t tp = 0;
    for (std::size_t k = 0; k < take; ++k) {
        const Detection& d = ranked[k];
        auto it = gt.find(d.video_id);
        if (it == gt.end()) continue;
        auto& avail = open[d.video_id];
        double best_v = -1.0;
        std::size_t best_i = 0;
        for (std::size_t i : avail) {
            const double v = ref_tiou(d.seg, it->second[i]);
            if (v > best_v) {
                best_v = v;
                best_i = i;
            }
        }
        if (!avail.empty() && best_v >= tiou_threshold) {
            avail.erase(best_i);
            ++tp;
        }
    }
    return tp;
}

} // namespace detail

// Reference AP: walk the precision-recall curve point by point, recomputing
// the matching for every prefix, and accumulate recall-step times precision.
inline std::optional<double> ref_ap_single_class(std::vector<Detection> dets,
                                                 const std::map<std::string, std::vector<Interval>>& gt,
                                                 double tiou_threshold) {
    std::size_t total_gt = 0;
    for (const auto& [vid, segs] : gt) {
        total_gt += segs.size();
        if (segs.size() > kMaxGtPerClass)
            throw std::invalid_argument("ref_ap_single_class: too many gt intervals for the reference path");
    }
    if (total_gt == 0) return std::nullopt;
    if (dets.size() > kMaxDetections)
        throw std::invalid_argument("ref_ap_single_class: too many detections for the reference path");

    std::sort(dets.begin(), dets.end(), detection_rank_less);

    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t k = 1; k <= dets.size(); ++k) {
        const std::size_t tp = detail::matches_in_prefix(dets, k, gt, tiou_threshold);
        const double precision = static_cast<double>(tp) / static_cast<double>(k);
        const double recall = static_cast<double>(tp) / static_cast<double>(total_gt);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

// Maximum-cardinality matching size between two boundary lists under the
// tolerance, by exhaustive bitmask dynamic programming. Upper-bounds any
// claim-and-delete strategy.
inline std::size_t max_matching_size(const std::vector<double>& gt, const std::vector<double>& pred,
                                     double tol) {
    if (gt.size() > kMaxBoundaries || pred.size() > kMaxBoundaries)
        throw std::invalid_argument("max_matching_size: instance too large for the exhaustive check");
    const std::size_t m = gt.size();
    const std::size_t full = std::size_t{1} << m;
    std::vector<int> dp(full, -1);
    dp[0] = 0;
    std::vector<int> next(full, -1);
    for (std::size_t j = 0; j < pred.size(); ++j) {
        std::fill(next.begin(), next.end(), -1);
        for (std::size_t mask = 0; mask < full; ++mask) {
            if (dp[mask] < 0) continue;
            next[mask] = std::max(next[mask], dp[mask]); // leave prediction j unmatched
            for (std::size_t i = 0; i < m; ++i) {
                if (mask & (std::size_t{1} << i)) continue;
                if (std::abs(gt[i] - pred[j]) <= tol)
                    next[mask | (std::size_t{1} << i)] =
                        std::max(next[mask | (std::size_t{1} << i)], dp[mask] + 1);
            }
        }
        dp.swap(next);
    }
    return static_cast<std::size_t>(*std::max_element(dp.begin(), dp.end()));
}

// Reference boundary matching: same claim rule as the fast path but executed
// over an explicit pool of open boundaries, then sanity-checked against the
// exhaustive maximum-cardinality bound.
inline MatchCounts ref_boundary_match(std::vector<double> gt, std::vector<double> pred, double tol,
                                      MatchMode mode = MatchMode::ascending_time) {
    if (gt.size() > kMaxBoundaries || pred.size() > kMaxBoundaries)
        throw std::invalid_argument("ref_boundary_match: instance too large for the reference path");
    std::sort(gt.begin(), gt.end());
    std::sort(pred.begin(), pred.end());

    std::set<std::size_t> open;
    for (std::size_t i = 0; i < gt.size(); ++i) open.insert(i);
    std::int64_t tp = 0;

    if (mode == MatchMode::ascending_time) {
        for (double p : pred) {
            std::size_t best_i = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i : open) { // set iterates ascending, ties keep the earlier
                const double d = std::abs(gt[i] - p);
                if (d < best_d) {
                    best_d = d;
                    best_i = i;
                }
            }
            if (!open.empty() && best_d <= tol) {
                open.erase(best_i);
                ++tp;
            }
        }
    } else {
        std::set<std::size_t> open_pred;
        for (std::size_t j = 0; j < pred.size(); ++j) open_pred.insert(j);
        while (true) {
            double best_d = std::numeric_limits<double>::infinity();
            std::size_t bg = 0, bp = 0;
            bool found = false;
            for (std::size_t i : open) {
                for (std::size_t j : open_pred) {
                    const double d = std::abs(gt[i] - pred[j]);
                    if (d <= tol && d < best_d) { // ascending set order pins ties
                        best_d = d;
                        bg = i;
                        bp = j;
                        found = true;
                    }
                }
            }
            if (!found) break;
            open.erase(bg);
            open_pred.erase(bp);
            ++tp;
        }
    }

    const std::size_t bound = max_matching_size(gt, pred, tol);
    if (static_cast<std::size_t>(tp) > bound)
        throw std::logic_error("ref_boundary_match: matched more pairs than the exhaustive maximum");

    MatchCounts c;
    c.tp = tp;
    c.fp = static_cast<std::int64_t>(pred.size()) - tp;
    c.fn = static_cast<std::int64_t>(gt.size()) - tp;
    return c;
}

// Reference Avg_mAP with its own per-class extraction.
inline double ref_avg_map(const DatasetSplit& gt, const std::vector<PredictedSceneSet>& preds,
                          const Taxonomy& tax) {
    const auto n = static_cast<std::size_t>(tax.num_classes());
    std::vector<std::map<std::string, std::vector<Interval>>> gt_by_class(n);
    for (const auto& ann : gt.annotations)
        for (const auto& s : ann.scenes)
            for (int id : s.labels) gt_by_class[static_cast<std::size_t>(id)][ann.video_id].push_back({s.start_s, s.end_s});

    std::vector<std::vector<Detection>> dets_by_class(n);
    for (const auto& p : preds)
        for (const auto& seg : p.segments)
            for (const auto& [id, score] : seg.scores)
                dets_by_class[static_cast<std::size_t>(id)].push_back({p.video_id, {seg.start_s, seg.end_s}, score});

    int evaluated = 0;
    for (std::size_t c = 0; c < n; ++c)
        if (!gt_by_class[c].empty()) evaluated++;
    if (evaluated == 0) throw std::invalid_argument("ref_avg_map: no labelled ground truth");

    double threshold_sum = 0.0;
    for (double thr : kTiouThresholds) {
        double class_sum = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const auto ap = ref_ap_single_class(dets_by_class[c], gt_by_class[c], thr);
            if (ap) class_sum += *ap;
        }
        threshold_sum += class_sum / static_cast<double>(evaluated);
    }
    return threshold_sum / static_cast<double>(kTiouThresholds.size());
}

// Reference Avg_F1 with its own boundary extraction and micro aggregation.
inline double ref_avg_f1(const DatasetSplit& gt, const std::vector<PredictedSceneSet>& preds,
                         MatchMode mode = MatchMode::ascending_time) {
    std::map<std::string, const PredictedSceneSet*> by_id;
    for (const auto& p : preds) by_id[p.video_id] = &p;

    double sum = 0.0;
    for (double tol : kBoundaryTolerances) {
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (const auto& ann : gt.annotations) {
            std::vector<double> gt_b;
            for (std::size_t i = 1; i < ann.scenes.size(); ++i) gt_b.push_back(ann.scenes[i].start_s);

            std::vector<double> pred_b;
            auto it = by_id.find(ann.video_id);
            if (it != by_id.end()) {
                for (const auto& seg : it->second->segments) {
                    for (double t : {seg.start_s, seg.end_s})
                        if (t > 0.0 && t < ann.duration_s) pred_b.push_back(t);
                }
                std::sort(pred_b.begin(), pred_b.end());
                pred_b.erase(std::unique(pred_b.begin(), pred_b.end()), pred_b.end());
            }

            const MatchCounts c = ref_boundary_match(gt_b, pred_b, tol, mode);
            tp += c.tp;
            fp += c.fp;
            fn += c.fn;
        }
        const double precision = (tp + fp == 0) ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = (tp + fn == 0) ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
        sum += (precision + recall == 0.0) ? 0.0 : 2.0 * precision * recall / (precision + recall);
    }
    return sum / static_cast<double>(kBoundaryTolerances.size());
}

} // namespace sceneseg::oracle
