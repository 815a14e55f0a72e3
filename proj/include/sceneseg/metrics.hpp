#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sceneseg/core.hpp"
#include "sceneseg/errors.hpp"

// Evaluation metrics: detection-style average precision over tIoU thresholds
// and boundary F1 over time tolerances.
//
// Determinism contract: every sort uses a total ordering (all tie-breaks
// pinned below), so two runs over the same inputs produce bitwise identical
// results regardless of input ordering quirks.

namespace sceneseg {

// tIoU thresholds for mean average precision: 0.50 to 0.95, step 0.05.
inline constexpr std::array<double, 10> kTiouThresholds = {0.50, 0.55, 0.60, 0.65, 0.70,
                                                           0.75, 0.80, 0.85, 0.90, 0.95};

// Time tolerances in seconds for boundary F1.
inline constexpr std::array<double, 5> kBoundaryTolerances = {0.1, 0.2, 0.3, 0.4, 0.5};

// ---------------------------------------------------------------------------
// Average precision
// ---------------------------------------------------------------------------

struct Detection {
    std::string video_id;
    Interval seg;
    double score = 0.0;
};

// Total order on detections: score descending, then earlier start, then
// video_id, then earlier end. Pinning the full chain keeps ranking (and with
// it AP) independent of input order.
inline bool detection_rank_less(const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.seg.start_s != b.seg.start_s) return a.seg.start_s < b.seg.start_s;
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    return a.seg.end_s < b.seg.end_s;
}

// Average precision for one class at one tIoU threshold.
//
// Detections are ranked by detection_rank_less, then greedily matched: each
// detection claims the not-yet-claimed ground-truth interval of its video
// with the highest tIoU, provided that tIoU meets the threshold (ties go to
// the earlier interval). AP is the un-interpolated area under the resulting
// precision-recall steps: the sum of precision at each true positive divided
// by the number of ground-truth intervals.
//
// Returns nullopt when the class has no ground-truth intervals; such classes
// do not participate in the mean.
inline std::optional<double> ap_single_class(std::vector<Detection> dets,
                                             const std::map<std::string, std::vector<Interval>>& gt,
                                             double tiou_threshold) {
    std::size_t total_gt = 0;
    for (const auto& [vid, segs] : gt) total_gt += segs.size();
    if (total_gt == 0) return std::nullopt;

    std::sort(dets.begin(), dets.end(), detection_rank_less);

    std::map<std::string, std::vector<bool>> claimed;
    for (const auto& [vid, segs] : gt) claimed[vid].assign(segs.size(), false);

    double precision_sum = 0.0;
    std::size_t tp = 0;
    for (std::size_t rank = 0; rank < dets.size(); ++rank) {
        const Detection& d = dets[rank];
        auto it = gt.find(d.video_id);
        bool matched = false;
        if (it != gt.end()) {
            const auto& segs = it->second;
            auto& flags = claimed[d.video_id];
            int best = -1;
            double best_tiou = 0.0;
            for (std::size_t i = 0; i < segs.size(); ++i) {
                if (flags[i]) continue;
                const double v = tiou(d.seg, segs[i]);
                if (v > best_tiou) { // strict: equal tIoU keeps the earlier interval
                    best_tiou = v;
                    best = static_cast<int>(i);
                }
            }
            if (best >= 0 && best_tiou >= tiou_threshold) {
                flags[static_cast<std::size_t>(best)] = true;
                matched = true;
            }
        }
        if (matched) {
            ++tp;
            precision_sum += static_cast<double>(tp) / static_cast<double>(rank + 1);
        }
    }
    return precision_sum / static_cast<double>(total_gt);
}

struct MapResult {
    std::vector<double> tiou_thresholds;    // kTiouThresholds
    std::vector<std::vector<double>> ap;    // [threshold][class id], NaN for classes with no gt
    std::vector<double> map_per_threshold;  // mean of AP over classes that have gt
    int classes_evaluated = 0;              // classes with at least one gt interval
    double avg_map = 0.0;                   // mean of map_per_threshold
};

namespace detail {

// Per-class ground truth and detections pulled out of the dataset shapes.
struct ClassIndex {
    std::vector<std::map<std::string, std::vector<Interval>>> gt;  // [class id]
    std::vector<std::vector<Detection>> dets;                      // [class id]
};

inline ClassIndex build_class_index(const DatasetSplit& gt, const std::vector<PredictedSceneSet>& preds,
                                    const Taxonomy& tax) {
    std::set<std::string> gt_ids;
    for (const auto& ann : gt.annotations) gt_ids.insert(ann.video_id);
    std::set<std::string> pred_ids;
    for (const auto& p : preds) {
        if (gt_ids.find(p.video_id) == gt_ids.end())
            throw ValidationError("predictions reference unknown video '" + p.video_id + "'");
        if (!pred_ids.insert(p.video_id).second)
            throw ValidationError("duplicate predictions for video '" + p.video_id + "'");
    }

    ClassIndex index;
    const auto n = static_cast<std::size_t>(tax.num_classes());
    index.gt.resize(n);
    index.dets.resize(n);
    for (const auto& ann : gt.annotations) {
        for (const auto& s : ann.scenes) {
            for (int id : s.labels) {
                if (!tax.valid_class_id(id))
                    throw ValidationError("video '" + ann.video_id + "': unknown class id " + std::to_string(id));
                index.gt[static_cast<std::size_t>(id)][ann.video_id].push_back({s.start_s, s.end_s});
            }
        }
    }
    for (const auto& p : preds) {
        for (const auto& seg : p.segments) {
            for (const auto& [id, score] : seg.scores) {
                if (!tax.valid_class_id(id))
                    throw ValidationError("video '" + p.video_id + "': unknown class id " + std::to_string(id));
                index.dets[static_cast<std::size_t>(id)].push_back({p.video_id, {seg.start_s, seg.end_s}, score});
            }
        }
    }
    return index;
}

} // namespace detail

// Mean average precision over classes, averaged over the tIoU threshold grid.
// Classes with no ground-truth interval anywhere in the split are skipped.
inline MapResult avg_map(const DatasetSplit& gt, const std::vector<PredictedSceneSet>& preds,
                         const Taxonomy& tax) {
    const detail::ClassIndex index = detail::build_class_index(gt, preds, tax);
    const auto n = static_cast<std::size_t>(tax.num_classes());

    MapResult r;
    r.tiou_thresholds.assign(kTiouThresholds.begin(), kTiouThresholds.end());
    r.ap.assign(kTiouThresholds.size(), std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
    r.map_per_threshold.assign(kTiouThresholds.size(), 0.0);

    for (std::size_t c = 0; c < n; ++c)
        if (!index.gt[c].empty()) r.classes_evaluated++;
    if (r.classes_evaluated == 0) throw ValidationError("no ground-truth scenes carry any label");

    double threshold_sum = 0.0;
    for (std::size_t t = 0; t < kTiouThresholds.size(); ++t) {
        double class_sum = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const auto ap = ap_single_class(index.dets[c], index.gt[c], kTiouThresholds[t]);
            if (!ap) continue;
            r.ap[t][c] = *ap;
            class_sum += *ap;
        }
        r.map_per_threshold[t] = class_sum / static_cast<double>(r.classes_evaluated);
        threshold_sum += r.map_per_threshold[t];
    }
    r.avg_map = threshold_sum / static_cast<double>(kTiouThresholds.size());
    return r;
}

// ---------------------------------------------------------------------------
// Boundary F1
// ---------------------------------------------------------------------------

// ascending_time: walk predictions in time order; each claims the nearest
// not-yet-claimed ground-truth boundary within tolerance (tie to the earlier
// one). nearest_pair_first: repeatedly claim the globally closest unclaimed
// pair instead; kept for comparison experiments.
enum class MatchMode { ascending_time, nearest_pair_first };

struct MatchCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

inline MatchCounts boundary_match(std::vector<double> gt, std::vector<double> pred, double tol,
                                  MatchMode mode = MatchMode::ascending_time) {
    if (!(tol >= 0.0)) throw std::invalid_argument("boundary_match: tolerance must be non-negative");
    std::sort(gt.begin(), gt.end());
    std::sort(pred.begin(), pred.end());
    std::vector<bool> gt_claimed(gt.size(), false);
    std::int64_t tp = 0;

    if (mode == MatchMode::ascending_time) {
        for (double p : pred) {
            int best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < gt.size(); ++i) {
                if (gt_claimed[i]) continue;
                const double d = std::abs(gt[i] - p);
                if (d < best_d) { // strict: ties keep the earlier boundary
                    best_d = d;
                    best = static_cast<int>(i);
                }
            }
            if (best >= 0 && best_d <= tol) { // tolerance is inclusive
                gt_claimed[static_cast<std::size_t>(best)] = true;
                ++tp;
            }
        }
    } else {
        struct Pair {
            double d;
            std::size_t g, p;
        };
        std::vector<Pair> pairs;
        for (std::size_t g = 0; g < gt.size(); ++g)
            for (std::size_t p = 0; p < pred.size(); ++p) {
                const double d = std::abs(gt[g] - pred[p]);
                if (d <= tol) pairs.push_back({d, g, p});
            }
        std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
            if (a.d != b.d) return a.d < b.d;
            if (a.g != b.g) return a.g < b.g;
            return a.p < b.p;
        });
        std::vector<bool> pred_claimed(pred.size(), false);
        for (const auto& pr : pairs) {
            if (gt_claimed[pr.g] || pred_claimed[pr.p]) continue;
            gt_claimed[pr.g] = true;
            pred_claimed[pr.p] = true;
            ++tp;
        }
    }

    MatchCounts c;
    c.tp = tp;
    c.fp = static_cast<std::int64_t>(pred.size()) - tp;
    c.fn = static_cast<std::int64_t>(gt.size()) - tp;
    return c;
}

struct F1Result {
    std::vector<double> tolerances; // kBoundaryTolerances
    std::vector<MatchCounts> counts;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    double avg_f1 = 0.0;
};

namespace detail {

inline double safe_ratio(std::int64_t num, std::int64_t den) {
    if (den == 0) return 1.0; // nothing to find or nothing claimed counts as clean
    return static_cast<double>(num) / static_cast<double>(den);
}

inline double f1_from(const MatchCounts& c) {
    const double p = safe_ratio(c.tp, c.tp + c.fp);
    const double r = safe_ratio(c.tp, c.tp + c.fn);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

} // namespace detail

// Boundary F1 micro-averaged over videos: true/false positives and false
// negatives are summed across the split before forming precision and recall,
// then the per-tolerance F1 values are averaged. Videos without predictions
// contribute all their boundaries as false negatives.
inline F1Result avg_f1(const DatasetSplit& gt, const std::vector<PredictedSceneSet>& preds,
                       MatchMode mode = MatchMode::ascending_time) {
    std::map<std::string, const PredictedSceneSet*> by_id;
    std::set<std::string> gt_ids;
    for (const auto& ann : gt.annotations) gt_ids.insert(ann.video_id);
    for (const auto& p : preds) {
        if (gt_ids.find(p.video_id) == gt_ids.end())
            throw ValidationError("predictions reference unknown video '" + p.video_id + "'");
        if (!by_id.emplace(p.video_id, &p).second)
            throw ValidationError("duplicate predictions for video '" + p.video_id + "'");
    }

    F1Result r;
    r.tolerances.assign(kBoundaryTolerances.begin(), kBoundaryTolerances.end());
    r.counts.assign(kBoundaryTolerances.size(), {});

    for (const auto& ann : gt.annotations) {
        const std::vector<double> gt_b = internal_boundaries(ann);
        std::vector<double> pred_b;
        auto it = by_id.find(ann.video_id);
        if (it != by_id.end()) pred_b = predicted_boundaries(*it->second, ann.duration_s);
        for (std::size_t t = 0; t < kBoundaryTolerances.size(); ++t) {
            const MatchCounts c = boundary_match(gt_b, pred_b, kBoundaryTolerances[t], mode);
            r.counts[t].tp += c.tp;
            r.counts[t].fp += c.fp;
            r.counts[t].fn += c.fn;
        }
    }

    double sum = 0.0;
    for (const auto& c : r.counts) {
        r.precision.push_back(detail::safe_ratio(c.tp, c.tp + c.fp));
        r.recall.push_back(detail::safe_ratio(c.tp, c.tp + c.fn));
        r.f1.push_back(detail::f1_from(c));
        sum += r.f1.back();
    }
    r.avg_f1 = sum / static_cast<double>(kBoundaryTolerances.size());
    return r;
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct EvaluationReport {
    std::string split;
    int num_videos = 0;
    MapResult map;
    F1Result f1;
};

inline EvaluationReport evaluate(const DatasetSplit& gt, const std::vector<PredictedSceneSet>& preds,
                                 const Taxonomy& tax, MatchMode mode = MatchMode::ascending_time) {
    EvaluationReport rep;
    rep.split = gt.name;
    rep.num_videos = static_cast<int>(gt.annotations.size());
    rep.map = avg_map(gt, preds, tax);
    rep.f1 = avg_f1(gt, preds, mode);
    return rep;
}

inline json evaluation_report_to_json(const EvaluationReport& rep, const Taxonomy& tax) {
    json j;
    j["schema_version"] = 1;
    j["split"] = rep.split;
    j["num_videos"] = rep.num_videos;
    j["avg_map"] = rep.map.avg_map;
    j["avg_f1"] = rep.f1.avg_f1;
    j["classes_evaluated"] = rep.map.classes_evaluated;

    json per_tiou = json::array();
    for (std::size_t t = 0; t < rep.map.tiou_thresholds.size(); ++t) {
        json jt;
        jt["tiou"] = rep.map.tiou_thresholds[t];
        jt["map"] = rep.map.map_per_threshold[t];
        per_tiou.push_back(jt);
    }
    j["map_per_tiou"] = per_tiou;

    json per_tol = json::array();
    for (std::size_t t = 0; t < rep.f1.tolerances.size(); ++t) {
        json jt;
        jt["tolerance"] = rep.f1.tolerances[t];
        jt["tp"] = rep.f1.counts[t].tp;
        jt["fp"] = rep.f1.counts[t].fp;
        jt["fn"] = rep.f1.counts[t].fn;
        jt["precision"] = rep.f1.precision[t];
        jt["recall"] = rep.f1.recall[t];
        jt["f1"] = rep.f1.f1[t];
        per_tol.push_back(jt);
    }
    j["f1_per_tolerance"] = per_tol;

    // Per-class AP averaged over the threshold grid; null for skipped classes.
    json per_class = json::array();
    for (int c = 0; c < tax.num_classes(); ++c) {
        json jc;
        jc["id"] = c;
        jc["name"] = tax.classes[static_cast<std::size_t>(c)].name;
        double sum = 0.0;
        bool has = true;
        for (std::size_t t = 0; t < rep.map.tiou_thresholds.size(); ++t) {
            const double v = rep.map.ap[t][static_cast<std::size_t>(c)];
            if (std::isnan(v)) {
                has = false;
                break;
            }
            sum += v;
        }
        if (has)
            jc["avg_ap"] = sum / static_cast<double>(rep.map.tiou_thresholds.size());
        else
            jc["avg_ap"] = nullptr;
        per_class.push_back(jc);
    }
    j["per_class"] = per_class;
    return j;
}

inline std::string evaluation_report_to_csv(const EvaluationReport& rep) {
    std::ostringstream out;
    out << "metric,threshold,value\n";
    auto num = [](double x) {
        // route through the JSON renderer so CSV and JSON print doubles identically
        return json(x).dump();
    };
    out << "avg_map,," << num(rep.map.avg_map) << '\n';
    out << "avg_f1,," << num(rep.f1.avg_f1) << '\n';
    for (std::size_t t = 0; t < rep.map.tiou_thresholds.size(); ++t)
        out << "map," << num(rep.map.tiou_thresholds[t]) << ',' << num(rep.map.map_per_threshold[t]) << '\n';
    for (std::size_t t = 0; t < rep.f1.tolerances.size(); ++t)
        out << "f1," << num(rep.f1.tolerances[t]) << ',' << num(rep.f1.f1[t]) << '\n';
    return out.str();
}

} // namespace sceneseg
