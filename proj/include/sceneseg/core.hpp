#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sceneseg/errors.hpp"

// Domain types for multi-label temporal scene segmentation.
//
// A video is partitioned into scenes: contiguous, gap-free intervals, each
// carrying a non-empty set of class labels drawn from a three-group taxonomy.
// Predictions are scored, non-overlapping segments. All types are immutable
// value types once built and safe to share across threads.

namespace sceneseg {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

struct ClassLabel {
    int id = 0;
    std::string name;
    int group = 0;                        // index into Taxonomy::groups
    std::vector<std::string> path;        // hierarchy chain ending in `name`, depth 1..3
    std::optional<int> exclusion_group;   // classes sharing a value are mutually
                                          // exclusive within one video
};

struct Taxonomy {
    std::vector<std::string> groups;
    std::vector<ClassLabel> classes;

    int num_classes() const { return static_cast<int>(classes.size()); }

    std::vector<int> group_sizes() const {
        std::vector<int> sizes(groups.size(), 0);
        for (const auto& c : classes) sizes[static_cast<std::size_t>(c.group)]++;
        return sizes;
    }

    bool valid_class_id(int id) const { return id >= 0 && id < num_classes(); }
};

// Checks the structural invariants: dense unique ids, valid group indices,
// path depth in 1..3 with the class name as the last element.
inline void check_taxonomy(const Taxonomy& tax) {
    const int n = tax.num_classes();
    if (n == 0) throw ValidationError("taxonomy: no classes");
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (const auto& c : tax.classes) {
        if (c.id < 0 || c.id >= n)
            throw ValidationError("taxonomy: class id " + std::to_string(c.id) + " not dense in 0.." +
                                  std::to_string(n - 1));
        if (seen[static_cast<std::size_t>(c.id)])
            throw ValidationError("taxonomy: duplicate class id " + std::to_string(c.id));
        seen[static_cast<std::size_t>(c.id)] = true;
        if (c.group < 0 || c.group >= static_cast<int>(tax.groups.size()))
            throw ValidationError("taxonomy: class '" + c.name + "' has invalid group index");
        if (c.path.empty() || c.path.size() > 3)
            throw ValidationError("taxonomy: class '" + c.name + "' path depth must be 1..3");
        if (c.path.back() != c.name)
            throw ValidationError("taxonomy: class '" + c.name + "' path must end with the class name");
    }
}

inline json taxonomy_to_json(const Taxonomy& tax) {
    json j;
    j["schema_version"] = 1;
    j["groups"] = tax.groups;
    json classes = json::array();
    for (const auto& c : tax.classes) {
        json jc;
        jc["id"] = c.id;
        jc["name"] = c.name;
        jc["group"] = c.group;
        jc["path"] = c.path;
        if (c.exclusion_group) jc["exclusion_group"] = *c.exclusion_group;
        classes.push_back(jc);
    }
    j["classes"] = classes;
    return j;
}

inline Taxonomy taxonomy_from_json(const json& j) {
    Taxonomy tax;
    try {
        tax.groups = j.at("groups").get<std::vector<std::string>>();
        for (const auto& jc : j.at("classes")) {
            ClassLabel c;
            c.id = jc.at("id").get<int>();
            c.name = jc.at("name").get<std::string>();
            c.group = jc.at("group").get<int>();
            c.path = jc.at("path").get<std::vector<std::string>>();
            if (jc.contains("exclusion_group")) c.exclusion_group = jc.at("exclusion_group").get<int>();
            tax.classes.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("taxonomy: ") + e.what());
    }
    std::sort(tax.classes.begin(), tax.classes.end(),
              [](const ClassLabel& a, const ClassLabel& b) { return a.id < b.id; });
    check_taxonomy(tax);
    return tax;
}

inline Taxonomy parse_taxonomy(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("taxonomy: ") + e.what());
    }
    return taxonomy_from_json(j);
}

// Bundled default taxonomy: 82 classes over the three groups with sizes
// 25 / 34 / 23. Class names are placeholders representative of the ads
// domain; real deployments load their own taxonomy file.
Taxonomy default_taxonomy();

// ---------------------------------------------------------------------------
// Annotations and predictions
// ---------------------------------------------------------------------------

struct Scene {
    double start_s = 0.0;
    double end_s = 0.0;
    std::vector<int> labels; // sorted, unique, non-empty
};

struct VideoAnnotation {
    std::string video_id;
    double duration_s = 0.0;
    std::vector<Scene> scenes; // exact partition of [0, duration_s]
};

struct PredictedScene {
    double start_s = 0.0;
    double end_s = 0.0;
    std::map<int, double> scores; // class id -> confidence in [0, 1]; absent = 0
};

struct PredictedSceneSet {
    std::string video_id;
    std::vector<PredictedScene> segments; // sorted by start, pairwise non-overlapping
};

struct DatasetSplit {
    std::string name; // train / val / test
    std::vector<VideoAnnotation> annotations;
};

struct ShotBoundarySet {
    std::string video_id;
    std::vector<double> boundaries; // interior shot cuts, strictly increasing
};

// ---------------------------------------------------------------------------
// Interval arithmetic
// ---------------------------------------------------------------------------

struct Interval {
    double start_s = 0.0;
    double end_s = 0.0;
};

// Temporal intersection-over-union of two positive-length intervals.
// Symmetric, 1 iff identical, 0 when disjoint.
inline double tiou(const Interval& a, const Interval& b) {
    if (!(a.end_s > a.start_s) || !(b.end_s > b.start_s))
        throw std::invalid_argument("tiou: intervals must have positive length");
    const double inter = std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
    const double uni = (a.end_s - a.start_s) + (b.end_s - b.start_s) - inter;
    return inter / uni;
}

// The k-1 interior cut points of a k-scene partition. The video start and end
// are not boundaries: every method knows them for free.
inline std::vector<double> internal_boundaries(const VideoAnnotation& ann) {
    std::vector<double> cuts;
    for (std::size_t i = 1; i < ann.scenes.size(); ++i) cuts.push_back(ann.scenes[i].start_s);
    return cuts;
}

// Interior cut points of a prediction: all segment endpoints strictly inside
// (0, duration of coverage). For partition-shaped predictions this equals
// internal_boundaries of the matching annotation.
inline std::vector<double> predicted_boundaries(const PredictedSceneSet& pred, double duration_s) {
    std::set<double> cuts;
    for (const auto& seg : pred.segments) {
        if (seg.start_s > 0.0 && seg.start_s < duration_s) cuts.insert(seg.start_s);
        if (seg.end_s > 0.0 && seg.end_s < duration_s) cuts.insert(seg.end_s);
    }
    return {cuts.begin(), cuts.end()};
}

// ---------------------------------------------------------------------------
// Annotation validation
// ---------------------------------------------------------------------------

enum class ViolationKind {
    no_scenes,
    bad_duration,
    non_positive_scene,
    out_of_order,
    gap,
    overlap,
    start_not_zero,
    end_mismatch,
    empty_labels,
    unknown_label,
    exclusion_conflict,
};

inline const char* violation_kind_name(ViolationKind k) {
    switch (k) {
        case ViolationKind::no_scenes: return "no_scenes";
        case ViolationKind::bad_duration: return "bad_duration";
        case ViolationKind::non_positive_scene: return "non_positive_scene";
        case ViolationKind::out_of_order: return "out_of_order";
        case ViolationKind::gap: return "gap";
        case ViolationKind::overlap: return "overlap";
        case ViolationKind::start_not_zero: return "start_not_zero";
        case ViolationKind::end_mismatch: return "end_mismatch";
        case ViolationKind::empty_labels: return "empty_labels";
        case ViolationKind::unknown_label: return "unknown_label";
        case ViolationKind::exclusion_conflict: return "exclusion_conflict";
    }
    return "unknown";
}

struct Violation {
    ViolationKind kind;
    std::string message;
};

struct ValidationReport {
    std::string video_id;
    std::vector<Violation> violations;

    bool valid() const { return violations.empty(); }
};

// Lints one annotation against the partition rules and the taxonomy.
// Problems are reported, never thrown. `tol` relaxes the exact-equality
// comparisons on parsed time values for lenient linting.
inline ValidationReport validate_annotation(const VideoAnnotation& ann, const Taxonomy& tax,
                                            double tol = 0.0) {
    ValidationReport report;
    report.video_id = ann.video_id;
    auto add = [&](ViolationKind kind, const std::string& msg) { report.violations.push_back({kind, msg}); };

    if (!(ann.duration_s > 0.0)) add(ViolationKind::bad_duration, "duration must be positive");
    if (ann.scenes.empty()) {
        add(ViolationKind::no_scenes, "video has no scenes");
        return report;
    }

    for (std::size_t i = 0; i < ann.scenes.size(); ++i) {
        const Scene& s = ann.scenes[i];
        const std::string where = "scene " + std::to_string(i);
        if (!(s.end_s - s.start_s > tol))
            add(ViolationKind::non_positive_scene, where + " has non-positive length");
        if (s.labels.empty()) add(ViolationKind::empty_labels, where + " has no labels");
        for (int id : s.labels) {
            if (!tax.valid_class_id(id))
                add(ViolationKind::unknown_label, where + " references unknown class id " + std::to_string(id));
        }
        if (i > 0) {
            const Scene& p = ann.scenes[i - 1];
            if (s.start_s < p.start_s) add(ViolationKind::out_of_order, where + " starts before its predecessor");
            const double joint = s.start_s - p.end_s;
            if (joint > tol)
                add(ViolationKind::gap, "gap of " + std::to_string(joint) + "s before " + where);
            else if (joint < -tol)
                add(ViolationKind::overlap, where + " overlaps its predecessor by " + std::to_string(-joint) + "s");
        }
    }
    if (std::abs(ann.scenes.front().start_s) > tol)
        add(ViolationKind::start_not_zero, "first scene does not start at 0");
    if (std::abs(ann.scenes.back().end_s - ann.duration_s) > tol)
        add(ViolationKind::end_mismatch, "last scene does not end at the video duration");

    // Mutual exclusion is a whole-video rule: two classes of one exclusion
    // group may not appear anywhere in the same video, even in different scenes.
    std::map<int, std::set<int>> present_by_group;
    for (const auto& s : ann.scenes) {
        for (int id : s.labels) {
            if (!tax.valid_class_id(id)) continue;
            const auto& cls = tax.classes[static_cast<std::size_t>(id)];
            if (cls.exclusion_group) present_by_group[*cls.exclusion_group].insert(id);
        }
    }
    for (const auto& [group, ids] : present_by_group) {
        if (ids.size() < 2) continue;
        std::string names;
        for (int id : ids) {
            if (!names.empty()) names += ", ";
            names += tax.classes[static_cast<std::size_t>(id)].name;
        }
        add(ViolationKind::exclusion_conflict,
            "mutually exclusive classes present in one video (exclusion group " + std::to_string(group) +
                "): " + names);
    }
    return report;
}

// Structural (taxonomy-free) subset of the prediction invariants; throws on
// the first violation. Used by the parsers and by decode-path assertions.
inline void check_prediction_set(const PredictedSceneSet& pred) {
    for (std::size_t i = 0; i < pred.segments.size(); ++i) {
        const auto& seg = pred.segments[i];
        if (!(seg.end_s > seg.start_s))
            throw ValidationError("video " + pred.video_id + ": segment " + std::to_string(i) +
                                  " has non-positive length");
        for (const auto& [id, score] : seg.scores) {
            if (id < 0) throw ValidationError("video " + pred.video_id + ": negative class id");
            if (!(score >= 0.0 && score <= 1.0) || !std::isfinite(score))
                throw ValidationError("video " + pred.video_id + ": score out of [0,1] for class " +
                                      std::to_string(id));
        }
        if (i > 0 && seg.start_s < pred.segments[i - 1].end_s)
            throw ValidationError("video " + pred.video_id + ": segments " + std::to_string(i - 1) + " and " +
                                  std::to_string(i) + " overlap");
    }
}

// Recasts an annotation as a prediction with the given confidence on every
// carried label. Scoring these against their own source must yield perfect
// metrics; tests and sanity checks rely on that.
inline PredictedSceneSet annotation_to_predictions(const VideoAnnotation& ann, double score = 1.0) {
    PredictedSceneSet pred;
    pred.video_id = ann.video_id;
    for (const auto& s : ann.scenes) {
        PredictedScene ps;
        ps.start_s = s.start_s;
        ps.end_s = s.end_s;
        for (int id : s.labels) ps.scores[id] = score;
        pred.segments.push_back(std::move(ps));
    }
    return pred;
}

inline std::vector<PredictedSceneSet> split_to_predictions(const DatasetSplit& split, double score = 1.0) {
    std::vector<PredictedSceneSet> preds;
    preds.reserve(split.annotations.size());
    for (const auto& ann : split.annotations) preds.push_back(annotation_to_predictions(ann, score));
    return preds;
}

// ---------------------------------------------------------------------------
// Default taxonomy definition
// ---------------------------------------------------------------------------

namespace detail {

struct DefaultClassSpec {
    const char* name;
    int group;
    const char* level2; // nullptr for depth-2 classes
    int exclusion = -1;
};

inline const std::vector<DefaultClassSpec>& default_class_table() {
    static const std::vector<DefaultClassSpec> table = {
        // presentation form (25)
        {"interview", 0, "shooting form"},
        {"street interview", 0, "shooting form"},
        {"multi-person sitcom", 0, "shooting form"},
        {"single-person monologue", 0, "shooting form"},
        {"vlog", 0, "shooting form"},
        {"product demonstration", 0, "shooting form"},
        {"tutorial demonstration", 0, "shooting form"},
        {"news report", 0, "shooting form"},
        {"documentary footage", 0, "shooting form"},
        {"live stream record", 0, "shooting form"},
        {"game footage", 0, "shooting form"},
        {"screen recording", 0, "shooting form"},
        {"live action", 0, "generation form", 1},
        {"animation", 0, "generation form", 1},
        {"cross cutting", 0, "generation form"},
        {"slide show", 0, "generation form"},
        {"split screen", 0, "generation form"},
        {"picture in picture", 0, "generation form"},
        {"stop motion", 0, "generation form"},
        {"time lapse", 0, "generation form"},
        {"text montage", 0, "generation form"},
        {"still photography", 0, nullptr},
        {"dubbing", 0, "audio form"},
        {"voice over narration", 0, "audio form"},
        {"background music only", 0, nullptr},
        // style (34)
        {"lovers", 1, "relationship"},
        {"friends", 1, "relationship"},
        {"family members", 1, "relationship"},
        {"colleagues", 1, "relationship"},
        {"teacher and student", 1, "relationship"},
        {"mother and child", 1, "relationship"},
        {"strangers", 1, "relationship"},
        {"family", 1, "theme"},
        {"teaching", 1, "theme"},
        {"romance", 1, "theme"},
        {"adventure", 1, "theme"},
        {"business", 1, "theme"},
        {"health", 1, "theme"},
        {"happy", 1, "emotion"},
        {"sad", 1, "emotion"},
        {"exciting", 1, "emotion"},
        {"relaxing", 1, "emotion"},
        {"tense", 1, "emotion"},
        {"warm", 1, "emotion"},
        {"humorous", 1, "emotion"},
        {"inspiring", 1, "emotion"},
        {"realistic", 1, "visual style"},
        {"cartoon", 1, "visual style"},
        {"retro", 1, "visual style"},
        {"modern", 1, "visual style"},
        {"luxurious", 1, "visual style"},
        {"minimalist", 1, "visual style"},
        {"fresh", 1, "visual style"},
        {"dark", 1, "visual style"},
        {"fast paced", 1, "pacing", 2},
        {"slow paced", 1, "pacing", 2},
        {"rhythmic", 1, "pacing"},
        {"montage paced", 1, "pacing"},
        {"steady", 1, "pacing"},
        // place (23)
        {"office", 2, "working place"},
        {"factory", 2, "working place"},
        {"construction site", 2, "working place"},
        {"farm", 2, "working place"},
        {"laboratory", 2, "working place"},
        {"studio", 2, "working place"},
        {"living room", 2, "home"},
        {"bedroom", 2, "home"},
        {"kitchen", 2, "home"},
        {"bathroom", 2, "home"},
        {"dining room", 2, "home"},
        {"street", 2, "public place"},
        {"shopping mall", 2, "public place"},
        {"restaurant", 2, "public place"},
        {"school", 2, "public place"},
        {"hospital", 2, "public place"},
        {"gym", 2, "public place"},
        {"park", 2, "public place"},
        {"supermarket", 2, "public place"},
        {"beach", 2, "nature"},
        {"mountain", 2, "nature"},
        {"forest", 2, "nature"},
        {"car interior", 2, "transport"},
    };
    return table;
}

} // namespace detail

inline Taxonomy default_taxonomy() {
    Taxonomy tax;
    tax.groups = {"presentation form", "style", "place"};
    int id = 0;
    for (const auto& spec : detail::default_class_table()) {
        ClassLabel c;
        c.id = id++;
        c.name = spec.name;
        c.group = spec.group;
        if (spec.level2)
            c.path = {tax.groups[static_cast<std::size_t>(spec.group)], spec.level2, spec.name};
        else
            c.path = {tax.groups[static_cast<std::size_t>(spec.group)], spec.name};
        if (spec.exclusion >= 0) c.exclusion_group = spec.exclusion;
        tax.classes.push_back(std::move(c));
    }
    check_taxonomy(tax);
    return tax;
}

} // namespace sceneseg
