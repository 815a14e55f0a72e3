#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sceneseg/core.hpp"
#include "sceneseg/errors.hpp"

// JSON document I/O for annotations, predictions and shot boundaries, plus
// shot snapping and dataset statistics.
//
// Document schemas (all carry "schema_version": 1):
//
//   annotations: {"schema_version", "split", "videos": [
//       {"video_id", "duration", "scenes": [{"start", "end", "labels": [int]}]}]}
//   predictions: {"schema_version", "videos": [
//       {"video_id", "segments": [{"start", "end", "scores": {"<class id>": p}}]}]}
//   shots:       {"schema_version", "videos": [{"video_id", "boundaries": [t]}]}
//
// Parsers come in strict and lenient flavours. Strict enforces the semantic
// invariants (exact partition, known ordering, score ranges) and throws
// ValidationError naming the offending video. Lenient only checks document
// structure so that broken files can still be loaded and linted.

namespace sceneseg {

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

inline json annotations_to_json(const DatasetSplit& split) {
    json j;
    j["schema_version"] = 1;
    j["split"] = split.name;
    json videos = json::array();
    for (const auto& ann : split.annotations) {
        json jv;
        jv["video_id"] = ann.video_id;
        jv["duration"] = ann.duration_s;
        json scenes = json::array();
        for (const auto& s : ann.scenes) {
            json js;
            js["start"] = s.start_s;
            js["end"] = s.end_s;
            js["labels"] = s.labels;
            scenes.push_back(js);
        }
        jv["scenes"] = scenes;
        videos.push_back(jv);
    }
    j["videos"] = videos;
    return j;
}

inline DatasetSplit annotations_from_json(const json& j, bool strict = true) {
    DatasetSplit split;
    try {
        if (j.at("schema_version").get<int>() != 1) throw ParseError("annotations: unsupported schema_version");
        split.name = j.value("split", "unnamed");
        for (const auto& jv : j.at("videos")) {
            VideoAnnotation ann;
            ann.video_id = jv.at("video_id").get<std::string>();
            ann.duration_s = jv.at("duration").get<double>();
            for (const auto& js : jv.at("scenes")) {
                Scene s;
                s.start_s = js.at("start").get<double>();
                s.end_s = js.at("end").get<double>();
                s.labels = js.at("labels").get<std::vector<int>>();
                std::sort(s.labels.begin(), s.labels.end());
                s.labels.erase(std::unique(s.labels.begin(), s.labels.end()), s.labels.end());
                ann.scenes.push_back(std::move(s));
            }
            split.annotations.push_back(std::move(ann));
        }
    } catch (const ParseError&) {
        throw;
    } catch (const json::exception& e) {
        throw ParseError(std::string("annotations: ") + e.what());
    }

    std::map<std::string, int> id_count;
    for (const auto& ann : split.annotations) id_count[ann.video_id]++;
    for (const auto& [id, n] : id_count)
        if (n > 1) throw ValidationError("annotations: duplicate video_id '" + id + "'");

    if (strict) {
        // Taxonomy-independent invariants only; label ids are checked against
        // a taxonomy by validate_annotation at the call site.
        Taxonomy open;
        open.groups = {"any"};
        open.classes.push_back({0, "any", 0, {"any"}, std::nullopt});
        for (const auto& ann : split.annotations) {
            VideoAnnotation shape = ann;
            for (auto& s : shape.scenes) s.labels = {0};
            const ValidationReport report = validate_annotation(shape, open);
            if (!report.valid())
                throw ValidationError("annotations: video '" + ann.video_id +
                                      "': " + report.violations.front().message);
            for (const auto& s : ann.scenes)
                if (s.labels.empty())
                    throw ValidationError("annotations: video '" + ann.video_id + "': scene has no labels");
        }
    }
    return split;
}

inline DatasetSplit parse_annotations(const std::string& text, bool strict = true) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("annotations: ") + e.what());
    }
    return annotations_from_json(j, strict);
}

// ---------------------------------------------------------------------------
// Predictions
// ---------------------------------------------------------------------------

inline json predictions_to_json(const std::vector<PredictedSceneSet>& preds) {
    json j;
    j["schema_version"] = 1;
    json videos = json::array();
    for (const auto& p : preds) {
        json jv;
        jv["video_id"] = p.video_id;
        json segs = json::array();
        for (const auto& seg : p.segments) {
            json js;
            js["start"] = seg.start_s;
            js["end"] = seg.end_s;
            json scores = json::object();
            for (const auto& [id, score] : seg.scores) scores[std::to_string(id)] = score;
            js["scores"] = scores;
            segs.push_back(js);
        }
        jv["segments"] = segs;
        videos.push_back(jv);
    }
    j["videos"] = videos;
    return j;
}

inline std::vector<PredictedSceneSet> predictions_from_json(const json& j, bool strict = true) {
    std::vector<PredictedSceneSet> preds;
    try {
        if (j.at("schema_version").get<int>() != 1) throw ParseError("predictions: unsupported schema_version");
        for (const auto& jv : j.at("videos")) {
            PredictedSceneSet p;
            p.video_id = jv.at("video_id").get<std::string>();
            for (const auto& js : jv.at("segments")) {
                PredictedScene seg;
                seg.start_s = js.at("start").get<double>();
                seg.end_s = js.at("end").get<double>();
                for (const auto& [key, value] : js.at("scores").items()) {
                    std::size_t pos = 0;
                    int id = std::stoi(key, &pos);
                    if (pos != key.size()) throw ParseError("predictions: non-numeric class id key '" + key + "'");
                    seg.scores[id] = value.get<double>();
                }
                p.segments.push_back(std::move(seg));
            }
            std::stable_sort(p.segments.begin(), p.segments.end(),
                             [](const PredictedScene& a, const PredictedScene& b) { return a.start_s < b.start_s; });
            preds.push_back(std::move(p));
        }
    } catch (const ParseError&) {
        throw;
    } catch (const std::invalid_argument&) {
        throw ParseError("predictions: non-numeric class id key");
    } catch (const json::exception& e) {
        throw ParseError(std::string("predictions: ") + e.what());
    }

    std::map<std::string, int> id_count;
    for (const auto& p : preds) id_count[p.video_id]++;
    for (const auto& [id, n] : id_count)
        if (n > 1) throw ValidationError("predictions: duplicate video_id '" + id + "'");

    if (strict)
        for (const auto& p : preds) check_prediction_set(p);
    return preds;
}

inline std::vector<PredictedSceneSet> parse_predictions(const std::string& text, bool strict = true) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("predictions: ") + e.what());
    }
    return predictions_from_json(j, strict);
}

// ---------------------------------------------------------------------------
// Shot boundaries
// ---------------------------------------------------------------------------

inline json shots_to_json(const std::vector<ShotBoundarySet>& shots) {
    json j;
    j["schema_version"] = 1;
    json videos = json::array();
    for (const auto& s : shots) {
        json jv;
        jv["video_id"] = s.video_id;
        jv["boundaries"] = s.boundaries;
        videos.push_back(jv);
    }
    j["videos"] = videos;
    return j;
}

inline std::vector<ShotBoundarySet> shots_from_json(const json& j, bool strict = true) {
    std::vector<ShotBoundarySet> shots;
    try {
        if (j.at("schema_version").get<int>() != 1) throw ParseError("shots: unsupported schema_version");
        for (const auto& jv : j.at("videos")) {
            ShotBoundarySet s;
            s.video_id = jv.at("video_id").get<std::string>();
            s.boundaries = jv.at("boundaries").get<std::vector<double>>();
            shots.push_back(std::move(s));
        }
    } catch (const ParseError&) {
        throw;
    } catch (const json::exception& e) {
        throw ParseError(std::string("shots: ") + e.what());
    }
    if (strict) {
        for (const auto& s : shots) {
            for (std::size_t i = 0; i < s.boundaries.size(); ++i) {
                if (!(s.boundaries[i] > 0.0))
                    throw ValidationError("shots: video '" + s.video_id + "': boundary must be positive");
                if (i > 0 && !(s.boundaries[i] > s.boundaries[i - 1]))
                    throw ValidationError("shots: video '" + s.video_id + "': boundaries must strictly increase");
            }
        }
    }
    return shots;
}

inline std::vector<ShotBoundarySet> parse_shots(const std::string& text, bool strict = true) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("shots: ") + e.what());
    }
    return shots_from_json(j, strict);
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("read failed on '" + path + "'");
    return buf.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("write failed on '" + path + "'");
}

// Canonical serialization used everywhere a document is written to disk:
// two-space indent and a trailing newline. Identical values produce
// byte-identical files.
inline std::string render_json(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Shot snapping
// ---------------------------------------------------------------------------

struct SnapChange {
    std::string video_id;
    int boundary_index = 0; // index into internal_boundaries order
    double from_s = 0.0;
    double to_s = 0.0;
};

struct SnapResult {
    DatasetSplit split;
    std::vector<SnapChange> changes;
    std::vector<std::string> warnings;
};

// Moves each interior scene boundary onto the nearest shot cut when one lies
// within `eps` seconds. Ties between two equidistant cuts go to the earlier
// one. A snap is rejected (with a warning) when it would break the strict
// ordering of boundaries; rejected boundaries keep their original time.
// Boundaries already on a cut do not move, so the operation is idempotent.
inline SnapResult snap_to_shots(const DatasetSplit& split, const std::vector<ShotBoundarySet>& shots,
                                double eps = 0.1) {
    SnapResult result;
    result.split = split;

    std::map<std::string, const ShotBoundarySet*> by_id;
    for (const auto& s : shots) by_id[s.video_id] = &s;

    for (auto& ann : result.split.annotations) {
        auto it = by_id.find(ann.video_id);
        if (it == by_id.end()) {
            result.warnings.push_back("video '" + ann.video_id + "': no shot boundaries, left unchanged");
            continue;
        }
        const std::vector<double>& cuts = it->second->boundaries;
        if (cuts.empty()) continue;

        const std::vector<double> original = internal_boundaries(ann);
        std::vector<double> snapped = original;
        for (std::size_t i = 0; i < original.size(); ++i) {
            const double b = original[i];
            // nearest cut, tie to the earlier one
            auto hi = std::lower_bound(cuts.begin(), cuts.end(), b);
            double best = 0.0;
            bool have = false;
            if (hi != cuts.begin()) {
                best = *(hi - 1);
                have = true;
            }
            if (hi != cuts.end()) {
                if (!have || std::abs(*hi - b) < std::abs(best - b)) best = *hi;
                have = true;
            }
            if (!have || std::abs(best - b) > eps) continue;
            if (best == b) continue;

            const double prev = (i == 0) ? 0.0 : snapped[i - 1];
            const double next = (i + 1 < original.size()) ? original[i + 1] : ann.duration_s;
            if (!(best > prev && best < next)) {
                result.warnings.push_back("video '" + ann.video_id + "': boundary " + std::to_string(i) +
                                          " not snapped, would collide with a neighbour");
                continue;
            }
            snapped[i] = best;
            result.changes.push_back({ann.video_id, static_cast<int>(i), b, best});
        }
        for (std::size_t i = 0; i < snapped.size(); ++i) {
            ann.scenes[i].end_s = snapped[i];
            ann.scenes[i + 1].start_s = snapped[i];
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Dataset statistics
// ---------------------------------------------------------------------------

struct StatsReport {
    std::string split;
    int num_videos = 0;
    int num_scenes = 0;
    double total_duration_s = 0.0;
    double mean_duration_s = 0.0;
    double mean_scenes_per_video = 0.0;
    double mean_scene_length_s = 0.0;
    double mean_labels_per_scene = 0.0;
    std::vector<std::int64_t> scene_count_per_class;  // indexed by class id
    std::vector<std::int64_t> label_count_per_group;  // indexed by group
};

inline StatsReport dataset_stats(const DatasetSplit& split, const Taxonomy& tax) {
    StatsReport r;
    r.split = split.name;
    r.num_videos = static_cast<int>(split.annotations.size());
    r.scene_count_per_class.assign(static_cast<std::size_t>(tax.num_classes()), 0);
    r.label_count_per_group.assign(tax.groups.size(), 0);

    std::int64_t total_labels = 0;
    for (const auto& ann : split.annotations) {
        r.total_duration_s += ann.duration_s;
        r.num_scenes += static_cast<int>(ann.scenes.size());
        for (const auto& s : ann.scenes) {
            total_labels += static_cast<std::int64_t>(s.labels.size());
            for (int id : s.labels) {
                if (!tax.valid_class_id(id)) continue;
                r.scene_count_per_class[static_cast<std::size_t>(id)]++;
                r.label_count_per_group[static_cast<std::size_t>(tax.classes[static_cast<std::size_t>(id)].group)]++;
            }
        }
    }
    if (r.num_videos > 0) {
        r.mean_duration_s = r.total_duration_s / r.num_videos;
        r.mean_scenes_per_video = static_cast<double>(r.num_scenes) / r.num_videos;
    }
    if (r.num_scenes > 0) {
        r.mean_scene_length_s = r.total_duration_s / r.num_scenes;
        r.mean_labels_per_scene = static_cast<double>(total_labels) / r.num_scenes;
    }
    return r;
}

inline json stats_to_json(const StatsReport& r, const Taxonomy& tax) {
    json j;
    j["schema_version"] = 1;
    j["split"] = r.split;
    j["num_videos"] = r.num_videos;
    j["num_scenes"] = r.num_scenes;
    j["total_duration_s"] = r.total_duration_s;
    j["mean_duration_s"] = r.mean_duration_s;
    j["mean_scenes_per_video"] = r.mean_scenes_per_video;
    j["mean_scene_length_s"] = r.mean_scene_length_s;
    j["mean_labels_per_scene"] = r.mean_labels_per_scene;
    json per_class = json::array();
    for (std::size_t i = 0; i < r.scene_count_per_class.size(); ++i) {
        json jc;
        jc["id"] = static_cast<int>(i);
        jc["name"] = tax.classes[i].name;
        jc["scenes"] = r.scene_count_per_class[i];
        per_class.push_back(jc);
    }
    j["classes"] = per_class;
    json per_group = json::array();
    for (std::size_t g = 0; g < r.label_count_per_group.size(); ++g) {
        json jg;
        jg["name"] = tax.groups[g];
        jg["labels"] = r.label_count_per_group[g];
        per_group.push_back(jg);
    }
    j["groups"] = per_group;
    return j;
}

inline std::string stats_to_csv(const StatsReport& r, const Taxonomy& tax) {
    std::ostringstream out;
    out << "class_id,class_name,group,scene_count\n";
    for (std::size_t i = 0; i < r.scene_count_per_class.size(); ++i) {
        const auto& c = tax.classes[i];
        out << c.id << ',' << c.name << ',' << tax.groups[static_cast<std::size_t>(c.group)] << ','
            << r.scene_count_per_class[i] << '\n';
    }
    return out.str();
}

inline std::string stats_to_text(const StatsReport& r) {
    std::ostringstream out;
    out << "split:                 " << r.split << '\n'
        << "videos:                " << r.num_videos << '\n'
        << "scenes:                " << r.num_scenes << '\n'
        << "total duration (s):    " << r.total_duration_s << '\n'
        << "mean duration (s):     " << r.mean_duration_s << '\n'
        << "mean scenes per video: " << r.mean_scenes_per_video << '\n'
        << "mean scene length (s): " << r.mean_scene_length_s << '\n'
        << "mean labels per scene: " << r.mean_labels_per_scene << '\n';
    return out.str();
}

} // namespace sceneseg
