#include "sceneseg/io.hpp"
#include "sceneseg/synth.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace sceneseg;
using Catch::Approx;

namespace {

const char* kTwoVideoDoc = R"({
  "schema_version": 1,
  "split": "demo",
  "videos": [
    {
      "video_id": "a",
      "duration": 10.0,
      "scenes": [
        {"start": 0.0, "end": 4.0, "labels": [1, 3]},
        {"start": 4.0, "end": 10.0, "labels": [2]}
      ]
    },
    {
      "video_id": "b",
      "duration": 9.0,
      "scenes": [
        {"start": 0.0, "end": 3.0, "labels": [0]},
        {"start": 3.0, "end": 6.0, "labels": [5]},
        {"start": 6.0, "end": 9.0, "labels": [0, 5]}
      ]
    }
  ]
})";

} // namespace

TEST_CASE("annotations parse and re-serialize losslessly") {
    const DatasetSplit split = parse_annotations(kTwoVideoDoc);
    REQUIRE(split.annotations.size() == 2);
    CHECK(split.name == "demo");
    int scenes = 0;
    for (const auto& a : split.annotations) scenes += static_cast<int>(a.scenes.size());
    CHECK(scenes == 5);

    const std::string once = render_json(annotations_to_json(split));
    CHECK(render_json(annotations_to_json(parse_annotations(once))) == once);
}

TEST_CASE("annotation parsing rejects malformed documents") {
    SECTION("missing schema version") {
        CHECK_THROWS_AS(parse_annotations(R"({"split":"x","videos":[]})"), ParseError);
    }
    SECTION("unsupported schema version") {
        CHECK_THROWS_AS(parse_annotations(R"({"schema_version":2,"split":"x","videos":[]})"), ParseError);
    }
    SECTION("not json at all") {
        CHECK_THROWS_AS(parse_annotations("not json"), ParseError);
    }
    SECTION("empty video list is a valid empty split") {
        CHECK(parse_annotations(R"({"schema_version":1,"split":"x","videos":[]})").annotations.empty());
    }
    SECTION("strict mode rejects a gap") {
        const char* doc = R"({"schema_version":1,"split":"x","videos":[
            {"video_id":"v","duration":7.0,"scenes":[
                {"start":0.0,"end":3.0,"labels":[1]},
                {"start":4.0,"end":7.0,"labels":[2]}]}]})";
        CHECK_THROWS_AS(parse_annotations(doc), ValidationError);
        CHECK(parse_annotations(doc, /*strict=*/false).annotations.size() == 1);
    }
    SECTION("duplicate video ids are rejected") {
        const char* doc = R"({"schema_version":1,"split":"x","videos":[
            {"video_id":"v","duration":2.0,"scenes":[{"start":0.0,"end":2.0,"labels":[1]}]},
            {"video_id":"v","duration":2.0,"scenes":[{"start":0.0,"end":2.0,"labels":[1]}]}]})";
        CHECK_THROWS_AS(parse_annotations(doc), ValidationError);
    }
}

TEST_CASE("prediction parsing enforces the submission rules") {
    SECTION("well-formed predictions round-trip") {
        const DatasetSplit split = parse_annotations(kTwoVideoDoc);
        const std::string once = render_json(predictions_to_json(split_to_predictions(split)));
        CHECK(render_json(predictions_to_json(parse_predictions(once))) == once);
    }
    SECTION("overlapping segments are rejected and name the video") {
        const char* doc = R"({"schema_version":1,"videos":[
            {"video_id":"vid7","segments":[
                {"start":0.0,"end":5.0,"scores":{"1":0.9}},
                {"start":4.0,"end":9.0,"scores":{"2":0.8}}]}]})";
        CHECK_THROWS_WITH(parse_predictions(doc), Catch::Matchers::ContainsSubstring("vid7"));
    }
    SECTION("scores outside the unit interval are rejected") {
        const char* doc = R"({"schema_version":1,"videos":[
            {"video_id":"v","segments":[{"start":0.0,"end":5.0,"scores":{"1":1.5}}]}]})";
        CHECK_THROWS_AS(parse_predictions(doc), ValidationError);
    }
    SECTION("non-numeric score keys are rejected") {
        const char* doc = R"({"schema_version":1,"videos":[
            {"video_id":"v","segments":[{"start":0.0,"end":5.0,"scores":{"abc":0.5}}]}]})";
        CHECK_THROWS_AS(parse_predictions(doc), ParseError);
    }
    SECTION("segments are sorted by start on parse") {
        const char* doc = R"({"schema_version":1,"videos":[
            {"video_id":"v","segments":[
                {"start":5.0,"end":9.0,"scores":{"1":0.9}},
                {"start":0.0,"end":5.0,"scores":{"2":0.8}}]}]})";
        const auto preds = parse_predictions(doc);
        REQUIRE(preds.size() == 1);
        CHECK(preds[0].segments[0].start_s == 0.0);
        CHECK(preds[0].segments[1].start_s == 5.0);
    }
}

TEST_CASE("shot boundary parsing") {
    SECTION("boundaries must increase strictly") {
        const char* doc = R"({"schema_version":1,"videos":[{"video_id":"v","boundaries":[2.0,2.0]}]})";
        CHECK_THROWS_AS(parse_shots(doc), ValidationError);
    }
    SECTION("round trip") {
        std::vector<ShotBoundarySet> shots{{"v", {1.5, 3.25}}};
        const std::string once = render_json(shots_to_json(shots));
        const auto back = parse_shots(once);
        REQUIRE(back.size() == 1);
        CHECK(back[0].boundaries == shots[0].boundaries);
    }
}

TEST_CASE("snapping moves boundaries onto nearby shot cuts") {
    DatasetSplit split;
    split.name = "s";
    VideoAnnotation ann;
    ann.video_id = "v";
    ann.duration_s = 20.0;
    ann.scenes.push_back({0.0, 10.07, {1}});
    ann.scenes.push_back({10.07, 20.0, {2}});
    split.annotations.push_back(ann);

    SECTION("within eps the boundary snaps") {
        const SnapResult r = snap_to_shots(split, {{"v", {10.00}}}, 0.1);
        REQUIRE(r.changes.size() == 1);
        CHECK(r.changes[0].from_s == 10.07);
        CHECK(r.changes[0].to_s == 10.00);
        CHECK(r.split.annotations[0].scenes[0].end_s == 10.00);
        CHECK(r.split.annotations[0].scenes[1].start_s == 10.00);
    }
    SECTION("outside eps nothing moves") {
        const SnapResult r = snap_to_shots(split, {{"v", {10.30}}}, 0.1);
        CHECK(r.changes.empty());
        CHECK(r.split.annotations[0].scenes[0].end_s == 10.07);
    }
    SECTION("equidistant cuts resolve to the earlier one") {
        // a true tie needs exactly representable distances: 1/16 s offsets
        // around a boundary at 10.0 stay equidistant in doubles
        DatasetSplit tie;
        tie.name = "s";
        VideoAnnotation t;
        t.video_id = "v";
        t.duration_s = 20.0;
        t.scenes.push_back({0.0, 10.0, {1}});
        t.scenes.push_back({10.0, 20.0, {2}});
        tie.annotations.push_back(t);
        const SnapResult r = snap_to_shots(tie, {{"v", {9.9375, 10.0625}}}, 0.1);
        REQUIRE(r.changes.size() == 1);
        CHECK(r.changes[0].to_s == 9.9375);
    }
}

TEST_CASE("snapping refuses moves that break the partition") {
    DatasetSplit split;
    split.name = "s";
    VideoAnnotation ann;
    ann.video_id = "v";
    ann.duration_s = 10.0;
    ann.scenes.push_back({0.0, 4.93, {1}});
    ann.scenes.push_back({4.93, 5.0, {2}});
    ann.scenes.push_back({5.0, 10.0, {1}});
    split.annotations.push_back(ann);

    // 4.90 is within eps of boundary 5.0 but sits before the previous
    // boundary 4.93: accepting it would give the middle scene negative length.
    const SnapResult r = snap_to_shots(split, {{"v", {4.90}}}, 0.1);
    bool moved_to_490 = false;
    for (const auto& ch : r.changes) moved_to_490 |= (ch.to_s == 4.90 && ch.from_s == 5.0);
    CHECK_FALSE(moved_to_490);
    CHECK_FALSE(r.warnings.empty());
    CHECK(r.split.annotations[0].scenes[1].end_s == 5.0);
}

TEST_CASE("snapping is idempotent on a generated corpus") {
    SynthConfig cfg;
    cfg.num_videos = 25;
    cfg.seed = 5;
    const SynthCorpus corpus = gen_corpus(cfg, default_taxonomy());

    const SnapResult once = snap_to_shots(corpus.split, corpus.shots, 0.1);
    const SnapResult twice = snap_to_shots(once.split, corpus.shots, 0.1);
    CHECK(twice.changes.empty());
    CHECK(render_json(annotations_to_json(twice.split)) == render_json(annotations_to_json(once.split)));

    int scenes_before = 0, scenes_after = 0;
    for (const auto& a : corpus.split.annotations) scenes_before += static_cast<int>(a.scenes.size());
    for (const auto& a : once.split.annotations) scenes_after += static_cast<int>(a.scenes.size());
    CHECK(scenes_before == scenes_after);
    for (const auto& ch : once.changes) CHECK(std::abs(ch.to_s - ch.from_s) <= 0.1 + 1e-12);
    for (const auto& a : once.split.annotations) CHECK(validate_annotation(a, default_taxonomy()).valid());
}

TEST_CASE("dataset statistics") {
    const Taxonomy tax = default_taxonomy();

    SECTION("single scene, single label") {
        DatasetSplit split;
        split.name = "one";
        VideoAnnotation ann;
        ann.video_id = "v";
        ann.duration_s = 12.0;
        ann.scenes.push_back({0.0, 12.0, {7}});
        split.annotations.push_back(ann);

        const StatsReport r = dataset_stats(split, tax);
        CHECK(r.num_videos == 1);
        CHECK(r.num_scenes == 1);
        CHECK(r.mean_labels_per_scene == 1.0);
        CHECK(r.scene_count_per_class[7] == 1);
        CHECK(r.mean_duration_s == 12.0);
    }
    SECTION("per-class counts match a manual recount") {
        SynthConfig cfg;
        cfg.num_videos = 15;
        const SynthCorpus corpus = gen_corpus(cfg, tax);
        const StatsReport r = dataset_stats(corpus.split, tax);

        std::vector<std::int64_t> manual(static_cast<std::size_t>(tax.num_classes()), 0);
        int scenes = 0;
        for (const auto& a : corpus.split.annotations) {
            scenes += static_cast<int>(a.scenes.size());
            for (const auto& s : a.scenes)
                for (int id : s.labels) manual[static_cast<std::size_t>(id)]++;
        }
        CHECK(r.scene_count_per_class == manual);
        CHECK(r.num_scenes == scenes);
    }
    SECTION("all three formats render") {
        SynthConfig cfg;
        cfg.num_videos = 5;
        const SynthCorpus corpus = gen_corpus(cfg, tax);
        const StatsReport r = dataset_stats(corpus.split, tax);
        const auto j = stats_to_json(r, tax);
        CHECK(j.at("schema_version").get<int>() == 1);
        CHECK(j.at("num_videos").get<int>() == 5);
        CHECK_FALSE(stats_to_csv(r, tax).empty());
        CHECK_FALSE(stats_to_text(r).empty());
    }
}

TEST_CASE("file helpers raise io errors") {
    CHECK_THROWS_AS(read_text_file("/nonexistent/path/x.json"), IoError);
    CHECK_THROWS_AS(write_text_file("/nonexistent/dir/x.json", "x"), IoError);
}
