#include "sceneseg/decode.hpp"
#include "sceneseg/io.hpp"
#include "sceneseg/metrics.hpp"
#include "sceneseg/model.hpp"
#include "sceneseg/synth.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace sceneseg;
using Catch::Approx;

namespace {

FrameOutputs blank_outputs(int frames, int classes, double fps = 2.0) {
    FrameOutputs out;
    out.video_id = "v";
    out.fps = fps;
    out.duration_s = frames / fps;
    out.label_probs = Mat(frames, classes);
    out.boundary_prob.assign(static_cast<std::size_t>(frames), 0.0);
    out.offset_s.assign(static_cast<std::size_t>(frames), 0.0);
    return out;
}

} // namespace

TEST_CASE("frame count covers the duration with samples strictly inside") {
    CHECK(frame_count(10.0, 2.0) == 20);
    CHECK(frame_count(10.25, 2.0) == 21);
    CHECK(frame_count(0.1, 2.0) == 1);
    // The last sample k/fps must stay below the duration.
    for (double dur : {3.0, 7.5, 12.34, 0.6}) {
        const int t = frame_count(dur, 2.0);
        CHECK((t - 1) / 2.0 < dur);
        CHECK(t / 2.0 >= dur - 1e-9);
    }
}

TEST_CASE("no boundary probability means a single segment") {
    const FrameOutputs out = blank_outputs(20, 3);
    CHECK(pick_boundaries(out).empty());
    const auto segs = segments_from_boundaries({}, out.duration_s);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].start_s == 0.0);
    CHECK(segs[0].end_s == 10.0);
}

TEST_CASE("a single spike decodes to its refined time") {
    FrameOutputs out = blank_outputs(20, 3);
    out.boundary_prob[6] = 1.0;
    out.offset_s[6] = 0.12;
    const auto picks = pick_boundaries(out);
    REQUIRE(picks.size() == 1);
    CHECK(picks[0].frame == 6);
    CHECK(picks[0].time_s == Approx(3.12).margin(1e-12));
}

TEST_CASE("plateaus pick their leftmost sample") {
    FrameOutputs out = blank_outputs(20, 1);
    out.boundary_prob[8] = 0.9;
    out.boundary_prob[9] = 0.9;
    out.boundary_prob[10] = 0.9;
    const auto picks = pick_boundaries(out);
    REQUIRE(picks.size() == 1);
    CHECK(picks[0].frame == 8);
}

TEST_CASE("suppression keeps the stronger of two close peaks") {
    FrameOutputs out = blank_outputs(20, 1);
    out.boundary_prob[8] = 0.7;
    out.boundary_prob[9] = 0.0; // separate local maxima
    out.boundary_prob[10] = 0.9;

    SECTION("inside the window the weaker peak dies") {
        const auto picks = pick_boundaries(out); // 1 s window = 2 samples at fps 2
        REQUIRE(picks.size() == 1);
        CHECK(picks[0].frame == 10);
    }
    SECTION("a narrower window lets both survive") {
        PickOptions opt;
        opt.nms_window_s = 0.5;
        const auto picks = pick_boundaries(out, opt);
        CHECK(picks.size() == 2);
    }
    SECTION("equal probabilities keep the earlier peak") {
        out.boundary_prob[10] = 0.7;
        const auto picks = pick_boundaries(out);
        REQUIRE(picks.size() == 1);
        CHECK(picks[0].frame == 8);
    }
}

TEST_CASE("offset refinement is clamped to half a sample period") {
    FrameOutputs out = blank_outputs(20, 1);
    out.boundary_prob[6] = 1.0;
    out.offset_s[6] = 0.7; // far beyond the 0.25 s clamp at fps 2
    const auto picks = pick_boundaries(out);
    REQUIRE(picks.size() == 1);
    CHECK(picks[0].time_s == Approx(3.25).margin(1e-12));
}

TEST_CASE("picks leaving the open interval are dropped") {
    FrameOutputs out = blank_outputs(4, 1); // duration 2.0
    out.boundary_prob[0] = 1.0;
    out.offset_s[0] = -0.2; // 0.0 - 0.2 < 0
    const auto picks = pick_boundaries(out);
    CHECK(picks.empty());
}

TEST_CASE("segments_from_boundaries builds exact partitions") {
    const auto segs = segments_from_boundaries({3.0, 7.0}, 10.0);
    REQUIRE(segs.size() == 3);
    CHECK(segs[0].start_s == 0.0);
    CHECK(segs[0].end_s == 3.0);
    CHECK(segs[1].start_s == 3.0);
    CHECK(segs[1].end_s == 7.0);
    CHECK(segs[2].start_s == 7.0);
    CHECK(segs[2].end_s == 10.0);

    CHECK_THROWS_AS(segments_from_boundaries({-1.0}, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(segments_from_boundaries({10.0}, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(segments_from_boundaries({5.0, 5.0}, 10.0), std::invalid_argument);
}

TEST_CASE("segment labelling max-pools scores inside each segment") {
    FrameOutputs out = blank_outputs(20, 2);
    for (int t = 0; t < 20; ++t) {
        out.label_probs.at(t, 0) = t < 10 ? 0.9 : 0.1;
        out.label_probs.at(t, 1) = t < 10 ? 0.2 : 0.8;
    }

    SECTION("whole-video segment takes column maxima") {
        const auto pred = label_segments(out, {{0.0, 10.0}});
        REQUIRE(pred.segments.size() == 1);
        CHECK(pred.segments[0].scores.at(0) == 0.9);
        CHECK(pred.segments[0].scores.at(1) == 0.8);
    }
    SECTION("split segments pool their own halves") {
        const auto pred = label_segments(out, {{0.0, 5.0}, {5.0, 10.0}});
        CHECK(pred.segments[0].scores.at(0) == 0.9);
        CHECK(pred.segments[0].scores.at(1) == 0.2);
        CHECK(pred.segments[1].scores.at(0) == 0.1);
        CHECK(pred.segments[1].scores.at(1) == 0.8);
    }
    SECTION("a segment too short to contain a sample uses the nearest one") {
        const auto pred = label_segments(out, {{0.0, 5.1}, {5.1, 5.3}, {5.3, 10.0}});
        REQUIRE(pred.segments.size() == 3);
        // Midpoint 5.2 -> sample 10 (t=5.0) vs 11 (t=5.5): nearest is 10.
        CHECK(pred.segments[1].scores.at(1) == 0.8);
    }
    SECTION("a score floor drops weak labels") {
        const auto pred = label_segments(out, {{0.0, 10.0}}, 0.5);
        CHECK(pred.segments[0].scores.count(0) == 1);
        CHECK(pred.segments[0].scores.count(1) == 1);
        const auto strict = label_segments(out, {{0.0, 5.0}}, 0.5);
        CHECK(strict.segments[0].scores.count(1) == 0); // max 0.2 under the floor
    }
}

TEST_CASE("picks are stable under monotone rescaling above the threshold") {
    FrameOutputs out = blank_outputs(40, 1);
    Rng rng(7);
    for (auto& p : out.boundary_prob) p = rng.uniform(0.0, 1.0);
    const auto base = pick_boundaries(out);

    FrameOutputs scaled = out;
    for (auto& p : scaled.boundary_prob) p = p >= 0.5 ? 0.5 + 0.5 * (p - 0.5) * (p - 0.5) / 0.25 : 0.8 * p;
    const auto after = pick_boundaries(scaled);

    REQUIRE(after.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(after[i].frame == base[i].frame);
}

TEST_CASE("decoding recovers generated annotations exactly at zero noise") {
    SynthConfig cfg;
    cfg.num_videos = 10;
    cfg.seed = 9;
    cfg.feature_noise = 0.0;
    const Taxonomy tax = default_taxonomy();
    const SynthCorpus corpus = gen_corpus(cfg, tax);

    std::vector<PredictedSceneSet> decoded;
    for (const auto& out : corpus.ideal_outputs) decoded.push_back(decode_boundary(out));

    CHECK(avg_f1(corpus.split, decoded).avg_f1 == 1.0);
    CHECK(avg_map(corpus.split, decoded, tax).avg_map == 1.0);

    for (std::size_t v = 0; v < decoded.size(); ++v) {
        const auto gt_b = internal_boundaries(corpus.split.annotations[v]);
        const auto pred_b = predicted_boundaries(decoded[v], corpus.split.annotations[v].duration_s);
        REQUIRE(pred_b.size() == gt_b.size());
        for (std::size_t i = 0; i < gt_b.size(); ++i) CHECK(pred_b[i] == Approx(gt_b[i]).margin(1e-9));
    }
}

TEST_CASE("rasterized targets decode back to their boundaries") {
    SynthConfig cfg;
    cfg.num_videos = 10;
    cfg.seed = 13;
    const SynthCorpus corpus = gen_corpus(cfg, default_taxonomy());
    for (const auto& ann : corpus.split.annotations) {
        const RasterTargets targets = rasterize_targets(ann, 82, 2.0);
        FrameOutputs out = blank_outputs(targets.labels.rows, 82);
        out.duration_s = ann.duration_s;
        out.label_probs = targets.labels;
        out.boundary_prob = targets.boundary;
        out.offset_s = targets.offset_s;
        const auto times = pick_times(pick_boundaries(out));
        const auto gt_b = internal_boundaries(ann);
        REQUIRE(times.size() == gt_b.size());
        for (std::size_t i = 0; i < gt_b.size(); ++i) CHECK(std::abs(times[i] - gt_b[i]) <= 1e-9);
    }
}

TEST_CASE("framewise decoding merges runs of identical label sets") {
    SECTION("two homogeneous halves with disjoint labels") {
        FrameOutputs out = blank_outputs(20, 2);
        for (int t = 0; t < 20; ++t) out.label_probs.at(t, t < 10 ? 0 : 1) = 0.9;
        const auto r = framewise_threshold_decode(out);
        CHECK_FALSE(r.all_empty_fallback);
        REQUIRE(r.pred.segments.size() == 2);
        CHECK(r.pred.segments[0].end_s == Approx(5.0)); // transition at sample 10
        CHECK(r.pred.segments[0].scores.count(0) == 1);
        CHECK(r.pred.segments[1].scores.count(1) == 1);
    }
    SECTION("uniform labels give one segment") {
        FrameOutputs out = blank_outputs(20, 2);
        for (int t = 0; t < 20; ++t) out.label_probs.at(t, 0) = 0.8;
        const auto r = framewise_threshold_decode(out);
        CHECK(r.pred.segments.size() == 1);
    }
    SECTION("empty frames inherit their neighbours") {
        FrameOutputs out = blank_outputs(9, 2);
        for (int t = 0; t < 4; ++t) out.label_probs.at(t, 0) = 0.9;
        // frames 4..5 empty
        for (int t = 6; t < 9; ++t) out.label_probs.at(t, 1) = 0.9;
        const auto r = framewise_threshold_decode(out);
        REQUIRE(r.pred.segments.size() == 2);
        CHECK(r.pred.segments[0].end_s == Approx(3.0)); // empties joined the first run
    }
    SECTION("leading empty frames take the first real set") {
        FrameOutputs out = blank_outputs(8, 2);
        for (int t = 3; t < 8; ++t) out.label_probs.at(t, 1) = 0.9;
        const auto r = framewise_threshold_decode(out);
        REQUIRE(r.pred.segments.size() == 1);
        CHECK(r.pred.segments[0].scores.count(1) == 1);
    }
    SECTION("all-empty input falls back to one flagged segment") {
        FrameOutputs out = blank_outputs(8, 2);
        out.label_probs.at(3, 1) = 0.4; // below threshold everywhere
        const auto r = framewise_threshold_decode(out);
        CHECK(r.all_empty_fallback);
        REQUIRE(r.pred.segments.size() == 1);
        CHECK(r.pred.segments[0].scores.at(1) == 0.4); // column max as the score
    }
}

TEST_CASE("framewise decoding oversegments noisy inputs compared to peaks") {
    SynthConfig cfg;
    cfg.num_videos = 8;
    cfg.seed = 21;
    const SynthCorpus corpus = gen_corpus(cfg, default_taxonomy());
    int framewise_total = 0, boundary_total = 0;
    for (const auto& out : corpus.ideal_outputs) {
        framewise_total += static_cast<int>(framewise_threshold_decode(out).pred.segments.size());
        boundary_total += static_cast<int>(decode_boundary(out).segments.size());
    }
    CHECK(framewise_total >= boundary_total);
}

TEST_CASE("decoders always emit valid prediction sets") {
    SynthConfig cfg;
    cfg.num_videos = 6;
    cfg.seed = 33;
    const SynthCorpus corpus = gen_corpus(cfg, default_taxonomy());
    for (const auto& out : corpus.ideal_outputs) {
        CHECK_NOTHROW(check_prediction_set(decode_boundary(out)));
        CHECK_NOTHROW(check_prediction_set(framewise_threshold_decode(out).pred));
    }
}

TEST_CASE("decoding is deterministic") {
    SynthConfig cfg;
    cfg.num_videos = 4;
    cfg.seed = 55;
    const SynthCorpus corpus = gen_corpus(cfg, default_taxonomy());
    for (const auto& out : corpus.ideal_outputs) {
        const auto a = decode_boundary(out);
        const auto b = decode_boundary(out);
        CHECK(render_json(predictions_to_json({a})) == render_json(predictions_to_json({b})));
    }
}

TEST_CASE("outputs survive the binary container round trip") {
    SynthConfig cfg;
    cfg.num_videos = 2;
    cfg.seed = 77;
    const SynthCorpus corpus = gen_corpus(cfg, default_taxonomy());
    const FrameOutputs& out = corpus.ideal_outputs[0];

    const Container c = outputs_to_container(out);
    const Container back = decode_container(encode_container(c));
    FrameOutputs rec = outputs_from_container(back);
    rec.video_id = out.video_id;

    CHECK(rec.fps == out.fps);
    CHECK(rec.duration_s == out.duration_s);
    REQUIRE(rec.frames() == out.frames());
    REQUIRE(rec.classes() == out.classes());
    for (int t = 0; t < out.frames(); ++t) {
        CHECK(rec.boundary_prob[static_cast<std::size_t>(t)] ==
              static_cast<double>(static_cast<float>(out.boundary_prob[static_cast<std::size_t>(t)])));
        for (int j = 0; j < out.classes(); ++j)
            CHECK(rec.label_probs.at(t, j) == static_cast<double>(static_cast<float>(out.label_probs.at(t, j))));
    }
}

TEST_CASE("container parsing rejects malformed bytes") {
    CHECK_THROWS_AS(decode_container("garbage"), ParseError);
    SynthConfig cfg;
    cfg.num_videos = 1;
    const SynthCorpus corpus = gen_corpus(cfg, default_taxonomy());
    std::string bytes = encode_container(outputs_to_container(corpus.ideal_outputs[0]));
    SECTION("wrong magic") {
        bytes[0] = 'X';
        CHECK_THROWS_AS(decode_container(bytes), ParseError);
    }
    SECTION("truncated payload") {
        bytes.resize(bytes.size() - 4);
        CHECK_THROWS_AS(decode_container(bytes), ParseError);
    }
}
