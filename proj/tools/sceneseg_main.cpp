// sceneseg: command-line front end for the scene segmentation toolkit.
//
// Subcommands: evaluate, decode, validate, stats, synth, model-demo.
// Exit codes: 0 ok, 1 validation failure, 2 input error, 3 internal error.
// SCENESEG_THREADS caps per-video parallelism.

#include "sceneseg/decode.hpp"
#include "sceneseg/io.hpp"
#include "sceneseg/metrics.hpp"
#include "sceneseg/model.hpp"
#include "sceneseg/parallel.hpp"
#include "sceneseg/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sceneseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

Taxonomy load_taxonomy(const std::string& path) {
    if (path.empty()) return default_taxonomy();
    return parse_taxonomy(read_text_file(path));
}

// Shortest decimal form that parses back to the same double; matches the
// JSON/CSV reports so console output and files never disagree.
std::string num(double x) { return json(x).dump(); }

// ------------------------------------------------------------ feature files
// A features directory holds three containers per video:
//   <video_id>.frame.bin  <video_id>.audio.bin  <video_id>.text.bin
// An outputs directory holds one "outputs" container per video: <video_id>.bin

std::vector<std::string> list_with_suffix(const std::string& dir, const std::string& suffix) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

void write_features_dir(const std::string& dir, const std::vector<FeatureBundle>& features) {
    fs::create_directories(dir);
    for (const auto& fb : features) {
        const std::string base = (fs::path(dir) / fb.video_id).string();
        write_container_file(base + ".frame.bin", mat_to_container(fb.frame, "frame", fb.fps, fb.duration_s));
        write_container_file(base + ".audio.bin", mat_to_container(fb.audio, "audio", fb.fps, fb.duration_s));
        write_container_file(base + ".text.bin", mat_to_container(fb.text, "text", fb.fps, fb.duration_s));
    }
}

std::vector<FeatureBundle> read_features_dir(const std::string& dir) {
    std::vector<FeatureBundle> features;
    for (const std::string& id : list_with_suffix(dir, ".frame.bin")) {
        const std::string base = (fs::path(dir) / id).string();
        const Container cf = read_container_file(base + ".frame.bin");
        const Container ca = read_container_file(base + ".audio.bin");
        const Container ct = read_container_file(base + ".text.bin");
        if (cf.kind != "frame" || ca.kind != "audio" || ct.kind != "text")
            throw ParseError("features for '" + id + "': container kind mismatch");
        if (ca.fps != cf.fps || ca.duration_s != cf.duration_s)
            throw ParseError("features for '" + id + "': frame/audio metadata disagree");
        FeatureBundle fb;
        fb.video_id = id;
        fb.fps = cf.fps;
        fb.duration_s = cf.duration_s;
        fb.frame = container_to_mat(cf);
        fb.audio = container_to_mat(ca);
        fb.text = container_to_mat(ct);
        features.push_back(std::move(fb));
    }
    if (features.empty()) throw IoError("no *.frame.bin files under " + dir);
    return features;
}

void write_outputs_dir(const std::string& dir, const std::vector<FrameOutputs>& outputs) {
    fs::create_directories(dir);
    for (const auto& out : outputs)
        write_container_file((fs::path(dir) / (out.video_id + ".bin")).string(), outputs_to_container(out));
}

std::vector<FrameOutputs> read_outputs_dir(const std::string& dir) {
    std::vector<FrameOutputs> outputs;
    for (const std::string& id : list_with_suffix(dir, ".bin")) {
        const std::string path = (fs::path(dir) / (id + ".bin")).string();
        FrameOutputs out = outputs_from_container(read_container_file(path), path);
        out.video_id = id;
        outputs.push_back(std::move(out));
    }
    if (outputs.empty()) throw IoError("no *.bin files under " + dir);
    return outputs;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string gt, pred, taxonomy, out, f1_strategy = "ascending";
};

MatchMode parse_match_mode(const std::string& name) {
    if (name == "ascending") return MatchMode::ascending_time;
    if (name == "pair-first") return MatchMode::nearest_pair_first;
    throw ParseError("unknown f1 strategy '" + name + "' (expected ascending or pair-first)");
}

int cmd_evaluate(const EvaluateArgs& a) {
    const Taxonomy tax = load_taxonomy(a.taxonomy);
    const DatasetSplit gt = parse_annotations(read_text_file(a.gt));
    const std::vector<PredictedSceneSet> preds = parse_predictions(read_text_file(a.pred));
    const EvaluationReport rep = evaluate(gt, preds, tax, parse_match_mode(a.f1_strategy));

    std::printf("avg_map %s\n", num(rep.map.avg_map).c_str());
    std::printf("avg_f1  %s\n", num(rep.f1.avg_f1).c_str());
    std::printf("\n%-6s %s\n", "tIoU", "mAP");
    for (std::size_t i = 0; i < rep.map.tiou_thresholds.size(); ++i)
        std::printf("%-6.2f %s\n", rep.map.tiou_thresholds[i], num(rep.map.map_per_threshold[i]).c_str());
    std::printf("\n%-4s %-22s %-22s %-22s %6s %6s %6s\n", "tol", "f1", "precision", "recall", "tp", "fp", "fn");
    for (std::size_t i = 0; i < rep.f1.tolerances.size(); ++i) {
        const MatchCounts& mc = rep.f1.counts[i];
        std::printf("%-4.1f %-22s %-22s %-22s %6lld %6lld %6lld\n", rep.f1.tolerances[i], num(rep.f1.f1[i]).c_str(),
                    num(rep.f1.precision[i]).c_str(), num(rep.f1.recall[i]).c_str(), static_cast<long long>(mc.tp),
                    static_cast<long long>(mc.fp), static_cast<long long>(mc.fn));
    }
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        write_text_file((fs::path(a.out) / "report.json").string(), render_json(evaluation_report_to_json(rep, tax)));
        write_text_file((fs::path(a.out) / "report.csv").string(), evaluation_report_to_csv(rep));
    }
    return kExitOk;
}

// ------------------------------------------------------------------ decode

struct DecodeArgs {
    std::string outputs_dir, out, mode = "boundary";
    double threshold = 0.5;
    double nms_window_s = 1.0;
    double min_score = 0.0;
};

int cmd_decode(const DecodeArgs& a) {
    const std::vector<FrameOutputs> outputs = read_outputs_dir(a.outputs_dir);
    std::vector<PredictedSceneSet> preds(outputs.size());
    int fallbacks = 0;
    if (a.mode == "boundary") {
        DecodeOptions opt;
        opt.pick.threshold = a.threshold;
        opt.pick.nms_window_s = a.nms_window_s;
        opt.min_score = a.min_score;
        parallel_for(outputs.size(), [&](std::size_t i) { preds[i] = decode_boundary(outputs[i], opt); });
    } else if (a.mode == "framewise") {
        std::vector<FramewiseDecodeResult> results(outputs.size());
        parallel_for(outputs.size(),
                     [&](std::size_t i) { results[i] = framewise_threshold_decode(outputs[i], a.threshold); });
        for (std::size_t i = 0; i < results.size(); ++i) {
            preds[i] = std::move(results[i].pred);
            fallbacks += results[i].all_empty_fallback ? 1 : 0;
        }
    } else {
        throw ParseError("unknown decode mode '" + a.mode + "' (expected boundary or framewise)");
    }
    if (!a.out.empty()) write_text_file(a.out, render_json(predictions_to_json(preds)));
    std::printf("decoded %zu videos (%s mode)\n", preds.size(), a.mode.c_str());
    if (fallbacks > 0) std::printf("note: %d videos hit the all-empty fallback\n", fallbacks);
    return kExitOk;
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
    std::string ann, taxonomy, shots;
    double snap_eps = 0.1;
    double tolerance = 0.0;
};

int cmd_validate(const ValidateArgs& a) {
    const Taxonomy tax = load_taxonomy(a.taxonomy);
    const DatasetSplit split = parse_annotations(read_text_file(a.ann), /*strict=*/false);

    int total = 0;
    std::map<std::string, int> seen;
    for (const auto& ann : split.annotations) {
        if (++seen[ann.video_id] == 2) {
            std::printf("%s: duplicate video_id\n", ann.video_id.c_str());
            ++total;
        }
        const ValidationReport rep = validate_annotation(ann, tax, a.tolerance);
        for (const auto& v : rep.violations) {
            std::printf("%s: [%s] %s\n", ann.video_id.c_str(), violation_kind_name(v.kind), v.message.c_str());
            ++total;
        }
    }
    std::printf("%d violations across %zu videos\n", total, split.annotations.size());

    if (!a.shots.empty()) {
        const std::vector<ShotBoundarySet> shots = parse_shots(read_text_file(a.shots));
        const SnapResult snap = snap_to_shots(split, shots, a.snap_eps);
        std::printf("\nsnap preview (eps %s):\n", num(a.snap_eps).c_str());
        for (const auto& ch : snap.changes)
            std::printf("%s: boundary %d  %s -> %s\n", ch.video_id.c_str(), ch.boundary_index, num(ch.from_s).c_str(),
                        num(ch.to_s).c_str());
        for (const auto& w : snap.warnings) std::printf("warning: %s\n", w.c_str());
        std::printf("%zu boundaries would move\n", snap.changes.size());
    }
    return total == 0 ? kExitOk : kExitValidation;
}

// ------------------------------------------------------------------- stats

struct StatsArgs {
    std::string ann, taxonomy, out, format = "text";
};

int cmd_stats(const StatsArgs& a) {
    const Taxonomy tax = load_taxonomy(a.taxonomy);
    const DatasetSplit split = parse_annotations(read_text_file(a.ann));
    const StatsReport rep = dataset_stats(split, tax);
    std::string rendered;
    if (a.format == "json")
        rendered = render_json(stats_to_json(rep, tax));
    else if (a.format == "csv")
        rendered = stats_to_csv(rep, tax);
    else if (a.format == "text")
        rendered = stats_to_text(rep);
    else
        throw ParseError("unknown stats format '" + a.format + "' (expected json, csv, or text)");
    if (a.out.empty())
        std::fputs(rendered.c_str(), stdout);
    else
        write_text_file(a.out, rendered);
    return kExitOk;
}

// ------------------------------------------------------------------- synth

struct SynthArgs {
    std::string out, split_name = "synth";
    std::uint64_t seed = 1;
    int videos = 100;
    double noise = 0.05;
    double jitter = 0.1;
    bool skip_binaries = false;
};

int cmd_synth(const SynthArgs& a) {
    SynthConfig cfg;
    cfg.seed = a.seed;
    cfg.num_videos = a.videos;
    cfg.split_name = a.split_name;
    cfg.feature_noise = a.noise;
    const Taxonomy tax = default_taxonomy();
    const SynthCorpus corpus = gen_corpus(cfg, tax);

    fs::create_directories(a.out);
    write_text_file((fs::path(a.out) / "annotations.json").string(), render_json(annotations_to_json(corpus.split)));
    write_text_file((fs::path(a.out) / "shots.json").string(), render_json(shots_to_json(corpus.shots)));
    const DatasetSplit jittered = perturb_boundaries(corpus.split, a.jitter, cfg.seed);
    write_text_file((fs::path(a.out) / "predictions.json").string(),
                    render_json(predictions_to_json(split_to_predictions(jittered))));
    if (!a.skip_binaries) {
        write_features_dir((fs::path(a.out) / "features").string(), corpus.features);
        write_outputs_dir((fs::path(a.out) / "outputs").string(), corpus.ideal_outputs);
    }

    int scenes = 0;
    std::int64_t labels = 0;
    for (const auto& ann : corpus.split.annotations) {
        scenes += static_cast<int>(ann.scenes.size());
        for (const auto& s : ann.scenes) labels += static_cast<std::int64_t>(s.labels.size());
    }
    std::printf("wrote %d videos, %d scenes, %s labels/scene under %s\n", a.videos, scenes,
                num(static_cast<double>(labels) / scenes).c_str(), a.out.c_str());
    return kExitOk;
}

// -------------------------------------------------------------- model-demo

struct ModelDemoArgs {
    std::string features_dir, ann, config, weights, out;
    std::uint64_t weight_seed = 1;
    int label_iters = -1;
    int boundary_iters = -1;
    bool reuse_weights = false;
};

int cmd_model_demo(const ModelDemoArgs& a) {
    ModelConfig cfg;
    if (!a.config.empty()) cfg = model_config_from_json(json::parse(read_text_file(a.config)));
    check_model_config(cfg);

    std::vector<FeatureBundle> features = read_features_dir(a.features_dir);
    for (const auto& fb : features) check_feature_bundle(fb, cfg);

    ModelWeights weights = make_weights(cfg);
    if (a.reuse_weights) {
        if (a.weights.empty()) throw ParseError("--reuse-weights needs --weights");
        LoadedModel loaded = load_weights(a.weights);
        cfg = loaded.config;
        weights = std::move(loaded.weights);
        std::printf("loaded weights from %s\n", a.weights.c_str());
    } else {
        if (a.ann.empty()) throw ParseError("fitting needs --ann (or pass --reuse-weights)");
        const DatasetSplit split = parse_annotations(read_text_file(a.ann));
        std::map<std::string, const VideoAnnotation*> by_id;
        for (const auto& ann : split.annotations) by_id[ann.video_id] = &ann;
        std::vector<RasterTargets> targets;
        for (const auto& fb : features) {
            const auto it = by_id.find(fb.video_id);
            if (it == by_id.end()) throw ValidationError("no annotation for video '" + fb.video_id + "'");
            targets.push_back(rasterize_targets(*it->second, cfg.num_classes, cfg.fps));
        }
        weights = init_weights(cfg, a.weight_seed);
        FitOptions opt;
        if (a.label_iters >= 0) opt.label_iterations = a.label_iters;
        if (a.boundary_iters >= 0) opt.boundary_iterations = a.boundary_iters;
        const FitReport fit = fit_heads(features, targets, cfg, weights, opt);
        std::printf("label loss %s -> %s\n", num(fit.label_history.front()).c_str(),
                    num(fit.final_label_loss).c_str());
        std::printf("boundary loss %s -> %s\n", num(fit.boundary_history.front()).c_str(),
                    num(fit.final_boundary_loss).c_str());
        if (!a.weights.empty()) {
            save_weights(a.weights, cfg, weights);
            std::printf("saved weights to %s\n", a.weights.c_str());
        }
    }

    std::vector<FrameOutputs> outputs(features.size());
    parallel_for(features.size(),
                 [&](std::size_t i) { outputs[i] = model_forward(features[i], cfg, weights).outputs; });
    write_outputs_dir(a.out, outputs);
    std::printf("wrote outputs for %zu videos to %s\n", outputs.size(), a.out.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"scene segmentation toolkit: metrics, decoding, validation, synthesis, model demo"};
    app.set_version_flag("--version", "1.0.0");
    app.require_subcommand(1);

    EvaluateArgs ev;
    CLI::App* s = app.add_subcommand("evaluate", "score predictions against ground truth");
    s->add_option("--gt", ev.gt, "ground-truth annotations JSON")->required();
    s->add_option("--pred", ev.pred, "predictions JSON")->required();
    s->add_option("--taxonomy", ev.taxonomy, "taxonomy JSON (default: built-in)");
    s->add_option("--out", ev.out, "directory for report.json and report.csv");
    s->add_option("--f1-strategy", ev.f1_strategy, "boundary matching order: ascending | pair-first");
    int rc = kExitOk;
    s->callback([&] { rc = cmd_evaluate(ev); });

    DecodeArgs de;
    s = app.add_subcommand("decode", "turn per-frame outputs into scene predictions");
    s->add_option("--outputs-dir", de.outputs_dir, "directory of <video_id>.bin output containers")->required();
    s->add_option("--out", de.out, "predictions JSON to write");
    s->add_option("--mode", de.mode, "boundary | framewise");
    s->add_option("--thr", de.threshold, "probability threshold");
    s->add_option("--nms-window", de.nms_window_s, "peak suppression window in seconds");
    s->add_option("--min-score", de.min_score, "drop labels scoring below this");
    s->callback([&] { rc = cmd_decode(de); });

    ValidateArgs va;
    s = app.add_subcommand("validate", "lint annotations; optionally preview shot snapping");
    s->add_option("--ann", va.ann, "annotations JSON")->required();
    s->add_option("--taxonomy", va.taxonomy, "taxonomy JSON (default: built-in)");
    s->add_option("--shots", va.shots, "shot boundaries JSON for a snap preview");
    s->add_option("--snap-eps", va.snap_eps, "snap tolerance in seconds");
    s->add_option("--tolerance", va.tolerance, "allowed slack in partition checks, seconds");
    s->callback([&] { rc = cmd_validate(va); });

    StatsArgs st;
    s = app.add_subcommand("stats", "corpus statistics");
    s->add_option("--ann", st.ann, "annotations JSON")->required();
    s->add_option("--taxonomy", st.taxonomy, "taxonomy JSON (default: built-in)");
    s->add_option("--format", st.format, "json | csv | text");
    s->add_option("--out", st.out, "write here instead of stdout");
    s->callback([&] { rc = cmd_stats(st); });

    SynthArgs sy;
    s = app.add_subcommand("synth", "generate a seeded synthetic corpus");
    s->add_option("--out", sy.out, "output directory")->required();
    s->add_option("--seed", sy.seed, "corpus seed");
    s->add_option("--videos", sy.videos, "number of videos");
    s->add_option("--noise", sy.noise, "feature noise level");
    s->add_option("--jitter", sy.jitter, "boundary jitter sigma for predictions.json, seconds");
    s->add_option("--split-name", sy.split_name, "split name stored in annotations.json");
    s->add_flag("--skip-binaries", sy.skip_binaries, "skip features/ and outputs/");
    s->callback([&] { rc = cmd_synth(sy); });

    ModelDemoArgs md;
    s = app.add_subcommand("model-demo", "fit head weights on features, write per-frame outputs");
    s->add_option("--features-dir", md.features_dir, "directory of <video_id>.{frame,audio,text}.bin")->required();
    s->add_option("--ann", md.ann, "annotations JSON with fitting targets");
    s->add_option("--config", md.config, "model config JSON (default: built-in)");
    s->add_option("--weights", md.weights, "directory to save fitted weights (or load, with --reuse-weights)");
    s->add_option("--out", md.out, "directory for <video_id>.bin output containers")->required();
    s->add_option("--weight-seed", md.weight_seed, "backbone initialization seed");
    s->add_option("--label-iters", md.label_iters, "label head fit iterations");
    s->add_option("--boundary-iters", md.boundary_iters, "boundary/offset head fit iterations");
    s->add_flag("--reuse-weights", md.reuse_weights, "load --weights instead of fitting");
    s->callback([&] { rc = cmd_model_demo(md); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints help or the parse error
        return code == 0 ? kExitOk : kExitInput;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
    return rc;
}
