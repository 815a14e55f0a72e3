// Builds a two-video split and a prediction set in memory, runs the
// evaluation, and prints the headline numbers plus the JSON report layout.

#include "sceneseg/io.hpp"
#include "sceneseg/metrics.hpp"

#include <iostream>

using namespace sceneseg;

namespace {

int class_id(const Taxonomy& tax, const std::string& name) {
    for (const auto& c : tax.classes)
        if (c.name == name) return c.id;
    throw std::invalid_argument("unknown class: " + name);
}

Scene scene(double start, double end, std::vector<int> labels) {
    Scene s;
    s.start_s = start;
    s.end_s = end;
    s.labels = std::move(labels);
    return s;
}

PredictedScene segment(double start, double end, std::map<int, double> scores) {
    PredictedScene p;
    p.start_s = start;
    p.end_s = end;
    p.scores = std::move(scores);
    return p;
}

} // namespace

int main() {
    const Taxonomy tax = default_taxonomy();
    const int vlog = class_id(tax, "vlog");
    const int kitchen = class_id(tax, "kitchen");
    const int happy = class_id(tax, "happy");
    const int street = class_id(tax, "street");

    DatasetSplit gt;
    gt.name = "demo";
    gt.annotations.push_back({"clip_a", 30.0, {scene(0.0, 12.0, {vlog, kitchen}),
                                               scene(12.0, 30.0, {vlog, street, happy})}});
    gt.annotations.push_back({"clip_b", 20.0, {scene(0.0, 20.0, {vlog, happy})}});
    for (const auto& ann : gt.annotations)
        if (!validate_annotation(ann, tax).valid())
            throw std::logic_error("demo ground truth failed validation");

    // One boundary is 0.3 s late and clip_b hallucinates a scene change.
    std::vector<PredictedSceneSet> preds(2);
    preds[0].video_id = "clip_a";
    preds[0].segments = {segment(0.0, 12.3, {{vlog, 0.9}, {kitchen, 0.7}}),
                         segment(12.3, 30.0, {{vlog, 0.8}, {street, 0.6}, {happy, 0.4}})};
    preds[1].video_id = "clip_b";
    preds[1].segments = {segment(0.0, 9.0, {{vlog, 0.9}, {happy, 0.5}}),
                         segment(9.0, 20.0, {{vlog, 0.85}})};

    const EvaluationReport rep = evaluate(gt, preds, tax);
    std::cout << "videos evaluated: " << rep.num_videos << "\n"
              << "avg_map: " << rep.map.avg_map << "\n"
              << "avg_f1:  " << rep.f1.avg_f1 << "\n\n";
    for (std::size_t i = 0; i < rep.f1.tolerances.size(); ++i)
        std::cout << "F1 @ " << rep.f1.tolerances[i] << "s tolerance: " << rep.f1.f1[i] << "\n";

    std::cout << "\nfull report as shipped by the CLI:\n"
              << render_json(evaluation_report_to_json(rep, tax));
    return 0;
}
