// SPDX-License-Identifier: MIT
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "segplan/augment.hpp"
#include "segplan/error.hpp"
#include "segplan/evalselect.hpp"
#include "segplan/fingerprint.hpp"
#include "segplan/io.hpp"
#include "segplan/pipeline.hpp"
#include "segplan/planner.hpp"
#include "segplan/preprocess.hpp"
#include "segplan/tiling.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace segplan;

namespace {

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("SEGPLAN_SEED")) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw Error(ErrorCode::InvalidArgument, std::string("SEGPLAN_SEED is not an unsigned integer: ") + env);
    }
    return 0;
}

std::vector<std::int64_t> parse_sizes(const std::string& text) {
    std::vector<std::int64_t> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != part.size() || v < 1) throw Error(ErrorCode::InvalidArgument, "invalid size list '" + text + "'");
        out.push_back(v);
    }
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "empty size list");
    return out;
}

void emit(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-") std::cout << text;
    else write_text(out, text);
}

Volume tensor_channel_volume(const Tensor& t, int c, const Spacing3& spacing) {
    Shape3 shape = t.shape.size() == 3 ? Shape3{t.shape[0], t.shape[1], t.shape[2]} : Shape3{1, t.shape[0], t.shape[1]};
    Volume v(shape, spacing);
    std::copy(t.channel(c), t.channel(c) + t.spatial_size(), v.data.begin());
    return v;
}

json params_json(const AugmentationParams& p) {
    return json{{"rotation_applied", p.rotation_applied}, {"angles", p.angles},
                {"scale_applied", p.scale_applied},       {"scale", p.scale},
                {"noise_applied", p.noise_applied},       {"noise_variance", p.noise_variance},
                {"noise_seed", p.noise_seed},             {"blur_applied", p.blur_applied},
                {"blur_sigma", p.blur_sigma},             {"brightness_applied", p.brightness_applied},
                {"brightness", p.brightness},             {"contrast_applied", p.contrast_applied},
                {"contrast", p.contrast},                 {"lowres_applied", p.lowres_applied},
                {"lowres_factor", p.lowres_factor},       {"gamma_inverted_applied", p.gamma_inverted_applied},
                {"gamma_inverted", p.gamma_inverted},     {"gamma_applied", p.gamma_applied},
                {"gamma", p.gamma},                       {"mirror_axes", p.mirror_axes}};
}

void augment_preview(const fs::path& case_path, const fs::path& plan_path, std::uint64_t seed, const fs::path& out_dir,
                     const std::string& config, int count) {
    fs::path manifest = case_path;
    if (fs::is_directory(case_path)) {
        const auto all = list_case_manifests(case_path);
        if (all.empty()) throw Error(ErrorCode::EmptyInput, "no cases found in " + case_path.string());
        manifest = all.front();
    }
    const PipelineFingerprint pipeline = read_plan(plan_path);
    const UNetPlan* plan = nullptr;
    if (!config.empty()) plan = pipeline.find(plan_kind_from_string(config));
    else plan = pipeline.find(PlanKind::U3D_FULLRES) ? pipeline.find(PlanKind::U3D_FULLRES) : (pipeline.plans.empty() ? nullptr : &pipeline.plans.front());
    if (!plan) throw Error(ErrorCode::InvalidArgument, "plan has no matching configuration");
    if (plan->patch_size.size() == 2 && !plan->plane_axes.empty() && plan->plane_axes != std::vector<int>{1, 2})
        throw Error(ErrorCode::InvalidArgument, "augment-preview slices along axis 0; 2D plane must be axes 1,2");

    const Case c = preprocess_case(read_case(manifest), *plan);
    if (!c.label) throw Error(ErrorCode::NoLabel, "augment-preview needs a labelled case");
    PatchGeometry geom{plan->patch_size, static_cast<int>(c.channels.size())};
    Shape3 patch3{1, 1, 1};
    if (geom.dim() == 3) patch3 = {geom.patch_size[0], geom.patch_size[1], geom.patch_size[2]};
    else patch3 = {1, geom.patch_size[0], geom.patch_size[1]};

    RngStream rng(seed);
    const auto sampling = sample_patch_origins(*c.label, patch3, count, rng);
    const auto margin = oversized_margin(geom);
    std::vector<std::int64_t> crop_size;
    for (int a = 0; a < geom.dim(); ++a) crop_size.push_back(geom.patch_size[a] + 2 * margin[a]);
    fs::create_directories(out_dir);
    json index = json::array();
    for (std::size_t k = 0; k < sampling.samples.size(); ++k) {
        const auto& s = sampling.samples[k];
        Shape3 origin = s.origin;
        const int offset = 3 - geom.dim();
        for (int a = 0; a < geom.dim(); ++a) origin[a + offset] -= margin[a];
        RngStream child = rng.child(k);
        const AugmentationParams params = sample_params(child, geom);
        const auto sample = augment_sample(extract_patch(c.channels, origin, crop_size),
                                           extract_label_patch(*c.label, origin, crop_size), params, geom);
        const Spacing3 spacing = plan_target_spacing(*plan, c.channels.front().spacing);
        const std::string stem = c.id + "_sample" + std::to_string(k);
        for (int ch = 0; ch < sample.data.channels; ++ch)
            write_volume(tensor_channel_volume(sample.data, ch, spacing), out_dir / (stem + "_" + std::to_string(ch) + ".json"));
        const Volume segf = tensor_channel_volume(sample.seg, 0, spacing);
        LabelVolume seg(segf.shape, spacing, c.label->num_classes);
        for (std::size_t i = 0; i < seg.data.size(); ++i) seg.data[i] = static_cast<std::uint16_t>(segf.data[i]);
        write_volume(seg, out_dir / (stem + "_seg.json"));
        index.push_back({{"sample", stem}, {"origin", s.origin}, {"forced_class", s.forced_class}, {"params", params_json(params)}});
    }
    json doc{{"schema_version", kSchemaVersion}, {"case", c.id}, {"configuration", to_string(plan->kind)}, {"seed", seed},
             {"no_foreground", sampling.no_foreground}, {"samples", index}};
    write_text(out_dir / "augment_preview.json", doc.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"segplan: dataset fingerprints, pipeline planning and deterministic pipeline components"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);
    app.fallthrough();
    int jobs = 1;
    std::optional<std::uint64_t> seed_flag;
    app.add_option("--jobs,-j", jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed_flag, "Random seed (falls back to SEGPLAN_SEED, then 0)");

    std::string out;
    std::string budget_3d = "reference-11g", budget_2d = "reference-11g", configs;

    auto* fp_cmd = app.add_subcommand("fingerprint", "Extract a dataset fingerprint");
    std::string dataset_dir;
    fp_cmd->add_option("dataset", dataset_dir, "Directory of *.case.json manifests")->required();
    fp_cmd->add_option("-o,--output", out, "Output file (stdout if omitted)");

    auto* plan_cmd = app.add_subcommand("plan", "Derive the pipeline fingerprint from a dataset fingerprint");
    std::string fp_path;
    plan_cmd->add_option("fingerprint", fp_path, "Dataset fingerprint JSON")->required();
    plan_cmd->add_option("-o,--output", out, "Output file (stdout if omitted)");
    plan_cmd->add_option("--budget-3d", budget_3d, "3D budget: reference-11g or cost units");
    plan_cmd->add_option("--budget-2d", budget_2d, "2D budget: reference-11g or cost units");
    plan_cmd->add_option("--configs", configs, "Comma separated subset of 2d,3d_fullres,3d_lowres,3d_cascade_fullres");

    auto* pre_cmd = app.add_subcommand("preprocess", "Crop, resample and normalize a dataset for each plan");
    std::string plan_path;
    pre_cmd->add_option("plan", plan_path, "Plan JSON")->required();
    pre_cmd->add_option("dataset", dataset_dir, "Directory of *.case.json manifests")->required();
    pre_cmd->add_option("-o,--output", out, "Output directory")->required();

    auto* aug_cmd = app.add_subcommand("augment-preview", "Write augmented patches of one case");
    std::string case_path, aug_config;
    int aug_count = 2;
    aug_cmd->add_option("case", case_path, "Case manifest or dataset directory")->required();
    aug_cmd->add_option("plan", plan_path, "Plan JSON")->required();
    aug_cmd->add_option("-o,--output", out, "Output directory")->required();
    aug_cmd->add_option("--config", aug_config, "Plan configuration to use");
    aug_cmd->add_option("--count", aug_count, "Number of patches")->check(CLI::PositiveNumber);

    auto* tile_cmd = app.add_subcommand("tile", "Print a sliding-window tiling plan");
    std::string shape_text, patch_text;
    tile_cmd->add_option("--shape", shape_text, "Volume shape, e.g. 100,128,128")->required();
    tile_cmd->add_option("--patch", patch_text, "Patch size, e.g. 64,64,64")->required();
    tile_cmd->add_option("-o,--output", out, "Output file (stdout if omitted)");

    auto* ens_cmd = app.add_subcommand("ensemble", "Average stored probability volumes");
    std::vector<std::string> prob_files;
    ens_cmd->add_option("inputs", prob_files, "Probability volumes (native format)")->required();
    ens_cmd->add_option("-o,--output", out, "Output probability volume")->required();
    std::string labels_out;
    ens_cmd->add_option("--labels", labels_out, "Also write the argmax segmentation");

    auto* eval_cmd = app.add_subcommand("evaluate", "Dice of predictions against references");
    std::string pred_dir, ref_dir, eval_name;
    int num_classes = 0;
    eval_cmd->add_option("predictions", pred_dir, "Directory of predicted label volumes")->required();
    eval_cmd->add_option("references", ref_dir, "Directory of reference label volumes")->required();
    eval_cmd->add_option("-o,--output", out, "Output file (stdout if omitted)");
    eval_cmd->add_option("--num-classes", num_classes, "Foreground class count (default: largest label)");
    eval_cmd->add_option("--name", eval_name, "Configuration or ensemble name, e.g. 3d_lowres+3d_fullres");

    auto* sel_cmd = app.add_subcommand("select", "Choose the best configuration or ensemble");
    std::vector<std::string> result_files;
    sel_cmd->add_option("results", result_files, "Evaluation JSON files")->required();
    sel_cmd->add_option("-o,--output", out, "Output file (stdout if omitted)");

    auto* pp_cmd = app.add_subcommand("postprocess-decide", "Decide connected-component postprocessing");
    pp_cmd->add_option("predictions", pred_dir, "Cross-validation predictions")->required();
    pp_cmd->add_option("references", ref_dir, "References")->required();
    pp_cmd->add_option("-o,--output", out, "Output file (stdout if omitted)");
    pp_cmd->add_option("--num-classes", num_classes, "Foreground class count (default: largest label)");

    auto* rank_cmd = app.add_subcommand("rank", "Bootstrap rank distribution of algorithms");
    std::string scores_path;
    int replicates = 1000;
    rank_cmd->add_option("scores", scores_path, "CSV: algorithm,<case>...")->required();
    rank_cmd->add_option("--replicates", replicates, "Bootstrap replicates")->check(CLI::PositiveNumber);
    rank_cmd->add_option("-o,--output", out, "Output file (stdout if omitted)");

    auto* split_cmd = app.add_subcommand("splits", "Cross-validation splits of a dataset");
    int folds = 5;
    std::string groups_path;
    split_cmd->add_option("dataset", dataset_dir, "Directory of *.case.json manifests")->required();
    split_cmd->add_option("--folds", folds, "Fold count");
    split_cmd->add_option("--groups", groups_path, "JSON map case id -> group id");
    split_cmd->add_option("-o,--output", out, "Output file (stdout if omitted)");

    auto* run_cmd = app.add_subcommand("run", "fingerprint, plan, splits and preprocess in one idempotent run");
    std::string split_path;
    run_cmd->add_option("dataset", dataset_dir, "Directory of *.case.json manifests")->required();
    run_cmd->add_option("-o,--output", out, "Output directory")->required();
    run_cmd->add_option("--budget-3d", budget_3d, "3D budget: reference-11g or cost units");
    run_cmd->add_option("--budget-2d", budget_2d, "2D budget: reference-11g or cost units");
    run_cmd->add_option("--configs", configs, "Comma separated configuration subset");
    run_cmd->add_option("--folds", folds, "Fold count");
    run_cmd->add_option("--splits", split_path, "Explicit split file");
    run_cmd->add_option("--groups", groups_path, "JSON map case id -> group id");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const std::uint64_t seed = resolve_seed(seed_flag);
        if (*fp_cmd) {
            emit(fingerprint_to_json(fingerprint_dataset(dataset_dir, seed, jobs)), out);
        } else if (*plan_cmd) {
            PlannerOptions options;
            options.model_3d = parse_budget(budget_3d, true);
            options.model_2d = parse_budget(budget_2d, false);
            options.configs = parse_configs(configs);
            options.fingerprint_ref = fs::path(fp_path).filename().string();
            emit(plan_to_json(assemble_pipeline_fingerprint(read_fingerprint(fp_path), options)), out);
        } else if (*pre_cmd) {
            const auto files = preprocess_dataset(read_plan(plan_path), dataset_dir, out, jobs);
            std::cout << "wrote " << files.size() << " files to " << out << "\n";
        } else if (*aug_cmd) {
            augment_preview(case_path, plan_path, seed, out, aug_config, aug_count);
        } else if (*tile_cmd) {
            const auto plan = compute_tile_origins(parse_sizes(shape_text), parse_sizes(patch_text));
            json j{{"shape", plan.shape}, {"patch", plan.patch}, {"origins", plan.origins}};
            emit(j.dump(2) + "\n", out);
        } else if (*ens_cmd) {
            std::vector<ProbabilityVolume> vols;
            for (const auto& f : prob_files) vols.push_back(read_probabilities(f));
            const auto mean = ensemble_average(vols);
            write_probabilities(mean, out);
            if (!labels_out.empty()) write_volume(argmax_labels(mean), labels_out);
        } else if (*eval_cmd) {
            auto r = evaluate_directories(pred_dir, ref_dir, num_classes, jobs);
            r.configuration = eval_name;
            emit(evaluation_to_json(r), out);
        } else if (*sel_cmd) {
            std::vector<CandidateScore> candidates;
            for (const auto& f : result_files) {
                const auto r = evaluation_from_json(read_text(f));
                candidates.push_back({parse_candidate(r.configuration), r.mean_foreground_dice});
            }
            const auto best = select_configuration(candidates);
            json j{{"schema_version", kSchemaVersion}, {"selected", candidate_name(best.members)}, {"score", best.score}};
            emit(j.dump(2) + "\n", out);
        } else if (*pp_cmd) {
            emit(decision_to_json(decide_postprocessing_directories(pred_dir, ref_dir, num_classes)), out);
        } else if (*rank_cmd) {
            const auto table = parse_scores_csv(read_text(scores_path));
            emit(ranking_to_json(bootstrap_ranking(table.scores, replicates, seed, table.algorithms, jobs)), out);
        } else if (*split_cmd) {
            const auto manifests = list_case_manifests(dataset_dir);
            if (manifests.empty()) throw Error(ErrorCode::EmptyInput, "no cases found in " + dataset_dir);
            std::vector<std::string> ids;
            for (const auto& m : manifests) ids.push_back(read_case(m).id);
            const auto groups = groups_path.empty() ? std::map<std::string, std::string>{} : groups_from_json(read_text(groups_path));
            emit(splits_to_json(make_cv_splits(ids, folds, groups, seed)), out);
        } else if (*run_cmd) {
            RunConfig cfg;
            cfg.dataset_dir = dataset_dir;
            cfg.output_dir = out;
            cfg.budget_3d = parse_budget(budget_3d, true);
            cfg.budget_2d = parse_budget(budget_2d, false);
            cfg.seed = seed;
            cfg.configs = parse_configs(configs);
            cfg.folds = folds;
            if (!split_path.empty()) cfg.split_file = split_path;
            if (!groups_path.empty()) cfg.group_file = groups_path;
            cfg.jobs = jobs;
            const auto r = run_pipeline(cfg);
            std::cout << (r.up_to_date ? "up to date: " : "wrote run manifest: ") << r.manifest.string() << "\n";
        }
    } catch (const Error& e) {
        json report{{"error", to_string(e.code())}, {"message", e.what()}, {"exit_code", exit_code(e.code())}};
        std::cerr << report.dump() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        json report{{"error", "IoFailure"}, {"message", e.what()}, {"exit_code", 3}};
        std::cerr << report.dump() << "\n";
        return 3;
    }
    return 0;
}
