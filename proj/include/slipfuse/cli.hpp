#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slipfuse/baseline.hpp"
#include "slipfuse/dataset.hpp"
#include "slipfuse/evaluation.hpp"
#include "slipfuse/features.hpp"
#include "slipfuse/model.hpp"
#include "slipfuse/pipeline.hpp"
#include "slipfuse/synthgrasp.hpp"
#include "slipfuse/training.hpp"

// Command-line front end. Exit codes: 0 success, 1 domain error
// (validation, divergence, leakage, ...), 2 usage or I/O error.

namespace slipfuse::cli {

namespace detail {

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const MissingManifest*>(&e) ||
        dynamic_cast<const UnsupportedImage*>(&e) || dynamic_cast<const CorruptCheckpoint*>(&e) ||
        dynamic_cast<const UsageError*>(&e))
        return 2;
    return 1;
}

inline void require_set(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

// Every run echoes its fully resolved configuration before doing any work;
// rerunning from that file alone reproduces the run.
inline void write_resolved_config(const std::filesystem::path& out_dir,
                                  const std::string& command, const nlohmann::json& options) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json j = {{"command", command}, {"options", options}};
    std::ofstream f(out_dir / "resolved_config.json", std::ios::trunc);
    if (!f) throw IoError("cannot write resolved_config.json under " + out_dir.string());
    f << j.dump(2) << "\n";
}

template <typename T>
void overlay(const nlohmann::json& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

inline int parse_int(const std::string& text, const char* what) {
    try {
        size_t used = 0;
        const int v = std::stoi(text, &used);
        if (used != text.size()) throw UsageError(std::string("bad ") + what + ": " + text);
        return v;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        throw UsageError(std::string("bad ") + what + ": " + text);
    }
}

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::vector<std::pair<Scenario, int>> parse_scenarios(const std::string& spec) {
    std::vector<std::pair<Scenario, int>> out;
    for (const std::string& part : split_csv(spec)) {
        const auto colon = part.find(':');
        if (colon == std::string::npos)
            throw InvalidParams("scenario spec must be name:count, got '" + part + "'");
        const std::string name = part.substr(0, colon);
        const int count = parse_int(part.substr(colon + 1), "scenario count");
        if (name == "all") {
            for (Scenario s : all_scenarios()) out.push_back({s, count});
        } else {
            out.push_back({scenario_from_string(name), count});
        }
    }
    if (out.empty()) throw InvalidParams("empty scenario spec");
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOptions {
    std::string out;
    std::string scenarios = "all:25";
    uint64_t seed = 0;
    int frames = 18;
    int lift_index = 4;
    int image_size = 128;
    int marker_rows = 7, marker_cols = 7;
    double marker_radius = 3.0;
    double slip_speed = 3.0;
    double stretch_amplitude = 4.0;
    double noise_std = 2.0;
    std::string texture = "auto";  // auto|dots|stripes|none

    nlohmann::json to_json() const {
        return {{"out", out},           {"scenarios", scenarios},
                {"seed", seed},         {"frames", frames},
                {"lift_index", lift_index}, {"image_size", image_size},
                {"marker_rows", marker_rows}, {"marker_cols", marker_cols},
                {"marker_radius", marker_radius}, {"slip_speed", slip_speed},
                {"stretch_amplitude", stretch_amplitude}, {"noise_std", noise_std},
                {"texture", texture}};
    }
    void overlay_from(const nlohmann::json& j) {
        using detail::overlay;
        overlay(j, "out", out);
        overlay(j, "scenarios", scenarios);
        overlay(j, "seed", seed);
        overlay(j, "frames", frames);
        overlay(j, "lift_index", lift_index);
        overlay(j, "image_size", image_size);
        overlay(j, "marker_rows", marker_rows);
        overlay(j, "marker_cols", marker_cols);
        overlay(j, "marker_radius", marker_radius);
        overlay(j, "slip_speed", slip_speed);
        overlay(j, "stretch_amplitude", stretch_amplitude);
        overlay(j, "noise_std", noise_std);
        overlay(j, "texture", texture);
    }

    SynthParams params() const {
        SynthParams p;
        p.image_width = p.image_height = image_size;
        p.marker_rows = marker_rows;
        p.marker_cols = marker_cols;
        p.marker_radius_px = marker_radius;
        p.slip_speed_px_per_frame = slip_speed;
        p.stretch_amplitude_px = stretch_amplitude;
        p.noise_std = noise_std;
        p.n_frames = frames;
        p.lift_frame_index = lift_index;
        p.rng_seed = seed;
        if (texture == "dots") p.texture_type = TextureType::DOTS;
        else if (texture == "stripes") p.texture_type = TextureType::STRIPES;
        else if (texture == "none") p.texture_type = TextureType::NONE;
        else if (texture != "auto") throw InvalidParams("unknown texture: " + texture);
        return p;
    }
};

inline int cmd_synth(const SynthOptions& opt, std::ostream& out = std::cout) {
    detail::require_set(opt.out, "--out");
    const auto scenario_spec = detail::parse_scenarios(opt.scenarios);
    detail::write_resolved_config(opt.out, "synth", opt.to_json());
    const DatasetManifest manifest = generate_dataset(scenario_spec, opt.params(), opt.out);
    size_t slip = 0;
    for (const auto& t : manifest.trials)
        if (t.label == Label::SLIP) ++slip;
    out << "wrote " << manifest.trials.size() << " trials (" << slip << " slip, "
        << manifest.trials.size() - slip << " stable) to " << opt.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestOptions {
    std::string external_dir;
    std::string gelsight_dir;
    std::string out;
    std::string trial_id;
    std::string object_id;
    std::string label = "stable";
    int lift_index = 0;
    double frame_rate = 20.0;

    nlohmann::json to_json() const {
        return {{"external", external_dir}, {"gelsight", gelsight_dir}, {"out", out},
                {"trial_id", trial_id},     {"object_id", object_id},   {"label", label},
                {"lift_index", lift_index}, {"frame_rate", frame_rate}};
    }
    void overlay_from(const nlohmann::json& j) {
        using detail::overlay;
        overlay(j, "external", external_dir);
        overlay(j, "gelsight", gelsight_dir);
        overlay(j, "out", out);
        overlay(j, "trial_id", trial_id);
        overlay(j, "object_id", object_id);
        overlay(j, "label", label);
        overlay(j, "lift_index", lift_index);
        overlay(j, "frame_rate", frame_rate);
    }
};

inline int cmd_ingest(const IngestOptions& opt, std::ostream& out = std::cout) {
    detail::require_set(opt.external_dir, "--external");
    detail::require_set(opt.gelsight_dir, "--gelsight");
    detail::require_set(opt.out, "--out");
    detail::require_set(opt.trial_id, "--trial-id");
    if (opt.lift_index < 2) throw UsageError("--lift-index must be >= 2");
    detail::write_resolved_config(opt.out, "ingest", opt.to_json());
    auto list_pngs = [](const std::filesystem::path& dir) {
        if (!std::filesystem::is_directory(dir))
            throw IoError("not a directory: " + dir.string());
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(dir))
            if (e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        return files;
    };
    const auto ext_files = list_pngs(opt.external_dir);
    const auto gel_files = list_pngs(opt.gelsight_dir);
    const std::string shape_err =
        validate_trial_shape(ext_files.size(), gel_files.size(), opt.lift_index);
    if (!shape_err.empty()) throw TrialValidationError(opt.trial_id + ": " + shape_err);

    const std::filesystem::path root = opt.out;
    DatasetManifest manifest;
    if (std::filesystem::exists(root / "manifest.json")) {
        manifest = load_dataset(root);
        for (const auto& t : manifest.trials)
            if (t.trial_id == opt.trial_id)
                throw TrialValidationError(opt.trial_id + ": already in manifest");
    } else {
        manifest.root = root;
    }
    manifest.root = root;

    const auto trial_dir = root / "trials" / opt.trial_id;
    std::filesystem::create_directories(trial_dir / "external");
    std::filesystem::create_directories(trial_dir / "gelsight");
    // re-encode so on-disk frames are normalized 8-bit RGB regardless of input
    for (size_t i = 0; i < ext_files.size(); ++i)
        png::write(trial_dir / "external" / frame_filename(static_cast<int>(i)),
                   png::read(ext_files[i]));
    for (size_t i = 0; i < gel_files.size(); ++i)
        png::write(trial_dir / "gelsight" / frame_filename(static_cast<int>(i)),
                   png::read(gel_files[i]));

    ManifestEntry e;
    e.trial_id = opt.trial_id;
    e.object_id = opt.object_id.empty() ? opt.trial_id : opt.object_id;
    e.label = label_from_string(opt.label);
    e.lift_frame_index = opt.lift_index;
    e.frame_rate_hz = opt.frame_rate;
    e.path = "trials/" + opt.trial_id;
    manifest.trials.push_back(e);
    save_manifest(manifest);
    out << "ingested trial " << opt.trial_id << " (" << ext_files.size()
        << " frame pairs) into " << opt.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCliOptions {
    std::string dataset;
    std::string out = "train_out";
    std::string backbone = "tiny";
    int tiny_grid = 8;
    std::string modality = "tactile-vision";
    std::string format = "raw";
    int len = 8;
    std::string window_pattern = "gap";
    double lr = 5e-4;
    int batch = 32;
    int epochs = 30;
    int patience = 10;
    uint64_t seed = 0;
    double train_frac = 0.85;
    std::string split = "by-trial";
    std::string cache;
    int workers = 1;

    nlohmann::json to_json() const {
        return {{"dataset", dataset},   {"out", out},
                {"backbone", backbone}, {"tiny_grid", tiny_grid},
                {"modality", modality}, {"format", format},
                {"len", len},           {"window_pattern", window_pattern},
                {"lr", lr},             {"batch", batch},
                {"epochs", epochs},     {"patience", patience},
                {"seed", seed},         {"train_frac", train_frac},
                {"split", split},       {"cache", cache},
                {"workers", workers}};
    }
    void overlay_from(const nlohmann::json& j) {
        using detail::overlay;
        overlay(j, "dataset", dataset);
        overlay(j, "out", out);
        overlay(j, "backbone", backbone);
        overlay(j, "tiny_grid", tiny_grid);
        overlay(j, "modality", modality);
        overlay(j, "format", format);
        overlay(j, "len", len);
        overlay(j, "window_pattern", window_pattern);
        overlay(j, "lr", lr);
        overlay(j, "batch", batch);
        overlay(j, "epochs", epochs);
        overlay(j, "patience", patience);
        overlay(j, "seed", seed);
        overlay(j, "train_frac", train_frac);
        overlay(j, "split", split);
        overlay(j, "cache", cache);
        overlay(j, "workers", workers);
    }

    PipelineConfig pipeline() const {
        PipelineConfig p;
        p.extractor.name = backbone_from_string(backbone);
        p.extractor.tiny_grid = tiny_grid;
        p.modality = modality_from_string(modality);
        p.format = format == "raw" ? FrameFormat::RAW
                   : format == "diff" ? FrameFormat::DIFFERENCE
                                      : throw InvalidParams("format must be raw|diff");
        p.seq_len = len;
        p.pattern = window_pattern == "gap" ? WindowPattern::GAP
                    : window_pattern == "consecutive"
                        ? WindowPattern::CONSECUTIVE
                        : throw InvalidParams("window_pattern must be gap|consecutive");
        return p;
    }
    TrainConfig train_config() const {
        TrainConfig t;
        t.learning_rate = lr;
        t.batch_size = batch;
        t.max_epochs = epochs;
        t.early_stop_patience = patience;
        t.seed = seed;
        return t;
    }
    SplitMode split_mode() const {
        if (split == "by-trial") return SplitMode::BY_TRIAL;
        if (split == "by-sample") return SplitMode::BY_SAMPLE;
        throw InvalidParams("split must be by-trial|by-sample");
    }
};

inline int cmd_train(const TrainCliOptions& opt, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
    detail::require_set(opt.dataset, "--dataset");
    detail::write_resolved_config(opt.out, "train", opt.to_json());
    const DatasetManifest manifest = load_dataset(opt.dataset);
    const PipelineConfig pipe = opt.pipeline();
    const SplitResult split = make_splits(manifest, opt.train_frac, opt.seed, opt.split_mode());

    out << "building features for " << split.train_samples.size() << " train / "
        << split.validation_samples.size() << " validation windows...\n";
    const std::filesystem::path cache_root = opt.cache;
    const auto train_seqs =
        build_sequences(manifest, split.train_samples, pipe, cache_root, opt.workers);
    const auto val_seqs =
        build_sequences(manifest, split.validation_samples, pipe, cache_root, opt.workers);

    ModelConfig mc;
    mc.input_dim = pipe.feature_dim();
    mc.seq_len = opt.len;

    nlohmann::json meta = {{"backbone", opt.backbone},
                           {"tiny_grid", opt.tiny_grid},
                           {"modality", opt.modality},
                           {"format", opt.format},
                           {"seq_len", opt.len},
                           {"window_pattern", opt.window_pattern},
                           {"dataset", opt.dataset},
                           {"seed", opt.seed},
                           {"train_trial_ids", split.train_trials}};

    std::ofstream epoch_log(std::filesystem::path(opt.out) / "report.jsonl", std::ios::trunc);
    const TrainResult result =
        train(mc, opt.train_config(), train_seqs, val_seqs, opt.out, meta, &epoch_log);
    for (const auto& w : result.report.warnings) err << "warning: " << w << "\n";

    std::ofstream summary(std::filesystem::path(opt.out) / "summary.json", std::ios::trunc);
    summary << result.report.summary_json().dump(2) << "\n";
    out << "best validation accuracy " << result.report.best_val_accuracy << " at epoch "
        << result.report.best_epoch << "; checkpoint: " << result.report.best_checkpoint_path
        << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::string dataset;
    std::string checkpoint;
    std::string out = ".";
    int workers = 1;

    nlohmann::json to_json() const {
        return {{"dataset", dataset}, {"checkpoint", checkpoint}, {"out", out},
                {"workers", workers}};
    }
    void overlay_from(const nlohmann::json& j) {
        using detail::overlay;
        overlay(j, "dataset", dataset);
        overlay(j, "checkpoint", checkpoint);
        overlay(j, "out", out);
        overlay(j, "workers", workers);
    }
};

inline PipelineConfig pipeline_from_checkpoint_meta(const nlohmann::json& meta) {
    PipelineConfig p;
    p.extractor.name = backbone_from_string(meta.at("backbone").get<std::string>());
    p.extractor.tiny_grid = meta.value("tiny_grid", 8);
    p.modality = modality_from_string(meta.at("modality").get<std::string>());
    p.format = meta.at("format").get<std::string>() == "raw" ? FrameFormat::RAW
                                                             : FrameFormat::DIFFERENCE;
    p.seq_len = meta.at("seq_len").get<int>();
    p.pattern = meta.value("window_pattern", std::string("gap")) == "consecutive"
                    ? WindowPattern::CONSECUTIVE
                    : WindowPattern::GAP;
    return p;
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& out = std::cout) {
    detail::require_set(opt.dataset, "--dataset");
    detail::require_set(opt.checkpoint, "--checkpoint");
    detail::write_resolved_config(opt.out, "eval", opt.to_json());
    const LoadedCheckpoint ckpt = load_checkpoint(opt.checkpoint);
    const PipelineConfig pipe = pipeline_from_checkpoint_meta(ckpt.meta);
    const DatasetManifest manifest = load_dataset(opt.dataset);

    std::vector<std::string> trial_ids;
    for (const auto& t : manifest.trials) trial_ids.push_back(t.trial_id);
    const auto seqs =
        build_sequences(manifest, keys_for_trials(trial_ids), pipe, {}, opt.workers);

    std::vector<std::string> train_ids;
    if (ckpt.meta.contains("train_trial_ids"))
        train_ids = ckpt.meta.at("train_trial_ids").get<std::vector<std::string>>();

    EvalKey key{pipe.format, pipe.extractor.cache_name(), pipe.modality, pipe.seq_len};
    const EvalRow row = evaluate(ckpt.state, seqs, train_ids, key);

    EvalReport report;
    report.rows.push_back(row);
    std::ofstream(std::filesystem::path(opt.out) / "report.json", std::ios::trunc)
        << format_report(report, ReportStyle::JSON);
    std::ofstream(std::filesystem::path(opt.out) / "report.csv", std::ios::trunc)
        << format_report(report, ReportStyle::CSV);
    out << "windows " << row.total << "  accuracy " << row.accuracy << "  (tp " << row.tp
        << " fp " << row.fp << " tn " << row.tn << " fn " << row.fn << ")  grasp-majority "
        << row.grasp_majority_accuracy << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateOptions {
    std::string dataset;
    std::string out = "ablate_out";
    std::string axes = "format,modality";
    std::string format = "raw";
    std::string formats = "raw,diff";
    std::string backbone = "tiny";
    std::string backbones = "tiny";
    int tiny_grid = 8;
    std::string modality = "tactile-vision";
    std::string modalities = "tactile-vision,tactile,vision";
    int len = 8;
    std::string lengths = "6,7,8,9";
    double lr = 5e-4;
    int batch = 32;
    int epochs = 30;
    int patience = 10;
    uint64_t seed = 0;
    double train_frac = 0.85;
    std::string cache;
    int workers = 1;

    nlohmann::json to_json() const {
        return {{"dataset", dataset}, {"out", out},       {"axes", axes},
                {"format", format},   {"formats", formats}, {"backbone", backbone},
                {"backbones", backbones}, {"tiny_grid", tiny_grid}, {"modality", modality},
                {"modalities", modalities}, {"len", len}, {"lengths", lengths},
                {"lr", lr},           {"batch", batch},   {"epochs", epochs},
                {"patience", patience}, {"seed", seed},   {"train_frac", train_frac},
                {"cache", cache},     {"workers", workers}};
    }
    void overlay_from(const nlohmann::json& j) {
        using detail::overlay;
        overlay(j, "dataset", dataset);
        overlay(j, "out", out);
        overlay(j, "axes", axes);
        overlay(j, "format", format);
        overlay(j, "formats", formats);
        overlay(j, "backbone", backbone);
        overlay(j, "backbones", backbones);
        overlay(j, "tiny_grid", tiny_grid);
        overlay(j, "modality", modality);
        overlay(j, "modalities", modalities);
        overlay(j, "len", len);
        overlay(j, "lengths", lengths);
        overlay(j, "lr", lr);
        overlay(j, "batch", batch);
        overlay(j, "epochs", epochs);
        overlay(j, "patience", patience);
        overlay(j, "seed", seed);
        overlay(j, "train_frac", train_frac);
        overlay(j, "cache", cache);
        overlay(j, "workers", workers);
    }
};

inline int cmd_ablate(const AblateOptions& opt, std::ostream& out = std::cout) {
    detail::require_set(opt.dataset, "--dataset");
    detail::write_resolved_config(opt.out, "ablate", opt.to_json());
    const DatasetManifest manifest = load_dataset(opt.dataset);

    const auto axes = detail::split_csv(opt.axes);
    auto has_axis = [&](const std::string& a) {
        return std::find(axes.begin(), axes.end(), a) != axes.end();
    };

    AblationGrid grid;
    grid.formats.clear();
    for (const std::string& f : detail::split_csv(has_axis("format") ? opt.formats : opt.format))
        grid.formats.push_back(f == "raw" ? FrameFormat::RAW : FrameFormat::DIFFERENCE);
    grid.backbones.clear();
    for (const std::string& b :
         detail::split_csv(has_axis("backbone") ? opt.backbones : opt.backbone)) {
        FeatureExtractorSpec spec;
        spec.name = backbone_from_string(b);
        spec.tiny_grid = opt.tiny_grid;
        grid.backbones.push_back(spec);
    }
    grid.modalities.clear();
    for (const std::string& m :
         detail::split_csv(has_axis("modality") ? opt.modalities : opt.modality))
        grid.modalities.push_back(modality_from_string(m));
    grid.seq_lens.clear();
    for (const std::string& l :
         detail::split_csv(has_axis("length") ? opt.lengths : std::to_string(opt.len)))
        grid.seq_lens.push_back(detail::parse_int(l, "window length"));

    TrainConfig tc;
    tc.learning_rate = opt.lr;
    tc.batch_size = opt.batch;
    tc.max_epochs = opt.epochs;
    tc.early_stop_patience = opt.patience;
    tc.seed = opt.seed;

    ModelConfig mc;  // input_dim/seq_len filled per cell
    mc.input_dim = 1;

    const EvalReport report = run_ablation(manifest, grid, mc, tc, opt.train_frac,
                                           SplitMode::BY_TRIAL, opt.cache, opt.workers, &out);

    const ReportStyle table_style = has_axis("length") && grid.seq_lens.size() > 1
                                        ? ReportStyle::TABLE_II
                                        : ReportStyle::TABLE_I;
    const std::string table = format_report(report, table_style);
    out << table;
    std::ofstream(std::filesystem::path(opt.out) / "report.json", std::ios::trunc)
        << format_report(report, ReportStyle::JSON);
    std::ofstream(std::filesystem::path(opt.out) / "report.csv", std::ios::trunc)
        << format_report(report, ReportStyle::CSV);
    std::ofstream(std::filesystem::path(opt.out) / "table.txt", std::ios::trunc) << table;

    size_t errored = 0;
    for (const auto& r : report.rows)
        if (r.errored) ++errored;
    if (errored == report.rows.size()) throw Error("every ablation cell failed");
    if (errored > 0)
        out << errored << " of " << report.rows.size()
            << " cells errored (marked in the report)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

struct BaselineCliOptions {
    std::string dataset;
    std::string out = ".";
    double threshold = 2.0;
    int marker_threshold = 70;
    double match_radius = 6.0;
    int search_radius = 24;
    int len = 8;

    nlohmann::json to_json() const {
        return {{"dataset", dataset},       {"out", out},
                {"threshold", threshold},   {"marker_threshold", marker_threshold},
                {"match_radius", match_radius}, {"search_radius", search_radius},
                {"len", len}};
    }
    void overlay_from(const nlohmann::json& j) {
        using detail::overlay;
        overlay(j, "dataset", dataset);
        overlay(j, "out", out);
        overlay(j, "threshold", threshold);
        overlay(j, "marker_threshold", marker_threshold);
        overlay(j, "match_radius", match_radius);
        overlay(j, "search_radius", search_radius);
        overlay(j, "len", len);
    }
};

inline int cmd_baseline(const BaselineCliOptions& opt, std::ostream& out = std::cout) {
    detail::require_set(opt.dataset, "--dataset");
    detail::write_resolved_config(opt.out, "baseline", opt.to_json());
    const DatasetManifest manifest = load_dataset(opt.dataset);
    BaselineConfig cfg;
    cfg.slip_threshold = opt.threshold;
    cfg.marker_intensity_threshold = opt.marker_threshold;
    cfg.match_radius = opt.match_radius;
    cfg.search_radius = opt.search_radius;

    std::ostringstream csv;
    csv << "trial_id,label,verdict,peak_relative_displacement_px\n";
    size_t correct = 0, total = 0;
    for (const auto& entry : manifest.trials) {
        const GraspTrial trial = load_trial(manifest, entry.trial_id);
        // canonical window: static reference frame, then the lift
        const auto windows = extract_windows(trial, opt.len);
        const SequenceSample& canonical = windows.front();  // offset -2
        const std::vector<double> rel = track_relative_displacement(canonical.gelsight_seq, cfg);
        double peak = 0;
        for (double v : rel) peak = std::max(peak, v);
        const Label verdict = peak > cfg.slip_threshold ? Label::SLIP : Label::STABLE;
        if (verdict == entry.label) ++correct;
        ++total;
        csv << entry.trial_id << "," << to_string(entry.label) << "," << to_string(verdict)
            << "," << peak << "\n";
    }
    std::ofstream(std::filesystem::path(opt.out) / "baseline_verdicts.csv", std::ios::trunc)
        << csv.str();
    out << "baseline accuracy " << (total ? static_cast<double>(correct) / total : 0.0) << " ("
        << correct << "/" << total << " trials, threshold " << opt.threshold << " px)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictOptions {
    std::string dataset;
    std::string trial_id;
    std::string checkpoint;
    std::string out = ".";
    bool json_output = false;

    nlohmann::json to_json() const {
        return {{"dataset", dataset}, {"trial_id", trial_id}, {"checkpoint", checkpoint},
                {"out", out},         {"json", json_output}};
    }
    void overlay_from(const nlohmann::json& j) {
        using detail::overlay;
        overlay(j, "dataset", dataset);
        overlay(j, "trial_id", trial_id);
        overlay(j, "checkpoint", checkpoint);
        overlay(j, "out", out);
        overlay(j, "json", json_output);
    }
};

inline int cmd_predict(const PredictOptions& opt, std::ostream& out = std::cout) {
    detail::require_set(opt.dataset, "--dataset");
    detail::require_set(opt.trial_id, "--trial-id");
    detail::require_set(opt.checkpoint, "--checkpoint");
    detail::write_resolved_config(opt.out, "predict", opt.to_json());
    const LoadedCheckpoint ckpt = load_checkpoint(opt.checkpoint);
    const PipelineConfig pipe = pipeline_from_checkpoint_meta(ckpt.meta);
    const DatasetManifest manifest = load_dataset(opt.dataset);

    std::vector<SampleKey> keys;
    for (int s : kWindowStartOffsets) keys.push_back({opt.trial_id, s});
    const auto seqs = build_sequences(manifest, keys, pipe);

    int slip_votes = 0, stable_votes = 0;
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& seq : seqs) {
        const Prediction pred = predict_label(ckpt.state, std::span<const float>(seq.features));
        (pred.label == Label::SLIP ? slip_votes : stable_votes) += 1;
        windows.push_back({{"offset", seq.offset}, {"p_slip", pred.p_slip}});
        if (!opt.json_output) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "window %+d: P(slip) = %.4f -> %s\n", seq.offset,
                          pred.p_slip, to_string(pred.label).c_str());
            out << buf;
        }
    }
    const Label verdict = slip_votes >= stable_votes ? Label::SLIP : Label::STABLE;
    if (opt.json_output) {
        const nlohmann::json j = {{"trial_id", opt.trial_id},
                                  {"verdict", to_string(verdict)},
                                  {"windows", windows}};
        out << j.dump(2) << "\n";
    } else {
        out << "grasp verdict: " << to_string(verdict) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Dispatcher
// ---------------------------------------------------------------------------

inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"slipfuse - visuotactile slip detection pipeline"};
    app.require_subcommand(1);

    // --config <json> provides defaults; explicit flags override them.
    nlohmann::json config_json = nlohmann::json::object();
    for (size_t i = 0; i + 1 < args.size(); ++i) {
        if (args[i] == "--config") {
            std::ifstream f(args[i + 1]);
            if (!f) {
                err << "cannot open config file: " << args[i + 1] << "\n";
                return 2;
            }
            try {
                f >> config_json;
            } catch (const nlohmann::json::exception& e) {
                err << "bad config file: " << e.what() << "\n";
                return 2;
            }
            // a resolved_config.json emitted by a previous run works directly
            if (config_json.contains("options")) config_json = config_json.at("options");
            args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
            break;
        }
    }

    SynthOptions synth;
    IngestOptions ingest;
    TrainCliOptions train_opt;
    EvalOptions eval_opt;
    AblateOptions ablate;
    BaselineCliOptions baseline_opt;
    PredictOptions predict;
    synth.overlay_from(config_json);
    ingest.overlay_from(config_json);
    train_opt.overlay_from(config_json);
    eval_opt.overlay_from(config_json);
    ablate.overlay_from(config_json);
    baseline_opt.overlay_from(config_json);
    predict.overlay_from(config_json);

    auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic dataset");
    synth_cmd->add_option("--out", synth.out, "output dataset root");
    synth_cmd->add_option("--scenarios", synth.scenarios,
                          "name:count list, e.g. stable:50,translational_slip:50 or all:25");
    synth_cmd->add_option("--seed", synth.seed, "rng seed");
    synth_cmd->add_option("--frames", synth.frames, "frames per trial");
    synth_cmd->add_option("--lift-index", synth.lift_index, "lift frame index");
    synth_cmd->add_option("--size", synth.image_size, "square image size in px");
    synth_cmd->add_option("--marker-rows", synth.marker_rows, "marker grid rows");
    synth_cmd->add_option("--marker-cols", synth.marker_cols, "marker grid cols");
    synth_cmd->add_option("--marker-radius", synth.marker_radius, "marker radius px");
    synth_cmd->add_option("--slip-speed", synth.slip_speed, "slip speed px/frame");
    synth_cmd->add_option("--stretch-amplitude", synth.stretch_amplitude, "gel stretch px");
    synth_cmd->add_option("--noise-std", synth.noise_std, "pixel noise sigma");
    synth_cmd->add_option("--texture", synth.texture, "auto|dots|stripes|none");

    auto* ingest_cmd =
        app.add_subcommand("ingest", "convert loose frame directories into a dataset trial");
    ingest_cmd->add_option("--external", ingest.external_dir, "external camera frames");
    ingest_cmd->add_option("--gelsight", ingest.gelsight_dir, "gelsight frames");
    ingest_cmd->add_option("--out", ingest.out, "dataset root");
    ingest_cmd->add_option("--trial-id", ingest.trial_id, "trial id");
    ingest_cmd->add_option("--object-id", ingest.object_id, "object id");
    ingest_cmd->add_option("--label", ingest.label, "slip|stable");
    ingest_cmd->add_option("--lift-index", ingest.lift_index, "lift frame index");
    ingest_cmd->add_option("--frame-rate", ingest.frame_rate, "capture rate hz");

    auto* train_cmd = app.add_subcommand("train", "train the slip classifier head");
    train_cmd->add_option("--dataset", train_opt.dataset, "dataset root");
    train_cmd->add_option("--out", train_opt.out, "output directory");
    train_cmd->add_option("--backbone", train_opt.backbone,
                          "tiny|vgg16_fc7|vgg19_fc7|inception_v3_pool3");
    train_cmd->add_option("--tiny-grid", train_opt.tiny_grid, "tiny extractor grid G");
    train_cmd->add_option("--modality", train_opt.modality, "tactile-vision|tactile|vision");
    train_cmd->add_option("--format", train_opt.format, "raw|diff");
    train_cmd->add_option("--len", train_opt.len, "window length (6..9)");
    train_cmd->add_option("--window-pattern", train_opt.window_pattern, "gap|consecutive");
    train_cmd->add_option("--lr", train_opt.lr, "learning rate");
    train_cmd->add_option("--batch", train_opt.batch, "batch size");
    train_cmd->add_option("--epochs", train_opt.epochs, "max epochs");
    train_cmd->add_option("--patience", train_opt.patience, "early stop patience");
    train_cmd->add_option("--seed", train_opt.seed, "rng seed");
    train_cmd->add_option("--train-frac", train_opt.train_frac, "train fraction");
    train_cmd->add_option("--split", train_opt.split, "by-trial|by-sample");
    train_cmd->add_option("--cache", train_opt.cache, "feature cache root");
    train_cmd->add_option("--workers", train_opt.workers, "parallel feature workers");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--dataset", eval_opt.dataset, "test dataset root");
    eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "checkpoint file");
    eval_cmd->add_option("--out", eval_opt.out, "output directory");
    eval_cmd->add_option("--workers", eval_opt.workers, "parallel feature workers");

    auto* ablate_cmd = app.add_subcommand("ablate", "train/evaluate a grid of configurations");
    ablate_cmd->add_option("--dataset", ablate.dataset, "dataset root");
    ablate_cmd->add_option("--out", ablate.out, "output directory");
    ablate_cmd->add_option("--axes", ablate.axes, "axes to sweep: format,backbone,modality,length");
    ablate_cmd->add_option("--format", ablate.format, "fixed format when not swept");
    ablate_cmd->add_option("--formats", ablate.formats, "format sweep list");
    ablate_cmd->add_option("--backbone", ablate.backbone, "fixed backbone when not swept");
    ablate_cmd->add_option("--backbones", ablate.backbones, "backbone sweep list");
    ablate_cmd->add_option("--tiny-grid", ablate.tiny_grid, "tiny extractor grid G");
    ablate_cmd->add_option("--modality", ablate.modality, "fixed modality when not swept");
    ablate_cmd->add_option("--modalities", ablate.modalities, "modality sweep list");
    ablate_cmd->add_option("--len", ablate.len, "fixed window length when not swept");
    ablate_cmd->add_option("--lengths", ablate.lengths, "length sweep list");
    ablate_cmd->add_option("--lr", ablate.lr, "learning rate");
    ablate_cmd->add_option("--batch", ablate.batch, "batch size");
    ablate_cmd->add_option("--epochs", ablate.epochs, "max epochs");
    ablate_cmd->add_option("--patience", ablate.patience, "early stop patience");
    ablate_cmd->add_option("--seed", ablate.seed, "rng seed (shared across cells)");
    ablate_cmd->add_option("--train-frac", ablate.train_frac, "train fraction");
    ablate_cmd->add_option("--cache", ablate.cache, "feature cache root");
    ablate_cmd->add_option("--workers", ablate.workers, "parallel feature workers");

    auto* baseline_cmd =
        app.add_subcommand("baseline", "classical marker-threshold slip detector");
    baseline_cmd->add_option("--dataset", baseline_opt.dataset, "dataset root");
    baseline_cmd->add_option("--out", baseline_opt.out, "output directory");
    baseline_cmd->add_option("--threshold", baseline_opt.threshold, "slip threshold px");
    baseline_cmd->add_option("--marker-threshold", baseline_opt.marker_threshold,
                             "marker intensity threshold");
    baseline_cmd->add_option("--match-radius", baseline_opt.match_radius, "marker match radius");
    baseline_cmd->add_option("--search-radius", baseline_opt.search_radius,
                             "texture correlation search radius");
    baseline_cmd->add_option("--len", baseline_opt.len, "window length");

    auto* predict_cmd = app.add_subcommand("predict", "per-window slip probabilities for a trial");
    predict_cmd->add_option("--dataset", predict.dataset, "dataset root");
    predict_cmd->add_option("--trial-id", predict.trial_id, "trial id");
    predict_cmd->add_option("--checkpoint", predict.checkpoint, "checkpoint file");
    predict_cmd->add_option("--out", predict.out, "output directory");
    predict_cmd->add_flag("--json", predict.json_output, "machine-readable output");

    std::vector<const char*> argv;
    argv.push_back("slipfuse");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return 2;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(synth, out);
        if (ingest_cmd->parsed()) return cmd_ingest(ingest, out);
        if (train_cmd->parsed()) return cmd_train(train_opt, out, err);
        if (eval_cmd->parsed()) return cmd_eval(eval_opt, out);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate, out);
        if (baseline_cmd->parsed()) return cmd_baseline(baseline_opt, out);
        if (predict_cmd->parsed()) return cmd_predict(predict, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return detail::exit_code_for(e);
    }
    err << "no subcommand given\n";
    return 2;
}

}  // namespace slipfuse::cli
