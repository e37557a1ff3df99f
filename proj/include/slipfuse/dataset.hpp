#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slipfuse/errors.hpp"
#include "slipfuse/image.hpp"
#include "slipfuse/png_io.hpp"
#include "slipfuse/rng.hpp"

namespace slipfuse {

enum class Label { SLIP, STABLE };

inline std::string to_string(Label l) { return l == Label::SLIP ? "slip" : "stable"; }

inline Label label_from_string(const std::string& s) {
    if (s == "slip") return Label::SLIP;
    if (s == "stable") return Label::STABLE;
    throw Error("unknown label: " + s);
}

enum class FrameFormat { RAW, DIFFERENCE };

inline std::string to_string(FrameFormat f) {
    return f == FrameFormat::RAW ? "raw" : "diff";
}

// One grasp-and-lift recording: two index-aligned image streams, a stability
// label, and the frame index at which lifting starts.
struct GraspTrial {
    std::string trial_id;
    std::string object_id;
    Label label = Label::STABLE;
    std::vector<Image> external_frames;
    std::vector<Image> gelsight_frames;
    int lift_frame_index = 0;
    double frame_rate_hz = 20.0;
};

// Validates the structural invariants of a trial; returns a human-readable
// reason on failure, empty string when the trial is well-formed.
inline std::string validate_trial_shape(size_t n_external, size_t n_gelsight,
                                        int lift_frame_index) {
    if (n_external != n_gelsight)
        return "stream lengths differ (" + std::to_string(n_external) + " external, " +
               std::to_string(n_gelsight) + " gelsight)";
    if (lift_frame_index < 2)
        return "lift_frame_index " + std::to_string(lift_frame_index) + " < 2";
    if (n_external < static_cast<size_t>(lift_frame_index) + 10)
        return "stream too short (" + std::to_string(n_external) + " frames, need >= lift+10 = " +
               std::to_string(lift_frame_index + 10) + ")";
    return "";
}

inline void validate_trial(const GraspTrial& t) {
    const std::string shape_err = validate_trial_shape(
        t.external_frames.size(), t.gelsight_frames.size(), t.lift_frame_index);
    if (!shape_err.empty())
        throw TrialValidationError(t.trial_id + ": " + shape_err);
    for (const auto* stream : {&t.external_frames, &t.gelsight_frames}) {
        for (size_t i = 1; i < stream->size(); ++i) {
            if (!(*stream)[i].same_shape((*stream)[0]))
                throw TrialValidationError(t.trial_id + ": frame " + std::to_string(i) +
                                           " has different dimensions");
        }
    }
}

// One fixed-length window of paired frames. The first frame is the static
// pre-motion reference; for difference format it is the subtraction base.
struct SequenceSample {
    std::string trial_id;
    int window_start_offset = 0;  // relative to lift_frame_index
    std::vector<int> frame_indices;
    std::vector<Image> external_seq;
    std::vector<Image> gelsight_seq;
    FrameFormat format = FrameFormat::RAW;
    Label label = Label::STABLE;
};

enum class WindowPattern { GAP, CONSECUTIVE };

inline constexpr std::array<int, 5> kWindowStartOffsets = {-2, -1, 1, 2, 3};

// Frame indices for one window: first frame at f0+s, then (for the gap
// pattern) a one-frame gap followed by L-1 consecutive frames, i.e.
// [f0+s, f0+s+2, f0+s+3, ..., f0+s+L].
inline std::vector<int> window_frame_indices(int lift_frame_index, int start_offset, int length,
                                             WindowPattern pattern = WindowPattern::GAP) {
    std::vector<int> idx;
    idx.reserve(length);
    const int first = lift_frame_index + start_offset;
    idx.push_back(first);
    const int gap = pattern == WindowPattern::GAP ? 2 : 1;
    for (int k = 0; k < length - 1; ++k) idx.push_back(first + gap + k);
    return idx;
}

inline std::vector<SequenceSample> extract_windows(const GraspTrial& trial, int length,
                                                   WindowPattern pattern = WindowPattern::GAP) {
    if (length < 6 || length > 9)
        throw InvalidParams("window length must be in {6,7,8,9}, got " + std::to_string(length));
    validate_trial(trial);
    const int n = static_cast<int>(trial.external_frames.size());
    std::vector<SequenceSample> out;
    out.reserve(kWindowStartOffsets.size());
    for (int s : kWindowStartOffsets) {
        std::vector<int> idx = window_frame_indices(trial.lift_frame_index, s, length, pattern);
        if (idx.front() < 0 || idx.back() >= n)
            throw InsufficientFrames(
                trial.trial_id + ": window at offset " + std::to_string(s) + " needs frames [" +
                std::to_string(idx.front()) + "," + std::to_string(idx.back()) + "], stream has " +
                std::to_string(n));
        SequenceSample sample;
        sample.trial_id = trial.trial_id;
        sample.window_start_offset = s;
        sample.label = trial.label;
        sample.format = FrameFormat::RAW;
        for (int i : idx) {
            sample.external_seq.push_back(trial.external_frames[i]);
            sample.gelsight_seq.push_back(trial.gelsight_frames[i]);
        }
        sample.frame_indices = std::move(idx);
        out.push_back(std::move(sample));
    }
    return out;
}

// Per pixel and channel: out = clamp(128 + cur - base, 0, 255), where base is
// the first frame of this window. The first output image is uniformly 128.
inline Image difference_image(const Image& cur, const Image& base) {
    if (!cur.same_shape(base)) throw ShapeMismatch("difference of differently sized frames");
    Image out(cur.width, cur.height);
    for (size_t i = 0; i < cur.data.size(); ++i)
        out.data[i] = clamp_u8(128 + static_cast<int>(cur.data[i]) - static_cast<int>(base.data[i]));
    return out;
}

inline SequenceSample to_difference(const SequenceSample& sample) {
    if (sample.format == FrameFormat::DIFFERENCE) throw AlreadyDifference();
    SequenceSample out;
    out.trial_id = sample.trial_id;
    out.window_start_offset = sample.window_start_offset;
    out.frame_indices = sample.frame_indices;
    out.label = sample.label;
    out.format = FrameFormat::DIFFERENCE;
    auto convert = [](const std::vector<Image>& src, std::vector<Image>& dst) {
        dst.reserve(src.size());
        for (const Image& frame : src) dst.push_back(difference_image(frame, src.front()));
    };
    convert(sample.external_seq, out.external_seq);
    convert(sample.gelsight_seq, out.gelsight_seq);
    return out;
}

// ---------------------------------------------------------------------------
// On-disk dataset
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string trial_id;
    std::string object_id;
    Label label = Label::STABLE;
    int lift_frame_index = 0;
    double frame_rate_hz = 20.0;
    std::string path;  // relative to root
};

struct DatasetManifest {
    std::filesystem::path root;
    std::string schema_version = "1";
    std::vector<ManifestEntry> trials;

    const ManifestEntry& entry(const std::string& trial_id) const {
        for (const auto& t : trials)
            if (t.trial_id == trial_id) return t;
        throw Error("trial not in manifest: " + trial_id);
    }
};

inline std::string frame_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%05d.png", index);
    return buf;
}

namespace detail {

inline int count_gapless_frames(const std::filesystem::path& dir, std::string& err) {
    if (!std::filesystem::is_directory(dir)) {
        err = "missing directory " + dir.string();
        return -1;
    }
    size_t n_png = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".png") ++n_png;
    for (size_t i = 0; i < n_png; ++i) {
        if (!std::filesystem::exists(dir / frame_filename(static_cast<int>(i)))) {
            err = "frame numbering has gaps in " + dir.string();
            return -1;
        }
    }
    if (n_png == 0) {
        err = "no frames in " + dir.string();
        return -1;
    }
    return static_cast<int>(n_png);
}

}  // namespace detail

// Parses and validates <root>/manifest.json. Trials are checked structurally
// (directories, frame counts, dimensions via PNG headers) but pixel data is
// not loaded.
inline DatasetManifest load_dataset(const std::filesystem::path& root) {
    const auto manifest_path = root / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) throw MissingManifest(manifest_path.string());
    std::ifstream f(manifest_path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + manifest_path.string() + ": " + e.what());
    }
    const std::string version = j.value("schema_version", "");
    if (version != "1") throw SchemaMismatch(version);

    DatasetManifest m;
    m.root = root;
    m.schema_version = version;
    std::vector<std::string> failures;
    for (const auto& tj : j.at("trials")) {
        ManifestEntry e;
        e.trial_id = tj.at("trial_id").get<std::string>();
        e.object_id = tj.value("object_id", "");
        e.label = label_from_string(tj.at("label").get<std::string>());
        e.lift_frame_index = tj.at("lift_frame_index").get<int>();
        e.frame_rate_hz = tj.value("frame_rate_hz", 20.0);
        e.path = tj.at("path").get<std::string>();

        for (const auto& prev : m.trials)
            if (prev.trial_id == e.trial_id)
                failures.push_back(e.trial_id + ": duplicate trial_id");

        std::string err;
        const int n_ext = detail::count_gapless_frames(root / e.path / "external", err);
        int n_gel = -1;
        if (n_ext >= 0) n_gel = detail::count_gapless_frames(root / e.path / "gelsight", err);
        if (n_ext < 0 || n_gel < 0) {
            failures.push_back(e.trial_id + ": " + err);
        } else {
            const std::string shape_err = validate_trial_shape(
                static_cast<size_t>(n_ext), static_cast<size_t>(n_gel), e.lift_frame_index);
            if (!shape_err.empty()) {
                failures.push_back(e.trial_id + ": " + shape_err);
            } else {
                // Dimension uniformity: PNG headers only, no decode.
                try {
                    for (const char* stream : {"external", "gelsight"}) {
                        const auto dir = root / e.path / stream;
                        const png::Info first = png::read_info(dir / frame_filename(0));
                        const int n = stream[0] == 'e' ? n_ext : n_gel;
                        for (int i = 1; i < n; ++i) {
                            const png::Info info = png::read_info(dir / frame_filename(i));
                            if (info.width != first.width || info.height != first.height) {
                                failures.push_back(e.trial_id + ": frame " + std::to_string(i) +
                                                   " in " + stream + " has different dimensions");
                                break;
                            }
                        }
                    }
                } catch (const Error& ex) {
                    failures.push_back(e.trial_id + ": " + ex.what());
                }
            }
        }
        m.trials.push_back(std::move(e));
    }
    if (!failures.empty()) {
        std::string all;
        for (const auto& s : failures) all += "  " + s + "\n";
        throw TrialValidationError(all);
    }
    return m;
}

inline GraspTrial load_trial(const DatasetManifest& manifest, const std::string& trial_id) {
    const ManifestEntry& e = manifest.entry(trial_id);
    GraspTrial t;
    t.trial_id = e.trial_id;
    t.object_id = e.object_id;
    t.label = e.label;
    t.lift_frame_index = e.lift_frame_index;
    t.frame_rate_hz = e.frame_rate_hz;
    const auto trial_dir = manifest.root / e.path;
    for (int i = 0;; ++i) {
        const auto p = trial_dir / "external" / frame_filename(i);
        if (!std::filesystem::exists(p)) break;
        t.external_frames.push_back(png::read(p));
    }
    for (int i = 0;; ++i) {
        const auto p = trial_dir / "gelsight" / frame_filename(i);
        if (!std::filesystem::exists(p)) break;
        t.gelsight_frames.push_back(png::read(p));
    }
    validate_trial(t);
    return t;
}

inline void save_manifest(const DatasetManifest& m) {
    nlohmann::json j;
    j["schema_version"] = m.schema_version;
    j["trials"] = nlohmann::json::array();
    for (const auto& e : m.trials) {
        j["trials"].push_back({{"trial_id", e.trial_id},
                               {"object_id", e.object_id},
                               {"label", to_string(e.label)},
                               {"lift_frame_index", e.lift_frame_index},
                               {"frame_rate_hz", e.frame_rate_hz},
                               {"path", e.path}});
    }
    std::ofstream f(m.root / "manifest.json", std::ios::trunc);
    if (!f) throw IoError("cannot write manifest under " + m.root.string());
    f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Train/validation splits
// ---------------------------------------------------------------------------

enum class SplitMode { BY_TRIAL, BY_SAMPLE };

struct SampleKey {
    std::string trial_id;
    int offset = 0;
    bool operator==(const SampleKey&) const = default;
};

struct SplitResult {
    SplitMode mode = SplitMode::BY_TRIAL;
    std::vector<std::string> train_trials;
    std::vector<std::string> validation_trials;
    std::vector<SampleKey> train_samples;
    std::vector<SampleKey> validation_samples;
};

// Deterministic for a fixed seed regardless of manifest file order.
// BY_TRIAL keeps all five windows of one grasp on the same side.
inline SplitResult make_splits(const DatasetManifest& manifest, double train_fraction,
                               uint64_t seed, SplitMode mode = SplitMode::BY_TRIAL) {
    if (manifest.trials.empty()) throw EmptyDataset();
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidParams("train_fraction must be in (0,1)");

    std::vector<std::string> trial_ids;
    trial_ids.reserve(manifest.trials.size());
    for (const auto& t : manifest.trials) trial_ids.push_back(t.trial_id);
    std::sort(trial_ids.begin(), trial_ids.end());

    SplitResult r;
    r.mode = mode;
    Rng rng(mix_seed(seed, 0x53504c49ULL));  // stream tag for split shuffles

    if (mode == SplitMode::BY_TRIAL) {
        rng.shuffle(trial_ids);
        const size_t n_train =
            static_cast<size_t>(std::llround(train_fraction * static_cast<double>(trial_ids.size())));
        for (size_t i = 0; i < trial_ids.size(); ++i)
            (i < n_train ? r.train_trials : r.validation_trials).push_back(trial_ids[i]);
        std::sort(r.train_trials.begin(), r.train_trials.end());
        std::sort(r.validation_trials.begin(), r.validation_trials.end());
        for (const auto& id : r.train_trials)
            for (int s : kWindowStartOffsets) r.train_samples.push_back({id, s});
        for (const auto& id : r.validation_trials)
            for (int s : kWindowStartOffsets) r.validation_samples.push_back({id, s});
    } else {
        std::vector<SampleKey> keys;
        keys.reserve(trial_ids.size() * kWindowStartOffsets.size());
        for (const auto& id : trial_ids)
            for (int s : kWindowStartOffsets) keys.push_back({id, s});
        rng.shuffle(keys);
        const size_t n_train =
            static_cast<size_t>(std::llround(train_fraction * static_cast<double>(keys.size())));
        for (size_t i = 0; i < keys.size(); ++i)
            (i < n_train ? r.train_samples : r.validation_samples).push_back(keys[i]);
        auto collect_trials = [](const std::vector<SampleKey>& ks) {
            std::vector<std::string> ids;
            for (const auto& k : ks) ids.push_back(k.trial_id);
            std::sort(ids.begin(), ids.end());
            ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
            return ids;
        };
        r.train_trials = collect_trials(r.train_samples);
        r.validation_trials = collect_trials(r.validation_samples);
    }
    return r;
}

}  // namespace slipfuse
