#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "slipfuse/dataset.hpp"
#include "slipfuse/errors.hpp"
#include "slipfuse/image.hpp"
#include "slipfuse/sha256.hpp"

namespace slipfuse {

enum class Backbone { VGG16_FC7, VGG19_FC7, INCEPTION_V3_POOL3, TINY_PATCH_STATS };

inline std::string to_string(Backbone b) {
    switch (b) {
        case Backbone::VGG16_FC7: return "vgg16_fc7";
        case Backbone::VGG19_FC7: return "vgg19_fc7";
        case Backbone::INCEPTION_V3_POOL3: return "inception_v3_pool3";
        case Backbone::TINY_PATCH_STATS: return "tiny";
    }
    return "?";
}

inline Backbone backbone_from_string(const std::string& s) {
    for (Backbone b : {Backbone::VGG16_FC7, Backbone::VGG19_FC7, Backbone::INCEPTION_V3_POOL3,
                       Backbone::TINY_PATCH_STATS})
        if (to_string(b) == s) return b;
    throw InvalidParams("unknown backbone: " + s);
}

enum class Modality { TACTILE, VISION, FUSED_PAIR };

inline std::string to_string(Modality m) {
    switch (m) {
        case Modality::TACTILE: return "tactile";
        case Modality::VISION: return "vision";
        case Modality::FUSED_PAIR: return "tactile-vision";
    }
    return "?";
}

inline Modality modality_from_string(const std::string& s) {
    for (Modality m : {Modality::TACTILE, Modality::VISION, Modality::FUSED_PAIR})
        if (to_string(m) == s) return m;
    throw InvalidParams("unknown modality: " + s);
}

// Frozen feature extractor selection. Pretrained backbones are optional
// adapters registered at runtime; the tiny patch-statistics extractor is
// built in, deterministic, and the desk-scale test substrate.
struct FeatureExtractorSpec {
    Backbone name = Backbone::TINY_PATCH_STATS;
    int tiny_grid = 8;  // G; TINY output dim is 6*G*G

    static constexpr bool frozen = true;  // extractors never expose trainable parameters

    int output_dim() const {
        switch (name) {
            case Backbone::VGG16_FC7: return 4096;
            case Backbone::VGG19_FC7: return 4096;
            case Backbone::INCEPTION_V3_POOL3: return 2048;
            case Backbone::TINY_PATCH_STATS: return 6 * tiny_grid * tiny_grid;
        }
        return 0;
    }

    // (H, W) the extractor expects; (0, 0) means size-agnostic.
    std::pair<int, int> input_size() const {
        switch (name) {
            case Backbone::VGG16_FC7:
            case Backbone::VGG19_FC7: return {224, 224};
            case Backbone::INCEPTION_V3_POOL3: return {299, 299};
            case Backbone::TINY_PATCH_STATS: return {0, 0};
        }
        return {0, 0};
    }

    std::string cache_name() const {
        if (name == Backbone::TINY_PATCH_STATS)
            return "tiny_g" + std::to_string(tiny_grid);
        return to_string(name);
    }
};

// Per-cell mean and standard deviation of intensity on a G x G grid,
// flattened row-major as (cell, channel, statistic). Deliberately
// translation-sensitive: content moving across a cell boundary changes the
// vector, which is the positional cue the classifier needs.
inline std::vector<float> tiny_patch_stats(const Image& img, int grid) {
    if (img.width <= 0 || img.height <= 0) throw UnsupportedImage("empty image");
    if (grid < 1) throw InvalidParams("tiny grid must be >= 1");
    std::vector<float> out(static_cast<size_t>(6) * grid * grid);
    for (int gy = 0; gy < grid; ++gy) {
        const int y0 = static_cast<int>(static_cast<int64_t>(gy) * img.height / grid);
        const int y1 = static_cast<int>(static_cast<int64_t>(gy + 1) * img.height / grid);
        for (int gx = 0; gx < grid; ++gx) {
            const int x0 = static_cast<int>(static_cast<int64_t>(gx) * img.width / grid);
            const int x1 = static_cast<int>(static_cast<int64_t>(gx + 1) * img.width / grid);
            double sum[3] = {0, 0, 0}, sum_sq[3] = {0, 0, 0};
            const int n = std::max(1, (y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    for (int c = 0; c < 3; ++c) {
                        const double v = img.at(x, y, c);
                        sum[c] += v;
                        sum_sq[c] += v * v;
                    }
            const size_t cell = static_cast<size_t>(gy) * grid + gx;
            for (int c = 0; c < 3; ++c) {
                const double mean = sum[c] / n;
                const double var = std::max(0.0, sum_sq[c] / n - mean * mean);
                out[(cell * 3 + c) * 2 + 0] = static_cast<float>(mean);
                out[(cell * 3 + c) * 2 + 1] = static_cast<float>(std::sqrt(var));
            }
        }
    }
    return out;
}

// Runtime-pluggable pretrained backbone. Implementations receive the frame
// already resized to the extractor's declared input size and must return
// output_dim()
// floats; each adapter applies its backbone's canonical input normalization
// (mean subtraction, scaling) internally. None ship with the library;
// register_backbone_adapter() installs one (e.g. bridging to an external
// inference runtime).
class BackboneAdapter {
public:
    virtual ~BackboneAdapter() = default;
    virtual std::vector<float> extract(const Image& resized) = 0;
};

namespace detail {
inline std::map<Backbone, std::shared_ptr<BackboneAdapter>>& adapter_registry() {
    static std::map<Backbone, std::shared_ptr<BackboneAdapter>> reg;
    return reg;
}
inline std::mutex& adapter_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

inline void register_backbone_adapter(Backbone name, std::shared_ptr<BackboneAdapter> adapter) {
    if (name == Backbone::TINY_PATCH_STATS)
        throw InvalidParams("tiny extractor is built in; cannot be replaced");
    std::lock_guard lock(detail::adapter_mutex());
    detail::adapter_registry()[name] = std::move(adapter);
}

inline void unregister_backbone_adapter(Backbone name) {
    std::lock_guard lock(detail::adapter_mutex());
    detail::adapter_registry().erase(name);
}

inline bool backbone_available(const FeatureExtractorSpec& spec) {
    if (spec.name == Backbone::TINY_PATCH_STATS) return true;
    std::lock_guard lock(detail::adapter_mutex());
    return detail::adapter_registry().count(spec.name) > 0;
}

inline std::vector<float> extract(const Image& image, const FeatureExtractorSpec& spec) {
    if (image.width <= 0 || image.height <= 0 ||
        image.data.size() != image.pixel_count() * 3)
        throw UnsupportedImage("malformed image buffer");
    if (spec.name == Backbone::TINY_PATCH_STATS) return tiny_patch_stats(image, spec.tiny_grid);

    std::shared_ptr<BackboneAdapter> adapter;
    {
        std::lock_guard lock(detail::adapter_mutex());
        auto it = detail::adapter_registry().find(spec.name);
        if (it != detail::adapter_registry().end()) adapter = it->second;
    }
    if (!adapter) throw BackendUnavailable(to_string(spec.name));
    const auto [h, w] = spec.input_size();
    const Image resized =
        (image.height == h && image.width == w) ? image : resize_bilinear(image, w, h);
    std::vector<float> v = adapter->extract(resized);
    if (static_cast<int>(v.size()) != spec.output_dim())
        throw ShapeMismatch("adapter for " + to_string(spec.name) + " returned " +
                            std::to_string(v.size()) + " dims, expected " +
                            std::to_string(spec.output_dim()));
    return v;
}

// Per-timestep feature vectors after backbone extraction and modality
// selection. For FUSED_PAIR the tactile features come first.
struct FeatureSequence {
    std::vector<std::vector<float>> steps;
    Modality modality = Modality::FUSED_PAIR;
    int dim = 0;

    size_t length() const { return steps.size(); }

    std::vector<float> flat() const {
        std::vector<float> out;
        out.reserve(steps.size() * dim);
        for (const auto& s : steps) out.insert(out.end(), s.begin(), s.end());
        return out;
    }
};

inline FeatureSequence extract_sequence(const SequenceSample& sample,
                                        const FeatureExtractorSpec& spec, Modality modality) {
    if (sample.external_seq.size() != sample.gelsight_seq.size())
        throw ShapeMismatch("sample streams have different lengths");
    FeatureSequence fs;
    fs.modality = modality;
    const int base = spec.output_dim();
    fs.dim = modality == Modality::FUSED_PAIR ? 2 * base : base;
    for (size_t t = 0; t < sample.gelsight_seq.size(); ++t) {
        std::vector<float> v;
        try {
            if (modality == Modality::TACTILE) {
                v = extract(sample.gelsight_seq[t], spec);
            } else if (modality == Modality::VISION) {
                v = extract(sample.external_seq[t], spec);
            } else {
                v = extract(sample.gelsight_seq[t], spec);
                std::vector<float> vis = extract(sample.external_seq[t], spec);
                v.insert(v.end(), vis.begin(), vis.end());
            }
        } catch (const BackendUnavailable&) {
            throw;
        } catch (const Error& e) {
            throw Error("timestep " + std::to_string(t) + ": " + e.what());
        }
        fs.steps.push_back(std::move(v));
    }
    return fs;
}

// ---------------------------------------------------------------------------
// On-disk feature cache
// ---------------------------------------------------------------------------
// <cache_root>/<spec>/<format>/<modality>/L<len>/<trial>_<offset>.fvec
// 16-byte header: magic "FVEC", u16 version, u16 L, u32 dim, u32 reserved,
// then L*dim little-endian f32. Sidecar .sha256 holds the hash of the source
// frame files; a mismatch forces recomputation.

struct CacheEntry {
    SampleKey key;
    std::filesystem::path path;
    bool was_hit = false;  // true when served from disk without recomputation
};

struct CacheIndex {
    std::vector<CacheEntry> entries;
    size_t hits = 0;
    size_t computed = 0;
};

namespace detail {

constexpr uint16_t kFvecVersion = 1;

inline std::filesystem::path cache_path(const std::filesystem::path& root,
                                        const FeatureExtractorSpec& spec, FrameFormat format,
                                        Modality modality, int seq_len, const SampleKey& key) {
    return root / spec.cache_name() / to_string(format) / to_string(modality) /
           ("L" + std::to_string(seq_len)) /
           (key.trial_id + "_" + std::to_string(key.offset) + ".fvec");
}

inline std::string source_frames_hash(const DatasetManifest& manifest,
                                      const ManifestEntry& entry, const std::vector<int>& indices,
                                      Modality modality) {
    Sha256 h;
    const auto trial_dir = manifest.root / entry.path;
    for (int idx : indices) {
        if (modality != Modality::VISION) {
            const auto bytes = png::read_file_bytes(trial_dir / "gelsight" / frame_filename(idx));
            h.update(bytes.data(), bytes.size());
        }
        if (modality != Modality::TACTILE) {
            const auto bytes = png::read_file_bytes(trial_dir / "external" / frame_filename(idx));
            h.update(bytes.data(), bytes.size());
        }
    }
    return Sha256::hex(h.finish());
}

inline std::string unique_tmp_suffix() {
    static std::atomic<uint64_t> counter{0};
    return ".tmp" + std::to_string(::getpid()) + "_" +
           std::to_string(counter.fetch_add(1, std::memory_order_relaxed));
}

inline void write_fvec(const std::filesystem::path& path, const FeatureSequence& fs,
                       const std::string& source_hash) {
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + unique_tmp_suffix();
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write cache file: " + tmp);
        const char magic[4] = {'F', 'V', 'E', 'C'};
        const uint16_t version = kFvecVersion;
        const uint16_t L = static_cast<uint16_t>(fs.length());
        const uint32_t dim = static_cast<uint32_t>(fs.dim);
        const uint32_t reserved = 0;
        f.write(magic, 4);
        f.write(reinterpret_cast<const char*>(&version), 2);
        f.write(reinterpret_cast<const char*>(&L), 2);
        f.write(reinterpret_cast<const char*>(&dim), 4);
        f.write(reinterpret_cast<const char*>(&reserved), 4);
        for (const auto& step : fs.steps)
            f.write(reinterpret_cast<const char*>(step.data()),
                    static_cast<std::streamsize>(step.size() * sizeof(float)));
        if (!f) throw IoError("short write: " + tmp);
    }
    std::filesystem::rename(tmp, path);  // atomic publish; last writer wins
    const auto sidecar_tmp = path.string() + ".sha256" + unique_tmp_suffix();
    {
        std::ofstream f(sidecar_tmp, std::ios::trunc);
        f << source_hash << "\n";
    }
    std::filesystem::rename(sidecar_tmp, path.string() + ".sha256");
}

inline FeatureSequence read_fvec(const std::filesystem::path& path, Modality modality) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CacheCorrupt(path.string());
    char magic[4];
    uint16_t version = 0, L = 0;
    uint32_t dim = 0, reserved = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&version), 2);
    f.read(reinterpret_cast<char*>(&L), 2);
    f.read(reinterpret_cast<char*>(&dim), 4);
    f.read(reinterpret_cast<char*>(&reserved), 4);
    if (!f || std::memcmp(magic, "FVEC", 4) != 0 || version != kFvecVersion)
        throw CacheCorrupt(path.string());
    FeatureSequence fs;
    fs.modality = modality;
    fs.dim = static_cast<int>(dim);
    for (int t = 0; t < L; ++t) {
        std::vector<float> step(dim);
        f.read(reinterpret_cast<char*>(step.data()),
               static_cast<std::streamsize>(dim * sizeof(float)));
        if (!f) throw CacheCorrupt(path.string());
        fs.steps.push_back(std::move(step));
    }
    return fs;
}

inline std::string read_sidecar(const std::filesystem::path& fvec_path) {
    std::ifstream f(fvec_path.string() + ".sha256");
    std::string line;
    std::getline(f, line);
    return line;
}

}  // namespace detail

// Computes (or revalidates) cached features for every window of every trial
// in the manifest. Hits are bit-identical to recomputation; a modified source
// frame invalidates only the affected window files.
inline CacheIndex cache_features(const DatasetManifest& manifest,
                                 const FeatureExtractorSpec& spec, Modality modality, int seq_len,
                                 FrameFormat format, const std::filesystem::path& cache_root,
                                 WindowPattern pattern = WindowPattern::GAP) {
    CacheIndex index;
    for (const auto& entry : manifest.trials) {
        // Determine per-window staleness before loading any pixels.
        std::vector<std::pair<SampleKey, std::string>> stale;  // key -> fresh hash
        for (int s : kWindowStartOffsets) {
            const SampleKey key{entry.trial_id, s};
            const auto path = detail::cache_path(cache_root, spec, format, modality, seq_len, key);
            const auto indices = window_frame_indices(entry.lift_frame_index, s, seq_len, pattern);
            const std::string fresh = detail::source_frames_hash(manifest, entry, indices, modality);
            CacheEntry ce{key, path, false};
            if (std::filesystem::exists(path) && detail::read_sidecar(path) == fresh) {
                ce.was_hit = true;
                ++index.hits;
            } else {
                stale.emplace_back(key, fresh);
            }
            index.entries.push_back(std::move(ce));
        }
        if (stale.empty()) continue;

        const GraspTrial trial = load_trial(manifest, entry.trial_id);
        std::vector<SequenceSample> windows = extract_windows(trial, seq_len, pattern);
        for (auto& [key, fresh_hash] : stale) {
            for (auto& w : windows) {
                if (w.window_start_offset != key.offset) continue;
                const SequenceSample* sample = &w;
                SequenceSample diff;
                if (format == FrameFormat::DIFFERENCE) {
                    diff = to_difference(w);
                    sample = &diff;
                }
                const FeatureSequence fs = extract_sequence(*sample, spec, modality);
                const auto path =
                    detail::cache_path(cache_root, spec, format, modality, seq_len, key);
                detail::write_fvec(path, fs, fresh_hash);
                ++index.computed;
            }
        }
    }
    return index;
}

// Fetches one cached window; recomputes and overwrites on a hash mismatch or
// unreadable file.
inline FeatureSequence fetch_cached(const DatasetManifest& manifest,
                                    const FeatureExtractorSpec& spec, Modality modality,
                                    int seq_len, FrameFormat format,
                                    const std::filesystem::path& cache_root, const SampleKey& key,
                                    WindowPattern pattern = WindowPattern::GAP) {
    const ManifestEntry& entry = manifest.entry(key.trial_id);
    const auto path = detail::cache_path(cache_root, spec, format, modality, seq_len, key);
    const auto indices = window_frame_indices(entry.lift_frame_index, key.offset, seq_len, pattern);
    const std::string fresh = detail::source_frames_hash(manifest, entry, indices, modality);
    if (std::filesystem::exists(path) && detail::read_sidecar(path) == fresh) {
        try {
            return detail::read_fvec(path, modality);
        } catch (const CacheCorrupt&) {
            // fall through to recompute
        }
    }
    const GraspTrial trial = load_trial(manifest, key.trial_id);
    for (auto& w : extract_windows(trial, seq_len, pattern)) {
        if (w.window_start_offset != key.offset) continue;
        const SequenceSample sample = format == FrameFormat::DIFFERENCE ? to_difference(w) : w;
        FeatureSequence fs = extract_sequence(sample, spec, modality);
        detail::write_fvec(path, fs, fresh);
        return fs;
    }
    throw Error("window offset not found: " + std::to_string(key.offset));
}

}  // namespace slipfuse
