#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "slipfuse/dataset.hpp"
#include "slipfuse/features.hpp"
#include "slipfuse/training.hpp"

namespace slipfuse {

// Everything between a dataset on disk and a flat feature tensor.
struct PipelineConfig {
    FeatureExtractorSpec extractor;
    Modality modality = Modality::FUSED_PAIR;
    FrameFormat format = FrameFormat::RAW;
    int seq_len = 8;
    WindowPattern pattern = WindowPattern::GAP;

    int feature_dim() const {
        const int base = extractor.output_dim();
        return modality == Modality::FUSED_PAIR ? 2 * base : base;
    }
};

namespace detail {

inline std::vector<LabeledSequence> build_trial_sequences(const DatasetManifest& manifest,
                                                          const std::string& trial_id,
                                                          const std::vector<int>& offsets,
                                                          const PipelineConfig& cfg) {
    const GraspTrial trial = load_trial(manifest, trial_id);
    std::vector<SequenceSample> windows = extract_windows(trial, cfg.seq_len, cfg.pattern);

    std::vector<LabeledSequence> out;
    out.reserve(offsets.size());

    if (cfg.format == FrameFormat::RAW) {
        // Raw windows share frames; extract each needed frame once per stream.
        std::map<int, std::vector<float>> gel_feats, ext_feats;
        for (const auto& w : windows) {
            bool wanted = false;
            for (int o : offsets) wanted |= (o == w.window_start_offset);
            if (!wanted) continue;
            for (int idx : w.frame_indices) {
                if (cfg.modality != Modality::VISION && !gel_feats.count(idx))
                    gel_feats[idx] = extract(trial.gelsight_frames[idx], cfg.extractor);
                if (cfg.modality != Modality::TACTILE && !ext_feats.count(idx))
                    ext_feats[idx] = extract(trial.external_frames[idx], cfg.extractor);
            }
        }
        for (const auto& w : windows) {
            bool wanted = false;
            for (int o : offsets) wanted |= (o == w.window_start_offset);
            if (!wanted) continue;
            LabeledSequence seq;
            seq.trial_id = trial_id;
            seq.offset = w.window_start_offset;
            seq.label = w.label;
            seq.features.reserve(static_cast<size_t>(cfg.seq_len) * cfg.feature_dim());
            for (int idx : w.frame_indices) {
                if (cfg.modality != Modality::VISION) {
                    const auto& f = gel_feats[idx];
                    seq.features.insert(seq.features.end(), f.begin(), f.end());
                }
                if (cfg.modality != Modality::TACTILE) {
                    const auto& f = ext_feats[idx];
                    seq.features.insert(seq.features.end(), f.begin(), f.end());
                }
            }
            out.push_back(std::move(seq));
        }
    } else {
        for (const auto& w : windows) {
            bool wanted = false;
            for (int o : offsets) wanted |= (o == w.window_start_offset);
            if (!wanted) continue;
            const SequenceSample diff = to_difference(w);
            const FeatureSequence fs = extract_sequence(diff, cfg.extractor, cfg.modality);
            LabeledSequence seq;
            seq.trial_id = trial_id;
            seq.offset = w.window_start_offset;
            seq.label = w.label;
            seq.features = fs.flat();
            out.push_back(std::move(seq));
        }
    }
    return out;
}

}  // namespace detail

// Builds model-ready sequences for the given window keys. With a cache root
// the on-disk feature cache is used; otherwise features are computed in
// memory (raw frames extracted once per trial). `workers` > 1 parallelizes
// across trials; output order matches the key order either way.
inline std::vector<LabeledSequence> build_sequences(const DatasetManifest& manifest,
                                                    const std::vector<SampleKey>& keys,
                                                    const PipelineConfig& cfg,
                                                    const std::filesystem::path& cache_root = {},
                                                    int workers = 1) {
    // group keys by trial, remembering each key's slot in the output
    std::vector<std::string> trial_order;
    std::map<std::string, std::vector<std::pair<int, size_t>>> per_trial;  // offset, out slot
    for (size_t i = 0; i < keys.size(); ++i) {
        if (!per_trial.count(keys[i].trial_id)) trial_order.push_back(keys[i].trial_id);
        per_trial[keys[i].trial_id].push_back({keys[i].offset, i});
    }

    std::vector<LabeledSequence> out(keys.size());
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;

    auto work = [&]() {
        for (;;) {
            const size_t ti = next.fetch_add(1);
            if (ti >= trial_order.size() || failed.load()) return;
            const std::string& trial_id = trial_order[ti];
            try {
                const auto& slots = per_trial[trial_id];
                if (!cache_root.empty()) {
                    const Label label = manifest.entry(trial_id).label;
                    for (const auto& [offset, slot] : slots) {
                        const FeatureSequence fs =
                            fetch_cached(manifest, cfg.extractor, cfg.modality, cfg.seq_len,
                                         cfg.format, cache_root, {trial_id, offset}, cfg.pattern);
                        out[slot] = {trial_id, offset, fs.flat(), label};
                    }
                } else {
                    std::vector<int> offsets;
                    for (const auto& [offset, slot] : slots) offsets.push_back(offset);
                    auto seqs = detail::build_trial_sequences(manifest, trial_id, offsets, cfg);
                    for (auto& seq : seqs)
                        for (const auto& [offset, slot] : slots)
                            if (offset == seq.offset) out[slot] = seq;
                }
            } catch (const std::exception& e) {
                std::lock_guard lock(error_mutex);
                if (!failed.exchange(true)) first_error = e.what();
                return;
            }
        }
    };

    const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(trial_order.size())));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failed.load()) throw Error(first_error);
    return out;
}

inline std::vector<SampleKey> keys_for_trials(const std::vector<std::string>& trial_ids) {
    std::vector<SampleKey> keys;
    keys.reserve(trial_ids.size() * kWindowStartOffsets.size());
    for (const auto& id : trial_ids)
        for (int s : kWindowStartOffsets) keys.push_back({id, s});
    return keys;
}

}  // namespace slipfuse
