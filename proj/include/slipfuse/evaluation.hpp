#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slipfuse/errors.hpp"
#include "slipfuse/model.hpp"
#include "slipfuse/pipeline.hpp"
#include "slipfuse/training.hpp"

namespace slipfuse {

struct EvalKey {
    FrameFormat format = FrameFormat::RAW;
    std::string backbone;
    Modality modality = Modality::FUSED_PAIR;
    int seq_len = 8;
};

// Window-level accuracy with confusion counts (SLIP is the positive class).
// grasp_majority_accuracy is a secondary, non-reference metric: one verdict
// per trial by majority vote over its windows.
struct EvalRow {
    EvalKey key;
    double accuracy = 0;
    int total = 0;
    int tp = 0, fp = 0, tn = 0, fn = 0;
    double grasp_majority_accuracy = 0;
    bool errored = false;
    std::string error;
};

struct EvalReport {
    std::vector<EvalRow> rows;
};

// Deterministic evaluation of a frozen state. Train/test disjointness is
// enforced at trial granularity before anything is scored.
inline EvalRow evaluate(const ModelState& state, const std::vector<LabeledSequence>& test_samples,
                        const std::vector<std::string>& train_trial_ids, const EvalKey& key) {
    const std::set<std::string> train_set(train_trial_ids.begin(), train_trial_ids.end());
    for (const auto& s : test_samples)
        if (train_set.count(s.trial_id)) throw LeakageError(s.trial_id);

    EvalRow row;
    row.key = key;
    row.total = static_cast<int>(test_samples.size());

    std::map<std::string, std::pair<int, int>> per_trial;  // slip votes, stable votes
    std::map<std::string, Label> trial_label;
    for (const auto& s : test_samples) {
        const Prediction pred = predict_label(state, std::span<const float>(s.features));
        const bool truth_slip = s.label == Label::SLIP;
        const bool pred_slip = pred.label == Label::SLIP;
        if (truth_slip && pred_slip) ++row.tp;
        else if (!truth_slip && pred_slip) ++row.fp;
        else if (!truth_slip && !pred_slip) ++row.tn;
        else ++row.fn;
        auto& votes = per_trial[s.trial_id];
        (pred_slip ? votes.first : votes.second) += 1;
        trial_label[s.trial_id] = s.label;
    }
    row.accuracy = row.total ? static_cast<double>(row.tp + row.tn) / row.total : 0.0;

    int grasp_correct = 0;
    for (const auto& [id, votes] : per_trial) {
        const Label verdict = votes.first >= votes.second ? Label::SLIP : Label::STABLE;
        if (verdict == trial_label[id]) ++grasp_correct;
    }
    row.grasp_majority_accuracy =
        per_trial.empty() ? 0.0 : static_cast<double>(grasp_correct) / per_trial.size();
    return row;
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

struct AblationGrid {
    std::vector<FrameFormat> formats = {FrameFormat::RAW};
    std::vector<FeatureExtractorSpec> backbones = {FeatureExtractorSpec{}};
    std::vector<Modality> modalities = {Modality::FUSED_PAIR};
    std::vector<int> seq_lens = {8};
};

// Trains and evaluates one model per grid cell on a split shared across
// cells. A failing cell is recorded as errored and does not abort the rest.
inline EvalReport run_ablation(const DatasetManifest& manifest, const AblationGrid& grid,
                               const ModelConfig& base_model_config,
                               const TrainConfig& train_config, double train_fraction,
                               SplitMode split_mode = SplitMode::BY_TRIAL,
                               const std::filesystem::path& cache_root = {}, int workers = 1,
                               std::ostream* progress = nullptr) {
    const SplitResult split = make_splits(manifest, train_fraction, train_config.seed, split_mode);
    EvalReport report;
    for (FrameFormat format : grid.formats)
        for (const FeatureExtractorSpec& backbone : grid.backbones)
            for (Modality modality : grid.modalities)
                for (int seq_len : grid.seq_lens) {
                    EvalRow row;
                    row.key = {format, backbone.cache_name(), modality, seq_len};
                    if (progress)
                        (*progress) << "[ablate] " << to_string(format) << " x "
                                    << backbone.cache_name() << " x " << to_string(modality)
                                    << " x L=" << seq_len << "\n";
                    try {
                        PipelineConfig pipe{backbone, modality, format, seq_len};
                        const auto train_seqs = build_sequences(manifest, split.train_samples,
                                                                pipe, cache_root, workers);
                        const auto val_seqs = build_sequences(manifest, split.validation_samples,
                                                              pipe, cache_root, workers);
                        ModelConfig mc = base_model_config;
                        mc.input_dim = pipe.feature_dim();
                        mc.seq_len = seq_len;
                        TrainResult tr = train(mc, train_config, train_seqs, val_seqs);
                        row = evaluate(tr.best_state, val_seqs, split.train_trials, row.key);
                    } catch (const std::exception& e) {
                        row.errored = true;
                        row.error = e.what();
                    }
                    report.rows.push_back(std::move(row));
                }
    return report;
}

// ---------------------------------------------------------------------------
// Report formatting
// ---------------------------------------------------------------------------

enum class ReportStyle { TABLE_I, TABLE_II, CSV, JSON };

namespace detail {

inline std::string pct(double v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
    return buf;
}

inline std::string pad(const std::string& s, size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

// Reference accuracies measured on the full-scale robot dataset (1102 grasps,
// ImageNet-pretrained backbones). Printed in footers for side-by-side
// comparison; never asserted against desk-scale runs.
struct ReferenceRow {
    const char* format;
    const char* backbone;
    double fused, tactile, vision;
};
inline const std::vector<ReferenceRow>& table1_reference() {
    static const std::vector<ReferenceRow> rows = {
        {"raw", "vgg16_fc7", 82.11, 81.84, 55.13},
        {"raw", "vgg19_fc7", 78.55, 75.39, 55.39},
        {"raw", "inception_v3_pool3", 88.03, 82.24, 53.68},
        {"diff", "vgg16_fc7", 87.76, 74.87, 79.74},
        {"diff", "vgg19_fc7", 85.53, 76.18, 77.37},
        {"diff", "inception_v3_pool3", 83.68, 78.82, 80.92},
    };
    return rows;
}
struct ReferenceLengthRow {
    const char* parameter;
    double a6, a7, a8, a9;
};
inline const std::vector<ReferenceLengthRow>& table2_reference() {
    static const std::vector<ReferenceLengthRow> rows = {
        {"raw image, inception_v3_pool3", 86.71, 83.95, 88.03, 86.45},
        {"image difference, vgg16_fc7", 84.08, 85.79, 87.76, 86.58},
        {"marker-threshold detector", 53.28, 63.81, 78.28, 82.24},
    };
    return rows;
}

inline const EvalRow* find_row(const EvalReport& r, FrameFormat f, const std::string& backbone,
                               Modality m, int L) {
    for (const auto& row : r.rows)
        if (row.key.format == f && row.key.backbone == backbone && row.key.modality == m &&
            row.key.seq_len == L)
            return &row;
    return nullptr;
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : report.rows) {
        j.push_back({{"format", to_string(r.key.format)},
                     {"backbone", r.key.backbone},
                     {"modality", to_string(r.key.modality)},
                     {"seq_len", r.key.seq_len},
                     {"accuracy", r.accuracy},
                     {"total", r.total},
                     {"tp", r.tp},
                     {"fp", r.fp},
                     {"tn", r.tn},
                     {"fn", r.fn},
                     {"grasp_majority_accuracy", r.grasp_majority_accuracy},
                     {"errored", r.errored},
                     {"error", r.error}});
    }
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport report;
    for (const auto& rj : j) {
        EvalRow r;
        r.key.format = rj.at("format").get<std::string>() == "raw" ? FrameFormat::RAW
                                                                   : FrameFormat::DIFFERENCE;
        r.key.backbone = rj.at("backbone").get<std::string>();
        r.key.modality = modality_from_string(rj.at("modality").get<std::string>());
        r.key.seq_len = rj.at("seq_len").get<int>();
        r.accuracy = rj.at("accuracy").get<double>();
        r.total = rj.at("total").get<int>();
        r.tp = rj.at("tp").get<int>();
        r.fp = rj.at("fp").get<int>();
        r.tn = rj.at("tn").get<int>();
        r.fn = rj.at("fn").get<int>();
        r.grasp_majority_accuracy = rj.at("grasp_majority_accuracy").get<double>();
        r.errored = rj.at("errored").get<bool>();
        r.error = rj.at("error").get<std::string>();
        report.rows.push_back(std::move(r));
    }
    return report;
}

inline std::string format_report(const EvalReport& report, ReportStyle style) {
    using detail::pad;
    using detail::pct;

    if (style == ReportStyle::JSON) return report_to_json(report).dump(2) + "\n";

    if (style == ReportStyle::CSV) {
        std::ostringstream s;
        s << "format,backbone,modality,seq_len,accuracy,total,tp,fp,tn,fn,"
             "grasp_majority_accuracy,errored,error\n";
        for (const auto& r : report.rows) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s,%s,%s,%d,%.10g,%d,%d,%d,%d,%d,%.10g,%d,",
                          to_string(r.key.format).c_str(), r.key.backbone.c_str(),
                          to_string(r.key.modality).c_str(), r.key.seq_len, r.accuracy, r.total,
                          r.tp, r.fp, r.tn, r.fn, r.grasp_majority_accuracy, r.errored ? 1 : 0);
            std::string err = r.error;
            std::replace(err.begin(), err.end(), ',', ';');
            std::replace(err.begin(), err.end(), '\n', ' ');
            s << buf << err << "\n";
        }
        return s.str();
    }

    if (style == ReportStyle::TABLE_I) {
        // rows: input format x backbone; columns: the modalities present
        std::vector<std::pair<FrameFormat, std::string>> row_keys;
        std::set<int> lens;
        std::set<Modality> seen_modalities;
        for (const auto& r : report.rows) {
            const auto key = std::pair{r.key.format, r.key.backbone};
            if (std::find(row_keys.begin(), row_keys.end(), key) == row_keys.end())
                row_keys.push_back(key);
            lens.insert(r.key.seq_len);
            seen_modalities.insert(r.key.modality);
        }
        std::vector<Modality> cols;
        for (Modality m : {Modality::FUSED_PAIR, Modality::TACTILE, Modality::VISION})
            if (seen_modalities.count(m)) cols.push_back(m);
        std::string missing;
        for (const auto& [f, b] : row_keys)
            for (Modality m : cols)
                for (int L : lens)
                    if (!detail::find_row(report, f, b, m, L))
                        missing += " (" + to_string(f) + "," + b + "," + to_string(m) + ")";
        if (!missing.empty()) throw MissingCells(missing);

        std::ostringstream s;
        s << pad("input", 8) << pad("feature", 22);
        for (Modality m : cols)
            s << pad(to_string(m), m == Modality::FUSED_PAIR ? 16 : 12);
        s << "\n";
        s << std::string(30 + 16 * (seen_modalities.count(Modality::FUSED_PAIR) ? 1 : 0) +
                             12 * (cols.size() - (seen_modalities.count(Modality::FUSED_PAIR) ? 1 : 0)),
                         '-')
          << "\n";
        for (int L : lens) {
            for (const auto& [f, b] : row_keys) {
                s << pad(to_string(f), 8) << pad(b, 22);
                for (Modality m : cols) {
                    const EvalRow* r = detail::find_row(report, f, b, m, L);
                    const size_t w = m == Modality::FUSED_PAIR ? 16 : 12;
                    s << pad(r->errored ? "errored" : pct(r->accuracy), w);
                }
                s << "\n";
            }
        }
        s << "\nReference results, full-scale robot dataset (1102 grasps, pretrained "
             "backbones; for comparison only):\n";
        for (const auto& ref : detail::table1_reference()) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "  %-6s %-20s %6.2f%%  %6.2f%%  %6.2f%%\n", ref.format,
                          ref.backbone, ref.fused, ref.tactile, ref.vision);
            s << buf;
        }
        return s.str();
    }

    // TABLE_II: rows = model parameterization, columns = input length
    std::vector<std::tuple<FrameFormat, std::string, Modality>> row_keys;
    std::set<int> lens;
    for (const auto& r : report.rows) {
        const auto key = std::tuple{r.key.format, r.key.backbone, r.key.modality};
        if (std::find(row_keys.begin(), row_keys.end(), key) == row_keys.end())
            row_keys.push_back(key);
        lens.insert(r.key.seq_len);
    }
    std::string missing;
    for (const auto& [f, b, m] : row_keys)
        for (int L : lens)
            if (!detail::find_row(report, f, b, m, L))
                missing += " (" + to_string(f) + "," + b + "," + to_string(m) + ",L=" +
                           std::to_string(L) + ")";
    if (!missing.empty()) throw MissingCells(missing);

    std::ostringstream s;
    s << pad("model parameter", 34);
    for (int L : lens) s << pad(std::to_string(L), 9);
    s << "\n" << std::string(34 + 9 * lens.size(), '-') << "\n";
    for (const auto& [f, b, m] : row_keys) {
        s << pad(to_string(f) + " image, " + b + " (" + to_string(m) + ")", 34);
        for (int L : lens) {
            const EvalRow* r = detail::find_row(report, f, b, m, L);
            s << pad(r->errored ? "errored" : pct(r->accuracy), 9);
        }
        s << "\n";
    }
    s << "\nReference results, full-scale robot dataset, input lengths 6/7/8/9 (for "
         "comparison only):\n";
    for (const auto& ref : detail::table2_reference()) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "  %-32s %6.2f%%  %6.2f%%  %6.2f%%  %6.2f%%\n",
                      ref.parameter, ref.a6, ref.a7, ref.a8, ref.a9);
        s << buf;
    }
    return s.str();
}

inline EvalReport parse_report_csv(const std::string& csv) {
    EvalReport report;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        fields.push_back(cur);
        if (fields.size() < 13) throw Error("malformed report CSV line: " + line);
        EvalRow r;
        r.key.format = fields[0] == "raw" ? FrameFormat::RAW : FrameFormat::DIFFERENCE;
        r.key.backbone = fields[1];
        r.key.modality = modality_from_string(fields[2]);
        r.key.seq_len = std::stoi(fields[3]);
        r.accuracy = std::stod(fields[4]);
        r.total = std::stoi(fields[5]);
        r.tp = std::stoi(fields[6]);
        r.fp = std::stoi(fields[7]);
        r.tn = std::stoi(fields[8]);
        r.fn = std::stoi(fields[9]);
        r.grasp_majority_accuracy = std::stod(fields[10]);
        r.errored = fields[11] == "1";
        r.error = fields[12];
        report.rows.push_back(std::move(r));
    }
    return report;
}

}  // namespace slipfuse
