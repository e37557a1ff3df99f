#include <doctest.h>

#include <sstream>

#include "slipfuse/cli.hpp"
#include "test_support.hpp"

using namespace slipfuse;
using slipfuse::cli::run_cli;

TEST_SUITE_BEGIN("cli");

namespace {

int quiet_run(std::vector<std::string> args, std::string* out_text = nullptr,
              std::string* err_text = nullptr) {
    std::ostringstream out, err;
    const int code = run_cli(std::move(args), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

std::vector<std::string> synth_args(const std::filesystem::path& out, const std::string& scenarios,
                                    uint64_t seed = 0) {
    return {"synth",          "--out",       out.string(), "--scenarios", scenarios,
            "--seed",         std::to_string(seed),        "--size",      "48",
            "--marker-rows",  "3",           "--marker-cols", "3"};
}

}  // namespace

TEST_CASE("help exits 0, parse errors exit 2") {
    CHECK(quiet_run({"--help"}) == 0);
    CHECK(quiet_run({"frobnicate"}) == 2);
    CHECK(quiet_run({"synth", "--no-such-flag"}) == 2);
    CHECK(quiet_run({"synth"}) == 2);  // missing --out
    test_support::TempDir dir("usage");
    CHECK(quiet_run({"synth", "--out", (dir.path / "x").string(), "--scenarios",
                     "stable:abc"}) == 2);
}

TEST_CASE("synth: counts, label split, resolved config, reruns byte-identical") {
    test_support::TempDir dir("clisynth");
    std::string out;
    CHECK(quiet_run(synth_args(dir.path / "a", "stable:5,translational_slip:5"), &out) == 0);
    CHECK(out.find("10 trials") != std::string::npos);
    CHECK(out.find("5 slip") != std::string::npos);
    CHECK(std::filesystem::exists(dir.path / "a" / "resolved_config.json"));
    CHECK(load_dataset(dir.path / "a").trials.size() == 10);

    CHECK(quiet_run(synth_args(dir.path / "b", "stable:5,translational_slip:5"), &out) == 0);
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path / "a")) {
        if (!e.is_regular_file() || e.path().extension() != ".png") continue;
        const auto rel = std::filesystem::relative(e.path(), dir.path / "a");
        CHECK(png::read_file_bytes(e.path()) == png::read_file_bytes(dir.path / "b" / rel));
    }
}

TEST_CASE("synth: all:N expands to six scenarios") {
    test_support::TempDir dir("cliall");
    CHECK(quiet_run(synth_args(dir.path / "ds", "all:3")) == 0);
    const DatasetManifest m = load_dataset(dir.path / "ds");
    CHECK(m.trials.size() == 18);
    size_t slip = 0;
    for (const auto& t : m.trials)
        if (t.label == Label::SLIP) ++slip;
    CHECK(slip == 12);
    CHECK(m.trials.size() - slip == 6);
}

TEST_CASE("train, eval, predict, baseline: the full round trip") {
    test_support::TempDir dir("cliflow");
    // two small disjoint datasets
    REQUIRE(quiet_run(synth_args(dir.path / "train_ds",
                                 "stable:4,translational_slip:2,smooth_slip_vision_only:2")) == 0);
    REQUIRE(quiet_run(synth_args(dir.path / "test_ds",
                                 "stable:2,translational_slip:1,smooth_slip_vision_only:1", 900)) ==
            0);

    std::string out, err;
    const int train_code = quiet_run(
        {"train", "--dataset", (dir.path / "train_ds").string(), "--out",
         (dir.path / "run").string(), "--tiny-grid", "4", "--len", "6", "--epochs", "3",
         "--batch", "8", "--patience", "10", "--seed", "1"},
        &out, &err);
    CHECK(train_code == 0);
    const auto ckpt = dir.path / "run" / "checkpoint_best.bin";
    CHECK(std::filesystem::exists(ckpt));
    CHECK(std::filesystem::exists(dir.path / "run" / "resolved_config.json"));
    CHECK(std::filesystem::exists(dir.path / "run" / "report.jsonl"));
    CHECK(std::filesystem::exists(dir.path / "run" / "summary.json"));

    // eval on the disjoint set succeeds and writes reports
    CHECK(quiet_run({"eval", "--dataset", (dir.path / "test_ds").string(), "--checkpoint",
                     ckpt.string(), "--out", (dir.path / "eval").string()},
                    &out) == 0);
    CHECK(out.find("accuracy") != std::string::npos);
    CHECK(std::filesystem::exists(dir.path / "eval" / "report.json"));
    CHECK(std::filesystem::exists(dir.path / "eval" / "report.csv"));

    // eval on the training set trips the leakage check (domain error -> 1)
    CHECK(quiet_run({"eval", "--dataset", (dir.path / "train_ds").string(), "--checkpoint",
                     ckpt.string(), "--out", (dir.path / "eval2").string()},
                    &out, &err) == 1);
    CHECK(err.find("both train and test") != std::string::npos);

    // predict: five windows plus a verdict
    CHECK(quiet_run({"predict", "--dataset", (dir.path / "test_ds").string(), "--trial-id",
                     "stable_0000_s900", "--checkpoint", ckpt.string(), "--out",
                     (dir.path / "pred").string()},
                    &out) == 0);
    CHECK(out.find("window -2") != std::string::npos);
    CHECK(out.find("window +3") != std::string::npos);
    CHECK(out.find("grasp verdict") != std::string::npos);

    // predict --json is machine readable
    CHECK(quiet_run({"predict", "--dataset", (dir.path / "test_ds").string(), "--trial-id",
                     "stable_0000_s900", "--checkpoint", ckpt.string(), "--out",
                     (dir.path / "pred").string(), "--json"},
                    &out) == 0);
    const nlohmann::json pj = nlohmann::json::parse(out);
    CHECK(pj.at("trial_id") == "stable_0000_s900");
    CHECK(pj.at("windows").size() == 5);

    // missing checkpoint: exit 2, message names the path
    const std::string missing = (dir.path / "nope.bin").string();
    CHECK(quiet_run({"predict", "--dataset", (dir.path / "test_ds").string(), "--trial-id",
                     "stable_0000_s900", "--checkpoint", missing, "--out",
                     (dir.path / "pred").string()},
                    &out, &err) == 2);
    CHECK(err.find(missing) != std::string::npos);

    // baseline over the test set writes verdicts
    CHECK(quiet_run({"baseline", "--dataset", (dir.path / "test_ds").string(), "--out",
                     (dir.path / "bl").string(), "--len", "6"},
                    &out) == 0);
    CHECK(out.find("baseline accuracy") != std::string::npos);
    CHECK(std::filesystem::exists(dir.path / "bl" / "baseline_verdicts.csv"));

    // difference format and length 9 route through the same pipeline
    CHECK(quiet_run({"train", "--dataset", (dir.path / "train_ds").string(), "--out",
                     (dir.path / "run_diff").string(), "--tiny-grid", "4", "--format", "diff",
                     "--len", "9", "--epochs", "2", "--batch", "8", "--seed", "2"},
                    &out) == 0);
    const LoadedCheckpoint diff_ckpt =
        load_checkpoint(dir.path / "run_diff" / "checkpoint_best.bin");
    CHECK(diff_ckpt.meta.at("format") == "diff");
    CHECK(diff_ckpt.state.config.seq_len == 9);
}

TEST_CASE("ablate: table output, partial and total failure exit codes") {
    test_support::TempDir dir("cliablate");
    REQUIRE(quiet_run(synth_args(dir.path / "ds", "stable:4,translational_slip:4")) == 0);

    std::string out;
    // two cells, both fine -> 0
    CHECK(quiet_run({"ablate", "--dataset", (dir.path / "ds").string(), "--out",
                     (dir.path / "ab1").string(), "--axes", "format", "--modality",
                     "tactile-vision", "--tiny-grid", "4", "--len", "6", "--epochs", "2",
                     "--batch", "8", "--train-frac", "0.75"},
                    &out) == 0);
    CHECK(std::filesystem::exists(dir.path / "ab1" / "report.csv"));
    CHECK(std::filesystem::exists(dir.path / "ab1" / "report.json"));
    CHECK(std::filesystem::exists(dir.path / "ab1" / "table.txt"));
    CHECK(out.find("Reference") != std::string::npos);

    // mixed backbones: vgg cells error, tiny cells pass -> exit 0 with marks
    CHECK(quiet_run({"ablate", "--dataset", (dir.path / "ds").string(), "--out",
                     (dir.path / "ab2").string(), "--axes", "backbone", "--backbones",
                     "tiny,vgg16_fc7", "--modality", "tactile", "--tiny-grid", "4", "--len", "6",
                     "--epochs", "2", "--batch", "8", "--train-frac", "0.75"},
                    &out) == 0);
    CHECK(out.find("errored") != std::string::npos);

    // every cell fails -> exit 1
    CHECK(quiet_run({"ablate", "--dataset", (dir.path / "ds").string(), "--out",
                     (dir.path / "ab3").string(), "--backbone", "vgg16_fc7", "--axes", "format",
                     "--len", "6", "--epochs", "1", "--train-frac", "0.75"},
                    &out) == 1);
}

TEST_CASE("ingest builds a loadable trial from loose frames") {
    test_support::TempDir dir("cliingest");
    // loose frames with arbitrary names
    SynthParams p;
    p.image_width = p.image_height = 48;
    p.marker_rows = p.marker_cols = 3;
    const GraspTrial t = generate_trial(Scenario::STABLE, p);
    std::filesystem::create_directories(dir.path / "loose_ext");
    std::filesystem::create_directories(dir.path / "loose_gel");
    for (size_t i = 0; i < t.external_frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%03zu.png", i);
        png::write(dir.path / "loose_ext" / name, t.external_frames[i]);
        png::write(dir.path / "loose_gel" / name, t.gelsight_frames[i]);
    }

    std::string out, err;
    CHECK(quiet_run({"ingest", "--external", (dir.path / "loose_ext").string(), "--gelsight",
                     (dir.path / "loose_gel").string(), "--out", (dir.path / "ds").string(),
                     "--trial-id", "grasp_001", "--label", "stable", "--lift-index", "4"},
                    &out) == 0);
    const DatasetManifest m = load_dataset(dir.path / "ds");
    REQUIRE(m.trials.size() == 1);
    CHECK(m.trials[0].trial_id == "grasp_001");
    const GraspTrial back = load_trial(m, "grasp_001");
    CHECK(back.external_frames.size() == t.external_frames.size());
    CHECK(back.external_frames[0] == t.external_frames[0]);

    // duplicate ingest is rejected as a domain error
    CHECK(quiet_run({"ingest", "--external", (dir.path / "loose_ext").string(), "--gelsight",
                     (dir.path / "loose_gel").string(), "--out", (dir.path / "ds").string(),
                     "--trial-id", "grasp_001", "--label", "stable", "--lift-index", "4"},
                    &out, &err) == 1);
    CHECK(err.find("already in manifest") != std::string::npos);
}

TEST_CASE("config file supplies defaults; flags override") {
    test_support::TempDir dir("cliconfig");
    const nlohmann::json config = {{"out", (dir.path / "from_config").string()},
                                   {"scenarios", "stable:2,translational_slip:2"},
                                   {"image_size", 48},
                                   {"marker_rows", 3},
                                   {"marker_cols", 3},
                                   {"seed", 4}};
    std::ofstream(dir.path / "config.json") << config.dump();

    CHECK(quiet_run({"synth", "--config", (dir.path / "config.json").string()}) == 0);
    CHECK(load_dataset(dir.path / "from_config").trials.size() == 4);

    // flag overrides the config's output directory
    CHECK(quiet_run({"synth", "--config", (dir.path / "config.json").string(), "--out",
                     (dir.path / "override").string()}) == 0);
    CHECK(load_dataset(dir.path / "override").trials.size() == 4);

    // resolved_config.json reproduces the run
    nlohmann::json resolved;
    std::ifstream(dir.path / "override" / "resolved_config.json") >> resolved;
    CHECK(resolved.at("command") == "synth");
    CHECK(resolved.at("options").at("scenarios") == "stable:2,translational_slip:2");
    CHECK(resolved.at("options").at("seed") == 4);

    // feeding the emitted resolved config back in reproduces the dataset bytes
    CHECK(quiet_run({"synth", "--config",
                     (dir.path / "override" / "resolved_config.json").string(), "--out",
                     (dir.path / "replay").string()}) == 0);
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path / "override")) {
        if (!e.is_regular_file() || e.path().extension() != ".png") continue;
        const auto rel = std::filesystem::relative(e.path(), dir.path / "override");
        CHECK(png::read_file_bytes(e.path()) == png::read_file_bytes(dir.path / "replay" / rel));
    }
}

TEST_SUITE_END();
