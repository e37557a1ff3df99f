#include <doctest.h>

#include <cstring>
#include <thread>

#include "slipfuse/features.hpp"
#include "slipfuse/pipeline.hpp"
#include "slipfuse/synthgrasp.hpp"
#include "test_support.hpp"

using namespace slipfuse;

TEST_SUITE_BEGIN("features");

// Independent reference: plain double loops over pixels, one cell at a time.
static std::vector<float> reference_patch_stats(const Image& img, int grid) {
    std::vector<float> out;
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
            const int y0 = gy * img.height / grid, y1 = (gy + 1) * img.height / grid;
            const int x0 = gx * img.width / grid, x1 = (gx + 1) * img.width / grid;
            for (int c = 0; c < 3; ++c) {
                double sum = 0;
                int n = 0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) {
                        sum += img.at(x, y, c);
                        ++n;
                    }
                const double mean = sum / n;
                double var = 0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) {
                        const double d = img.at(x, y, c) - mean;
                        var += d * d;
                    }
                out.push_back(static_cast<float>(mean));
                out.push_back(static_cast<float>(std::sqrt(var / n)));
            }
        }
    return out;
}

struct AdapterGuard {
    Backbone name;
    AdapterGuard(Backbone n, std::shared_ptr<BackboneAdapter> a) : name(n) {
        register_backbone_adapter(n, std::move(a));
    }
    ~AdapterGuard() { unregister_backbone_adapter(name); }
};

struct FakeAdapter : BackboneAdapter {
    int dim;
    int seen_w = 0, seen_h = 0;
    explicit FakeAdapter(int d) : dim(d) {}
    std::vector<float> extract(const Image& resized) override {
        seen_w = resized.width;
        seen_h = resized.height;
        std::vector<float> v(dim, 0.0f);
        for (size_t i = 0; i < resized.data.size(); ++i)
            v[i % dim] += resized.data[i] * 1e-3f;
        return v;
    }
};

TEST_CASE("uniform gray image: means 128, stds 0, dim 384") {
    const Image img(64, 64, 128);
    FeatureExtractorSpec spec;  // TINY, G=8
    const std::vector<float> v = extract(img, spec);
    REQUIRE(v.size() == 384);
    for (size_t i = 0; i < v.size(); i += 2) {
        CHECK(v[i] == 128.0f);
        CHECK(v[i + 1] == 0.0f);
    }
}

TEST_CASE("tiny stats match the scalar reference on random images") {
    Rng rng(55);
    for (int rep = 0; rep < 10; ++rep) {
        const int w = 16 + static_cast<int>(rng.next_below(60));
        const int h = 16 + static_cast<int>(rng.next_below(60));
        const Image img = test_support::random_image(rng, w, h);
        for (int grid : {4, 8}) {
            FeatureExtractorSpec spec;
            spec.tiny_grid = grid;
            const auto got = extract(img, spec);
            const auto want = reference_patch_stats(img, grid);
            REQUIRE(got.size() == want.size());
            for (size_t i = 0; i < got.size(); ++i)
                CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-5));
        }
    }
}

TEST_CASE("output dimension contract per backbone") {
    FeatureExtractorSpec tiny;
    CHECK(tiny.output_dim() == 384);
    tiny.tiny_grid = 4;
    CHECK(tiny.output_dim() == 96);
    FeatureExtractorSpec vgg16{Backbone::VGG16_FC7};
    CHECK(vgg16.output_dim() == 4096);
    FeatureExtractorSpec vgg19{Backbone::VGG19_FC7};
    CHECK(vgg19.output_dim() == 4096);
    FeatureExtractorSpec inception{Backbone::INCEPTION_V3_POOL3};
    CHECK(inception.output_dim() == 2048);
    CHECK(inception.input_size() == std::pair{299, 299});
    CHECK(vgg16.input_size() == std::pair{224, 224});
}

TEST_CASE("tiny extractor is translation sensitive") {
    // a bright block in the top-left cell, then shifted by one cell width
    Image a(64, 64, 20), b(64, 64, 20);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) {
                a.at(x, y, c) = 250;
                b.at(x + 8, y, c) = 250;
            }
    FeatureExtractorSpec spec;
    CHECK(extract(a, spec) != extract(b, spec));
}

TEST_CASE("pretrained backbones raise BackendUnavailable until an adapter is installed") {
    const Image img(32, 32, 99);
    FeatureExtractorSpec spec{Backbone::VGG16_FC7};
    CHECK_THROWS_AS(extract(img, spec), BackendUnavailable);
    CHECK(!backbone_available(spec));
    {
        AdapterGuard guard(Backbone::VGG16_FC7, std::make_shared<FakeAdapter>(4096));
        CHECK(backbone_available(spec));
        const auto v = extract(img, spec);
        CHECK(v.size() == 4096);
    }
    CHECK_THROWS_AS(extract(img, spec), BackendUnavailable);
}

TEST_CASE("adapter input is resized to the extractor's input size") {
    const Image img(32, 48, 10);
    auto fake = std::make_shared<FakeAdapter>(2048);
    AdapterGuard guard(Backbone::INCEPTION_V3_POOL3, fake);
    extract(img, FeatureExtractorSpec{Backbone::INCEPTION_V3_POOL3});
    CHECK(fake->seen_w == 299);
    CHECK(fake->seen_h == 299);
}

TEST_CASE("adapter returning the wrong dimension is rejected") {
    const Image img(32, 32, 10);
    AdapterGuard guard(Backbone::VGG19_FC7, std::make_shared<FakeAdapter>(1000));
    CHECK_THROWS_AS(extract(img, FeatureExtractorSpec{Backbone::VGG19_FC7}), ShapeMismatch);
}

TEST_CASE("tiny extractor cannot be replaced") {
    CHECK_THROWS_AS(
        register_backbone_adapter(Backbone::TINY_PATCH_STATS, std::make_shared<FakeAdapter>(1)),
        InvalidParams);
}

static SequenceSample synth_window(uint64_t seed,
                                   Scenario scenario = Scenario::TRANSLATIONAL_SLIP) {
    SynthParams p;
    p.image_width = p.image_height = 64;
    p.marker_rows = p.marker_cols = 4;
    p.rng_seed = seed;
    GraspTrial t = generate_trial(scenario, p);
    t.trial_id = "w" + std::to_string(seed);
    return extract_windows(t, 8)[0];
}

TEST_CASE("extract_sequence: fused pairs concatenate tactile first") {
    const SequenceSample w = synth_window(3);
    FeatureExtractorSpec spec;
    const FeatureSequence fused = extract_sequence(w, spec, Modality::FUSED_PAIR);
    const FeatureSequence tact = extract_sequence(w, spec, Modality::TACTILE);
    const FeatureSequence vis = extract_sequence(w, spec, Modality::VISION);
    REQUIRE(fused.length() == 8);
    CHECK(fused.dim == 768);
    CHECK(tact.dim == 384);
    CHECK(vis.dim == 384);
    for (size_t t = 0; t < 8; ++t) {
        REQUIRE(fused.steps[t].size() == 768);
        for (int i = 0; i < 384; ++i) {
            CHECK(fused.steps[t][i] == tact.steps[t][i]);
            CHECK(fused.steps[t][384 + i] == vis.steps[t][i]);
        }
    }
}

// --- cache ---

static DatasetManifest small_dataset(const std::filesystem::path& root, int n_per = 3) {
    SynthParams p;
    p.image_width = p.image_height = 48;
    p.marker_rows = p.marker_cols = 3;
    return generate_dataset(
        {{Scenario::STABLE, n_per}, {Scenario::TRANSLATIONAL_SLIP, n_per}}, p, root);
}

TEST_CASE("cache: one window file per trial/offset, second run all hits") {
    test_support::TempDir dir("cache1");
    const DatasetManifest m = small_dataset(dir.path / "ds");
    const auto cache = dir.path / "cache";
    FeatureExtractorSpec spec;

    const CacheIndex first =
        cache_features(m, spec, Modality::FUSED_PAIR, 8, FrameFormat::RAW, cache);
    CHECK(first.entries.size() == 30);  // 6 trials x 5 windows
    CHECK(first.computed == 30);
    CHECK(first.hits == 0);

    const CacheIndex second =
        cache_features(m, spec, Modality::FUSED_PAIR, 8, FrameFormat::RAW, cache);
    CHECK(second.computed == 0);
    CHECK(second.hits == 30);
}

TEST_CASE("cache hits are bit-identical to recomputation") {
    test_support::TempDir dir("cache2");
    const DatasetManifest m = small_dataset(dir.path / "ds", 1);
    const auto cache = dir.path / "cache";
    FeatureExtractorSpec spec;
    const SampleKey key{m.trials[0].trial_id, -2};

    const FeatureSequence computed =
        fetch_cached(m, spec, Modality::TACTILE, 8, FrameFormat::DIFFERENCE, cache, key);
    const FeatureSequence cached =
        fetch_cached(m, spec, Modality::TACTILE, 8, FrameFormat::DIFFERENCE, cache, key);
    REQUIRE(computed.length() == cached.length());
    for (size_t t = 0; t < computed.length(); ++t)
        CHECK(std::memcmp(computed.steps[t].data(), cached.steps[t].data(),
                          computed.steps[t].size() * sizeof(float)) == 0);
}

TEST_CASE("cache invalidation: touching a frame recomputes only that trial") {
    test_support::TempDir dir("cache3");
    const DatasetManifest m = small_dataset(dir.path / "ds");
    const auto cache = dir.path / "cache";
    FeatureExtractorSpec spec;
    cache_features(m, spec, Modality::TACTILE, 6, FrameFormat::RAW, cache);

    // modify one source frame of one trial
    const auto& victim = m.trials[2];
    const auto frame_path = dir.path / "ds" / victim.path / "gelsight" / frame_filename(4);
    Image img = png::read(frame_path);
    img.at(0, 0, 0) = static_cast<uint8_t>(img.at(0, 0, 0) ^ 0x40);
    png::write(frame_path, img);

    const CacheIndex again =
        cache_features(m, spec, Modality::TACTILE, 6, FrameFormat::RAW, cache);
    CHECK(again.computed >= 1);
    CHECK(again.computed <= 5);
    for (const auto& e : again.entries)
        if (!e.was_hit) CHECK(e.key.trial_id == victim.trial_id);
}

TEST_CASE("fvec file layout: magic, version, length, dim, then f32 data") {
    test_support::TempDir dir("cache4");
    const DatasetManifest m = small_dataset(dir.path / "ds", 1);
    const auto cache = dir.path / "cache";
    FeatureExtractorSpec spec;
    spec.tiny_grid = 4;
    cache_features(m, spec, Modality::VISION, 7, FrameFormat::RAW, cache);

    const auto path = cache / spec.cache_name() / "raw" / "vision" / "L7" /
                      (m.trials[0].trial_id + "_-2.fvec");
    REQUIRE(std::filesystem::exists(path));
    REQUIRE(std::filesystem::exists(path.string() + ".sha256"));
    const auto bytes = png::read_file_bytes(path);
    REQUIRE(bytes.size() == 16 + 7 * 96 * sizeof(float));
    CHECK(std::memcmp(bytes.data(), "FVEC", 4) == 0);
    uint16_t version = 0, L = 0;
    uint32_t dim = 0;
    std::memcpy(&version, bytes.data() + 4, 2);
    std::memcpy(&L, bytes.data() + 6, 2);
    std::memcpy(&dim, bytes.data() + 8, 4);
    CHECK(version == 1);
    CHECK(L == 7);
    CHECK(dim == 96);
}

TEST_CASE("concurrent writers of one cache key are idempotent") {
    test_support::TempDir dir("cache5");
    const DatasetManifest m = small_dataset(dir.path / "ds", 1);
    const auto cache = dir.path / "cache";
    FeatureExtractorSpec spec;
    const SampleKey key{m.trials[0].trial_id, 1};

    std::vector<std::thread> pool;
    std::vector<FeatureSequence> results(4);
    for (int i = 0; i < 4; ++i)
        pool.emplace_back([&, i] {
            results[i] =
                fetch_cached(m, spec, Modality::FUSED_PAIR, 8, FrameFormat::RAW, cache, key);
        });
    for (auto& t : pool) t.join();
    for (int i = 1; i < 4; ++i) {
        REQUIRE(results[i].length() == results[0].length());
        for (size_t t = 0; t < results[0].length(); ++t)
            CHECK(results[i].steps[t] == results[0].steps[t]);
    }
    // the published file is valid and serves a clean hit afterwards
    const FeatureSequence after =
        fetch_cached(m, spec, Modality::FUSED_PAIR, 8, FrameFormat::RAW, cache, key);
    CHECK(after.steps == results[0].steps);
}

TEST_CASE("build_sequences matches direct extraction and is worker-invariant") {
    test_support::TempDir dir("pipe");
    const DatasetManifest m = small_dataset(dir.path / "ds");
    PipelineConfig cfg;
    cfg.seq_len = 8;
    std::vector<SampleKey> keys;
    for (const auto& t : m.trials)
        for (int s : kWindowStartOffsets) keys.push_back({t.trial_id, s});

    const auto serial = build_sequences(m, keys, cfg, {}, 1);
    const auto parallel = build_sequences(m, keys, cfg, {}, 4);
    const auto cached = build_sequences(m, keys, cfg, dir.path / "cache", 2);
    REQUIRE(serial.size() == keys.size());
    for (size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].trial_id == keys[i].trial_id);
        CHECK(serial[i].offset == keys[i].offset);
        CHECK(serial[i].features == parallel[i].features);
        CHECK(serial[i].features == cached[i].features);
        CHECK(serial[i].label == parallel[i].label);
    }

    // spot check one window against a from-scratch extraction
    const GraspTrial trial = load_trial(m, keys[7].trial_id);
    for (const auto& w : extract_windows(trial, 8)) {
        if (w.window_start_offset != keys[7].offset) continue;
        const FeatureSequence fs = extract_sequence(w, cfg.extractor, cfg.modality);
        CHECK(serial[7].features == fs.flat());
    }
}

TEST_SUITE_END();
