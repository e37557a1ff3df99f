#pragma once

#include <filesystem>
#include <string>

#include "slipfuse/dataset.hpp"
#include "slipfuse/image.hpp"
#include "slipfuse/rng.hpp"
#include "slipfuse/synthgrasp.hpp"

namespace test_support {

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("slipfuse_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

inline slipfuse::Image random_image(slipfuse::Rng& rng, int w, int h) {
    slipfuse::Image img(w, h);
    for (auto& b : img.data) b = static_cast<uint8_t>(rng.next_below(256));
    return img;
}

// A structurally valid trial with tiny arbitrary frames; enough frames for
// every window length at every start offset.
inline slipfuse::GraspTrial tiny_trial(const std::string& id, int lift_index, int n_frames,
                                       slipfuse::Label label = slipfuse::Label::STABLE,
                                       int size = 8) {
    slipfuse::GraspTrial t;
    t.trial_id = id;
    t.object_id = "obj_" + id;
    t.label = label;
    t.lift_frame_index = lift_index;
    slipfuse::Rng rng(std::hash<std::string>{}(id));
    for (int i = 0; i < n_frames; ++i) {
        t.external_frames.push_back(random_image(rng, size, size));
        t.gelsight_frames.push_back(random_image(rng, size, size));
    }
    return t;
}

// Intensity-weighted centroid of pixels whose luminance falls in
// [lo, hi); the workhorse of the rendering oracles.
struct Centroid {
    double x = 0, y = 0;
    double weight = 0;
    bool valid() const { return weight > 0; }
};

inline Centroid band_centroid(const slipfuse::Image& img, double lo, double hi) {
    Centroid c;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double lum = slipfuse::luminance(img, x, y);
            if (lum < lo || lum >= hi) continue;
            const double w = hi - lum;
            c.x += w * (x + 0.5);
            c.y += w * (y + 0.5);
            c.weight += w;
        }
    if (c.weight > 0) {
        c.x /= c.weight;
        c.y /= c.weight;
    }
    return c;
}

// Mean count per consecutive frame pair of pixels whose luminance changes by
// more than `threshold`. With the default noise (sigma 2, shared across
// channels) a 20-unit jump is a ~7 sigma event, so any nonzero count means
// real motion.
inline double motion_pixel_count(const std::vector<slipfuse::Image>& frames, size_t first,
                                 size_t last, double threshold = 20.0) {
    double total = 0;
    size_t n = 0;
    for (size_t t = first + 1; t <= last && t < frames.size(); ++t) {
        int count = 0;
        for (int y = 0; y < frames[t].height; ++y)
            for (int x = 0; x < frames[t].width; ++x)
                if (std::abs(slipfuse::luminance(frames[t], x, y) -
                             slipfuse::luminance(frames[t - 1], x, y)) > threshold)
                    ++count;
        total += count;
        ++n;
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

// Mean absolute pixel difference between consecutive frames of a stream,
// averaged over the given frame range.
inline double mean_abs_interframe_diff(const std::vector<slipfuse::Image>& frames, size_t first,
                                       size_t last) {
    double total = 0;
    size_t n = 0;
    for (size_t t = first + 1; t <= last && t < frames.size(); ++t) {
        double acc = 0;
        for (size_t i = 0; i < frames[t].data.size(); ++i)
            acc += std::abs(static_cast<int>(frames[t].data[i]) -
                            static_cast<int>(frames[t - 1].data[i]));
        total += acc / static_cast<double>(frames[t].data.size());
        ++n;
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace test_support
