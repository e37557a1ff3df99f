#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slipfuse/dataset.hpp"
#include "slipfuse/errors.hpp"
#include "slipfuse/image.hpp"
#include "slipfuse/png_io.hpp"
#include "slipfuse/rng.hpp"

namespace slipfuse {

// Labeled generative scenarios. The two *_ONLY kinds defeat one modality by
// construction: the defeated stream is rendered identically to its stable
// counterpart, so no cue (motion or appearance) survives in that stream.
enum class Scenario {
    STABLE,
    TRANSLATIONAL_SLIP,
    ROTATIONAL_SLIP,
    GEL_STRETCH_STABLE,
    SMOOTH_SLIP_VISION_ONLY,
    OCCLUDED_SLIP_TACTILE_ONLY,
};

inline Label scenario_label(Scenario s) {
    switch (s) {
        case Scenario::STABLE:
        case Scenario::GEL_STRETCH_STABLE:
            return Label::STABLE;
        default:
            return Label::SLIP;
    }
}

inline const std::vector<Scenario>& all_scenarios() {
    static const std::vector<Scenario> v = {
        Scenario::STABLE,          Scenario::TRANSLATIONAL_SLIP,
        Scenario::ROTATIONAL_SLIP, Scenario::GEL_STRETCH_STABLE,
        Scenario::SMOOTH_SLIP_VISION_ONLY, Scenario::OCCLUDED_SLIP_TACTILE_ONLY};
    return v;
}

inline std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::STABLE: return "stable";
        case Scenario::TRANSLATIONAL_SLIP: return "translational_slip";
        case Scenario::ROTATIONAL_SLIP: return "rotational_slip";
        case Scenario::GEL_STRETCH_STABLE: return "gel_stretch_stable";
        case Scenario::SMOOTH_SLIP_VISION_ONLY: return "smooth_slip_vision_only";
        case Scenario::OCCLUDED_SLIP_TACTILE_ONLY: return "occluded_slip_tactile_only";
    }
    return "?";
}

inline Scenario scenario_from_string(const std::string& s) {
    for (Scenario sc : all_scenarios())
        if (to_string(sc) == s) return sc;
    throw InvalidParams("unknown scenario: " + s);
}

enum class TextureType { DOTS, STRIPES, NONE };

struct Vec2 {
    double x = 0, y = 0;
    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    double norm() const { return std::hypot(x, y); }
};

struct SynthParams {
    int image_height = 128;
    int image_width = 128;
    int marker_rows = 7;
    int marker_cols = 7;
    double marker_radius_px = 3.0;
    double slip_speed_px_per_frame = 3.0;
    double stretch_amplitude_px = 4.0;
    // nullopt = scenario default: slip-cue scenarios render DOTS; STABLE and
    // SMOOTH_SLIP_VISION_ONLY render the same featureless contact patch, so a
    // single-modality model cannot tell them apart by static appearance.
    std::optional<TextureType> texture_type;
    double noise_std = 2.0;
    int n_frames = 18;
    int lift_frame_index = 4;
    uint64_t rng_seed = 0;
    // Test hook: marker at this (row, col) is drawn beneath the contact patch
    // and ends up hidden when the patch covers it.
    std::optional<std::pair<int, int>> occluded_marker_cell;
};

// Frames over which the gel-stretch displacement ramps to its plateau.
inline constexpr int kStretchRampFrames = 4;

inline void validate_params(Scenario scenario, const SynthParams& p) {
    if (p.image_width < 48 || p.image_height < 48)
        throw InvalidParams("image size too small (min 48x48)");
    if (p.marker_rows < 2 || p.marker_cols < 2)
        throw InvalidParams("marker grid must be at least 2x2");
    if (p.marker_radius_px <= 0) throw InvalidParams("marker_radius_px must be > 0");
    if (p.noise_std < 0) throw InvalidParams("noise_std must be >= 0");
    if (p.n_frames < 14) throw InvalidParams("n_frames must be >= 14");
    if (p.lift_frame_index < 2) throw InvalidParams("lift_frame_index must be >= 2");
    if (p.n_frames < p.lift_frame_index + 10)
        throw InvalidParams("n_frames must be >= lift_frame_index + 10");
    const bool is_slip = scenario_label(scenario) == Label::SLIP;
    if (is_slip && p.slip_speed_px_per_frame <= 0)
        throw InvalidParams("slip_speed must be > 0 for slip scenarios");
    if (scenario == Scenario::GEL_STRETCH_STABLE && p.stretch_amplitude_px <= 0)
        throw InvalidParams("stretch_amplitude must be > 0 for gel stretch");
}

inline TextureType resolve_texture(Scenario scenario, const SynthParams& p) {
    if (scenario == Scenario::SMOOTH_SLIP_VISION_ONLY) return TextureType::NONE;  // forced
    if (p.texture_type) return *p.texture_type;
    switch (scenario) {
        case Scenario::STABLE: return TextureType::NONE;
        default: return TextureType::DOTS;
    }
}

// ---------------------------------------------------------------------------
// Analytic kinematics (ground truth for oracles; no rendering involved)
// ---------------------------------------------------------------------------

inline double stretch_profile(int frame, int lift_index, double amplitude) {
    if (frame <= lift_index) return 0.0;
    const double u = std::min(1.0, static_cast<double>(frame - lift_index) / kStretchRampFrames);
    return amplitude * (1.0 - (1.0 - u) * (1.0 - u));
}

// Displacement of the object/texture content in the gel stream relative to
// the trial's first frame.
inline Vec2 ground_truth_texture_offset(Scenario s, const SynthParams& p, int frame) {
    const double slip = p.slip_speed_px_per_frame * std::max(0, frame - p.lift_frame_index);
    switch (s) {
        case Scenario::TRANSLATIONAL_SLIP:
        case Scenario::OCCLUDED_SLIP_TACTILE_ONLY:
            return {0.0, slip};
        case Scenario::GEL_STRETCH_STABLE:
            return {0.0, stretch_profile(frame, p.lift_frame_index, p.stretch_amplitude_px)};
        default:
            return {0.0, 0.0};  // STABLE, SMOOTH, and ROTATIONAL (pure rotation)
    }
}

inline Vec2 ground_truth_marker_offset(Scenario s, const SynthParams& p, int frame) {
    if (s == Scenario::GEL_STRETCH_STABLE)
        return {0.0, stretch_profile(frame, p.lift_frame_index, p.stretch_amplitude_px)};
    return {0.0, 0.0};
}

inline double ground_truth_relative_displacement(Scenario s, const SynthParams& p, int frame) {
    return (ground_truth_texture_offset(s, p, frame) - ground_truth_marker_offset(s, p, frame))
        .norm();
}

inline double rotation_rate(Scenario s, const SynthParams& p, double patch_radius) {
    if (s != Scenario::ROTATIONAL_SLIP) return 0.0;
    return p.slip_speed_px_per_frame / std::max(patch_radius, 1.0);
}

// Object displacement in the external view relative to the trial's first
// frame. Only scenarios with a visible slip cue move; GEL_STRETCH and
// OCCLUDED render the same static view as STABLE.
inline Vec2 ground_truth_external_offset(Scenario s, const SynthParams& p, int frame) {
    const double slip = p.slip_speed_px_per_frame * std::max(0, frame - p.lift_frame_index);
    switch (s) {
        case Scenario::TRANSLATIONAL_SLIP:
        case Scenario::SMOOTH_SLIP_VISION_ONLY:
            return {0.0, slip};
        default:
            return {0.0, 0.0};
    }
}

// ---------------------------------------------------------------------------
// Resolved per-trial geometry (exposed so tests can oracle against it)
// ---------------------------------------------------------------------------

struct SynthGeometry {
    Vec2 patch_center;
    double patch_radius = 0;
    std::vector<Vec2> marker_centers;  // row-major grid order, frame-0 positions
    std::optional<size_t> occluded_marker;  // index into marker_centers
    Vec2 object_center;                // external view
    double object_w = 0, object_h = 0, object_angle = 0;
    TextureType texture = TextureType::NONE;
};

namespace synth_detail {

struct Color {
    double r = 0, g = 0, b = 0;
};

struct Canvas {
    int w, h;
    std::vector<double> px;  // rgb interleaved
    Canvas(int w_, int h_, Color fill) : w(w_), h(h_), px(static_cast<size_t>(w_) * h_ * 3) {
        for (int i = 0; i < w * h; ++i) {
            px[i * 3 + 0] = fill.r;
            px[i * 3 + 1] = fill.g;
            px[i * 3 + 2] = fill.b;
        }
    }
    void blend(int x, int y, const Color& c, double cov) {
        if (cov <= 0 || x < 0 || y < 0 || x >= w || y >= h) return;
        double* p = &px[(static_cast<size_t>(y) * w + x) * 3];
        p[0] += (c.r - p[0]) * cov;
        p[1] += (c.g - p[1]) * cov;
        p[2] += (c.b - p[2]) * cov;
    }
};

inline void draw_disk(Canvas& cv, Vec2 c, double radius, Color col, double edge = 0.7) {
    const int x0 = std::max(0, static_cast<int>(std::floor(c.x - radius - edge - 1)));
    const int x1 = std::min(cv.w - 1, static_cast<int>(std::ceil(c.x + radius + edge + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.y - radius - edge - 1)));
    const int y1 = std::min(cv.h - 1, static_cast<int>(std::ceil(c.y + radius + edge + 1)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d = std::hypot(x + 0.5 - c.x, y + 0.5 - c.y);
            const double cov = std::clamp((radius - d) / edge + 0.5, 0.0, 1.0);
            cv.blend(x, y, col, cov);
        }
}

inline void draw_rect(Canvas& cv, Vec2 c, double w, double h, double angle, Color col) {
    const double reach = 0.5 * std::hypot(w, h) + 2;
    const int x0 = std::max(0, static_cast<int>(c.x - reach));
    const int x1 = std::min(cv.w - 1, static_cast<int>(c.x + reach));
    const int y0 = std::max(0, static_cast<int>(c.y - reach));
    const int y1 = std::min(cv.h - 1, static_cast<int>(c.y + reach));
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - c.x, dy = y + 0.5 - c.y;
            const double u = dx * ca + dy * sa;
            const double v = -dx * sa + dy * ca;
            const double dist = std::max(std::abs(u) - w / 2, std::abs(v) - h / 2);
            cv.blend(x, y, col, std::clamp(0.5 - dist, 0.0, 1.0));
        }
}

// Appearance parameters drawn once per trial. The draw order is fixed and
// scenario-independent, so the static look of any shared element has the same
// distribution in every scenario.
struct Appearance {
    Color gel_bg, patch_color, dot_color, stripe_color, marker_color;
    Vec2 patch_center;
    double patch_radius;
    std::vector<Vec2> dot_rel;  // relative to patch center
    double dot_radius;
    double stripe_period, stripe_phase, stripe_angle;
    Color ext_bg, grip_color, object_color;
    Vec2 object_center;
    double object_w, object_h, object_angle;
    Vec2 marker_jitter;
};

inline Appearance draw_appearance(Rng& rng, const SynthParams& p) {
    Appearance a;
    const double W = p.image_width, H = p.image_height;
    auto jit = [&](double base, double amp) { return base + rng.uniform(-amp, amp); };

    const double gel_base = jit(176, 6);
    a.gel_bg = {gel_base - 4, gel_base, gel_base + 2};
    a.patch_center = {jit(0.50 * W, 0.05 * W), jit(0.44 * H, 0.05 * H)};
    a.patch_radius = jit(0.17 * W, 0.02 * W);
    const double patch_dark = jit(30, 5);
    a.patch_color = {a.gel_bg.r - patch_dark, a.gel_bg.g - patch_dark, a.gel_bg.b - patch_dark};

    const double dot_dark = jit(62, 8);
    a.dot_color = {a.gel_bg.r - dot_dark, a.gel_bg.g - dot_dark, a.gel_bg.b - dot_dark};
    const int n_dots = 10 + static_cast<int>(rng.next_below(5));
    a.dot_rel.reserve(14);
    for (int k = 0; k < 14; ++k) {  // always 14 draws to keep the stream fixed
        const double ang = rng.uniform(0, 6.283185307179586);
        const double rad = a.patch_radius * 0.78 * std::sqrt(rng.next_double());
        if (k < n_dots) a.dot_rel.push_back({rad * std::cos(ang), rad * std::sin(ang)});
    }
    a.dot_radius = jit(0.020 * W, 0.004 * W);

    const double stripe_dark = jit(36, 6);
    a.stripe_color = {a.gel_bg.r - stripe_dark, a.gel_bg.g - stripe_dark,
                      a.gel_bg.b - stripe_dark};
    a.stripe_period = jit(0.065 * W, 0.012 * W);
    a.stripe_phase = rng.uniform(0, 6.283185307179586);
    a.stripe_angle = rng.uniform(0, 3.14159265358979);

    a.marker_color = {jit(25, 4), jit(23, 4), jit(21, 4)};
    a.marker_jitter = {rng.uniform(-1, 1), rng.uniform(-1, 1)};

    const double ext_base = jit(82, 6);
    a.ext_bg = {ext_base - 8, ext_base, ext_base + 14};
    a.grip_color = {jit(42, 4), jit(43, 4), jit(45, 4)};
    static const Color palette[4] = {
        {182, 142, 92}, {118, 158, 198}, {200, 178, 118}, {152, 152, 152}};
    const Color base = palette[rng.next_below(4)];
    a.object_color = {jit(base.r, 8), jit(base.g, 8), jit(base.b, 8)};
    a.object_center = {jit(0.50 * W, 0.04 * W), jit(0.47 * H, 0.04 * H)};
    a.object_w = jit(0.34 * W, 0.05 * W);
    a.object_h = jit(0.44 * H, 0.05 * H);
    a.object_angle = rng.uniform(-0.1, 0.1);
    return a;
}

inline Image quantize_with_noise(const Canvas& cv, Rng& noise_rng, double noise_std) {
    Image img(cv.w, cv.h);
    for (int i = 0; i < cv.w * cv.h; ++i) {
        // one luminance-noise draw per pixel, shared by the three channels
        const double n = noise_std > 0 ? noise_rng.next_normal() * noise_std : 0.0;
        for (int c = 0; c < 3; ++c)
            img.data[i * 3 + c] =
                clamp_u8(static_cast<int>(std::lround(cv.px[i * 3 + c] + n)));
    }
    return img;
}

}  // namespace synth_detail

inline GraspTrial generate_trial(Scenario scenario, const SynthParams& p,
                                 SynthGeometry* out_geometry = nullptr) {
    using namespace synth_detail;
    validate_params(scenario, p);
    const TextureType texture = resolve_texture(scenario, p);

    Rng appearance_rng(mix_seed(p.rng_seed, 0xA77EA7ULL));
    Rng noise_rng(mix_seed(p.rng_seed, 0x0153eULL));
    const Appearance a = draw_appearance(appearance_rng, p);

    const int W = p.image_width, H = p.image_height;
    const double sx = static_cast<double>(W) / (p.marker_cols + 1);
    const double sy = static_cast<double>(H) / (p.marker_rows + 1);
    std::vector<Vec2> marker_centers;
    for (int r = 0; r < p.marker_rows; ++r)
        for (int c = 0; c < p.marker_cols; ++c)
            marker_centers.push_back(
                {(c + 1) * sx + a.marker_jitter.x, (r + 1) * sy + a.marker_jitter.y});

    std::optional<size_t> occluded_idx;
    if (p.occluded_marker_cell) {
        const auto [r, c] = *p.occluded_marker_cell;
        if (r < 0 || r >= p.marker_rows || c < 0 || c >= p.marker_cols)
            throw InvalidParams("occluded_marker_cell outside grid");
        occluded_idx = static_cast<size_t>(r) * p.marker_cols + c;
    }

    const double omega = rotation_rate(scenario, p, a.patch_radius);

    GraspTrial trial;
    trial.label = scenario_label(scenario);
    trial.lift_frame_index = p.lift_frame_index;
    trial.frame_rate_hz = 20.0;

    for (int t = 0; t < p.n_frames; ++t) {
        const Vec2 tex_off = ground_truth_texture_offset(scenario, p, t);
        const Vec2 mark_off = ground_truth_marker_offset(scenario, p, t);
        const double theta = omega * std::max(0, t - p.lift_frame_index);

        // --- gel frame ---
        Canvas gel(W, H, a.gel_bg);
        if (occluded_idx) {
            // Drawn beneath the patch so the patch can hide it.
            draw_disk(gel, marker_centers[*occluded_idx] + mark_off, p.marker_radius_px,
                      a.marker_color);
        }
        const Vec2 pc = a.patch_center + tex_off;
        {
            // soft-edged contact impression; present in every scenario so the
            // texture correlator always has an anchor
            const double edge = 3.0;
            const int x0 = std::max(0, static_cast<int>(pc.x - a.patch_radius - edge - 1));
            const int x1 = std::min(W - 1, static_cast<int>(pc.x + a.patch_radius + edge + 1));
            const int y0 = std::max(0, static_cast<int>(pc.y - a.patch_radius - edge - 1));
            const int y1 = std::min(H - 1, static_cast<int>(pc.y + a.patch_radius + edge + 1));
            const double ca = std::cos(-theta), sa = std::sin(-theta);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double dx = x + 0.5 - pc.x, dy = y + 0.5 - pc.y;
                    const double d = std::hypot(dx, dy);
                    const double cov = std::clamp((a.patch_radius - d) / edge + 0.5, 0.0, 1.0);
                    if (cov <= 0) continue;
                    Color col = a.patch_color;
                    if (texture == TextureType::STRIPES) {
                        const double u = dx * ca - dy * sa;  // rotate into texture frame
                        const double v = dx * sa + dy * ca;
                        const double axis = u * std::cos(a.stripe_angle) + v * std::sin(a.stripe_angle);
                        const double m =
                            0.5 + 0.5 * std::cos(6.283185307179586 * axis / a.stripe_period +
                                                 a.stripe_phase);
                        col = {col.r + (a.stripe_color.r - col.r) * m,
                               col.g + (a.stripe_color.g - col.g) * m,
                               col.b + (a.stripe_color.b - col.b) * m};
                    }
                    gel.blend(x, y, col, cov);
                }
        }
        if (texture == TextureType::DOTS) {
            const double ca = std::cos(theta), sa = std::sin(theta);
            for (const Vec2& rel : a.dot_rel) {
                const Vec2 rot = {rel.x * ca - rel.y * sa, rel.x * sa + rel.y * ca};
                draw_disk(gel, pc + rot, a.dot_radius, a.dot_color);
            }
        }
        for (size_t i = 0; i < marker_centers.size(); ++i) {
            if (occluded_idx && i == *occluded_idx) continue;
            draw_disk(gel, marker_centers[i] + mark_off, p.marker_radius_px, a.marker_color);
        }
        trial.gelsight_frames.push_back(quantize_with_noise(gel, noise_rng, p.noise_std));

        // --- external frame ---
        const Vec2 ext_off = ground_truth_external_offset(scenario, p, t);
        const double ext_theta =
            scenario == Scenario::ROTATIONAL_SLIP ? omega * std::max(0, t - p.lift_frame_index)
                                                  : 0.0;
        Canvas ext(W, H, a.ext_bg);
        draw_rect(ext, {0.09 * W, 0.5 * H}, 0.08 * W, static_cast<double>(H), 0, a.grip_color);
        draw_rect(ext, {0.91 * W, 0.5 * H}, 0.08 * W, static_cast<double>(H), 0, a.grip_color);
        draw_rect(ext, a.object_center + ext_off, a.object_w, a.object_h,
                  a.object_angle + ext_theta, a.object_color);
        trial.external_frames.push_back(quantize_with_noise(ext, noise_rng, p.noise_std));
    }

    if (out_geometry) {
        SynthGeometry g;
        g.patch_center = a.patch_center;
        g.patch_radius = a.patch_radius;
        g.marker_centers = marker_centers;
        g.occluded_marker = occluded_idx;
        g.object_center = a.object_center;
        g.object_w = a.object_w;
        g.object_h = a.object_h;
        g.object_angle = a.object_angle;
        g.texture = texture;
        *out_geometry = g;
    }
    return trial;
}

// Writes trials in the on-disk dataset format. Per-trial seeds are
// rng_seed + trial ordinal, so any prefix of a dataset is reproducible.
inline DatasetManifest generate_dataset(const std::vector<std::pair<Scenario, int>>& spec,
                                        const SynthParams& params,
                                        const std::filesystem::path& out_root) {
    for (const auto& [scenario, count] : spec) {
        if (count < 1) throw InvalidParams("scenario count must be >= 1");
        validate_params(scenario, params);
    }
    std::error_code ec;
    std::filesystem::create_directories(out_root / "trials", ec);
    if (ec) throw IoError("cannot create output root: " + out_root.string());

    DatasetManifest manifest;
    manifest.root = out_root;
    int ordinal = 0;
    for (const auto& [scenario, count] : spec) {
        for (int i = 0; i < count; ++i, ++ordinal) {
            SynthParams p = params;
            p.rng_seed = params.rng_seed + static_cast<uint64_t>(ordinal);
            // the base seed is part of the id so trials from differently
            // seeded datasets never collide in train/test leakage checks
            char idbuf[96];
            std::snprintf(idbuf, sizeof idbuf, "%s_%04d_s%llu", to_string(scenario).c_str(), i,
                          static_cast<unsigned long long>(params.rng_seed));
            GraspTrial trial = generate_trial(scenario, p);
            trial.trial_id = idbuf;
            trial.object_id = "synth_" + std::string(idbuf);

            const auto trial_dir = out_root / "trials" / trial.trial_id;
            std::filesystem::create_directories(trial_dir / "external");
            std::filesystem::create_directories(trial_dir / "gelsight");
            for (size_t f = 0; f < trial.external_frames.size(); ++f) {
                png::write(trial_dir / "external" / frame_filename(static_cast<int>(f)),
                           trial.external_frames[f]);
                png::write(trial_dir / "gelsight" / frame_filename(static_cast<int>(f)),
                           trial.gelsight_frames[f]);
            }
            ManifestEntry e;
            e.trial_id = trial.trial_id;
            e.object_id = trial.object_id;
            e.label = trial.label;
            e.lift_frame_index = p.lift_frame_index;
            e.frame_rate_hz = trial.frame_rate_hz;
            e.path = "trials/" + trial.trial_id;
            manifest.trials.push_back(std::move(e));
        }
    }
    save_manifest(manifest);
    return manifest;
}

}  // namespace slipfuse
