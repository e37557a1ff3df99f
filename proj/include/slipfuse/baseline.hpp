#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <vector>

#include "slipfuse/dataset.hpp"
#include "slipfuse/errors.hpp"
#include "slipfuse/image.hpp"
#include "slipfuse/synthgrasp.hpp"

namespace slipfuse {

struct BaselineConfig {
    int marker_intensity_threshold = 70;  // luminance below this is marker-dark
    double min_marker_area = 4;           // px^2
    double max_marker_area = 200;
    double match_radius = 6;      // frame-to-frame marker association radius
    double slip_threshold = 2;    // px of texture-vs-marker relative displacement
    int search_radius = 24;       // texture cross-correlation shift range
    // Secondary cue (central marker displacement vs peripheral); <= 0 disables.
    double central_vs_peripheral_ratio = 0;
};

// Connected dark regions within the area bounds, reported as intensity
// weighted sub-pixel centroids sorted in row-major order.
inline std::vector<Vec2> detect_markers(const Image& img, const BaselineConfig& cfg) {
    const int w = img.width, h = img.height;
    std::vector<uint8_t> mask(static_cast<size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            mask[static_cast<size_t>(y) * w + x] =
                luminance(img, x, y) < cfg.marker_intensity_threshold ? 1 : 0;

    std::vector<Vec2> centroids;
    std::vector<int> stack;
    for (int sy = 0; sy < h; ++sy) {
        for (int sx = 0; sx < w; ++sx) {
            if (!mask[static_cast<size_t>(sy) * w + sx]) continue;
            // flood fill one component (8-connected)
            double wsum = 0, wx = 0, wy = 0;
            int area = 0;
            stack.push_back(sy * w + sx);
            mask[static_cast<size_t>(sy) * w + sx] = 0;
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                const int px = p % w, py = p / w;
                const double darkness =
                    std::max(0.0, cfg.marker_intensity_threshold - static_cast<double>(luminance(img, px, py)));
                const double weight = darkness + 1e-3;
                wsum += weight;
                wx += weight * (px + 0.5);
                wy += weight * (py + 0.5);
                ++area;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = px + dx, ny = py + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        if (!mask[static_cast<size_t>(ny) * w + nx]) continue;
                        mask[static_cast<size_t>(ny) * w + nx] = 0;
                        stack.push_back(ny * w + nx);
                    }
            }
            if (area >= cfg.min_marker_area && area <= cfg.max_marker_area)
                centroids.push_back({wx / wsum, wy / wsum});
        }
    }
    if (centroids.empty()) throw NoMarkersFound();
    std::sort(centroids.begin(), centroids.end(), [](const Vec2& a, const Vec2& b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    return centroids;
}

// Frame-to-frame marker correspondences and cumulative displacements.
// Unmatched markers are flagged per frame, never silently dropped.
struct MarkerTrack {
    std::vector<std::vector<Vec2>> centroids;        // per frame, detection order
    std::vector<std::vector<int>> correspondence;    // per frame: index into frame 0, -1 if lost
    std::vector<Vec2> cumulative_displacement;       // per frame-0 marker, last matched position
    std::vector<int> unmatched_count;                // per frame
};

inline MarkerTrack track_markers(const std::vector<Image>& frames, const BaselineConfig& cfg) {
    if (frames.size() < 2) throw InvalidParams("marker tracking needs at least 2 frames");
    MarkerTrack track;
    const std::vector<Vec2> base = detect_markers(frames[0], cfg);
    track.centroids.push_back(base);
    std::vector<int> identity(base.size());
    for (size_t i = 0; i < base.size(); ++i) identity[i] = static_cast<int>(i);
    track.correspondence.push_back(identity);
    track.cumulative_displacement.assign(base.size(), {0, 0});
    track.unmatched_count.push_back(0);

    std::vector<Vec2> previous = base;            // last known position per frame-0 marker
    std::vector<int> prev_alive(base.size(), 1);  // matched in the previous frame

    for (size_t t = 1; t < frames.size(); ++t) {
        std::vector<Vec2> cur;
        try {
            cur = detect_markers(frames[t], cfg);
        } catch (const NoMarkersFound&) {
            throw TrackingLost(static_cast<int>(t), 0.0);
        }
        // greedy nearest neighbour within match_radius, one-to-one
        std::vector<int> cur_to_base(cur.size(), -1);
        std::vector<char> base_taken(base.size(), 0);
        struct Cand {
            double d;
            int ci, bi;
        };
        std::vector<Cand> cands;
        for (size_t ci = 0; ci < cur.size(); ++ci)
            for (size_t bi = 0; bi < base.size(); ++bi) {
                if (!prev_alive[bi]) continue;
                const double d = (cur[ci] - previous[bi]).norm();
                if (d <= cfg.match_radius) cands.push_back({d, static_cast<int>(ci), static_cast<int>(bi)});
            }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.d < b.d; });
        std::vector<char> cur_taken(cur.size(), 0);
        size_t matched = 0;
        for (const Cand& c : cands) {
            if (cur_taken[c.ci] || base_taken[c.bi]) continue;
            cur_taken[c.ci] = 1;
            base_taken[c.bi] = 1;
            cur_to_base[c.ci] = c.bi;
            ++matched;
        }
        const double fraction = base.empty() ? 0.0 : static_cast<double>(matched) / base.size();
        if (fraction < 0.5) throw TrackingLost(static_cast<int>(t), fraction);

        std::vector<int> alive(base.size(), 0);
        for (size_t ci = 0; ci < cur.size(); ++ci) {
            const int bi = cur_to_base[ci];
            if (bi < 0) continue;
            previous[bi] = cur[ci];
            track.cumulative_displacement[bi] = cur[ci] - base[bi];
            alive[bi] = 1;
        }
        prev_alive = alive;
        track.unmatched_count.push_back(static_cast<int>(base.size() - matched) +
                                        static_cast<int>(cur.size() - matched));
        track.centroids.push_back(std::move(cur));
        track.correspondence.push_back(std::move(cur_to_base));
    }
    return track;
}

namespace detail {

// Mean marker displacement vector at each frame, over markers matched there.
inline std::vector<Vec2> mean_marker_displacement(const MarkerTrack& track,
                                                  const std::vector<Image>& frames,
                                                  const BaselineConfig& cfg) {
    const std::vector<Vec2>& base = track.centroids[0];
    std::vector<Vec2> prev = base;
    std::vector<Vec2> out(frames.size(), {0, 0});
    for (size_t t = 1; t < frames.size(); ++t) {
        double sx = 0, sy = 0;
        int n = 0;
        const auto& corr = track.correspondence[t];
        const auto& cents = track.centroids[t];
        for (size_t ci = 0; ci < corr.size(); ++ci) {
            if (corr[ci] < 0) continue;
            sx += cents[ci].x - base[corr[ci]].x;
            sy += cents[ci].y - base[corr[ci]].y;
            ++n;
        }
        out[t] = n ? Vec2{sx / n, sy / n} : out[t - 1];
    }
    (void)cfg;
    return out;
}

// Integer-pixel displacement of the non-marker content versus frame 0 via
// SSD template matching on luminance. Marker pixels (dilated) are excluded on
// BOTH sides: from the frame-0 template and, per shift, wherever a template
// pixel would land on a marker in frame t. Otherwise the static markers act
// as an alignment wall that pins the estimate near zero shift.
inline Vec2 texture_displacement(const Image& frame0, const Image& frame_t,
                                 const std::vector<uint8_t>& template_mask,
                                 const std::vector<uint8_t>& frame_t_mask, int search_radius) {
    const int w = frame0.width, h = frame0.height;
    double best = 1e300;
    int best_dx = 0, best_dy = 0;
    std::vector<float> lum0(static_cast<size_t>(w) * h), lumt(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            lum0[static_cast<size_t>(y) * w + x] = luminance(frame0, x, y);
            lumt[static_cast<size_t>(y) * w + x] = luminance(frame_t, x, y);
        }
    for (int dy = -search_radius; dy <= search_radius; ++dy) {
        for (int dx = -search_radius; dx <= search_radius; ++dx) {
            double ssd = 0;
            int n = 0;
            const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
            const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
            for (int y = y0; y < y1; ++y) {
                const size_t row0 = static_cast<size_t>(y) * w;
                const size_t rowt = static_cast<size_t>(y + dy) * w;
                for (int x = x0; x < x1; ++x) {
                    if (!template_mask[row0 + x]) continue;
                    if (!frame_t_mask[rowt + x + dx]) continue;
                    const double d = lum0[row0 + x] - lumt[rowt + x + dx];
                    ssd += d * d;
                    ++n;
                }
            }
            if (n == 0) continue;
            const double score = ssd / n;
            const double tie_break = 1e-9 * (dx * dx + dy * dy);  // prefer the smaller shift
            if (score + tie_break < best) {
                best = score + tie_break;
                best_dx = dx;
                best_dy = dy;
            }
        }
    }
    return {static_cast<double>(best_dx), static_cast<double>(best_dy)};
}

inline std::vector<uint8_t> non_marker_mask(const Image& frame0, const BaselineConfig& cfg) {
    const int w = frame0.width, h = frame0.height;
    std::vector<uint8_t> markerish(static_cast<size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            markerish[static_cast<size_t>(y) * w + x] =
                luminance(frame0, x, y) < cfg.marker_intensity_threshold ? 1 : 0;
    // dilate the marker mask so anti-aliased rims are excluded too
    const int r = 2;
    std::vector<uint8_t> out(static_cast<size_t>(w) * h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool near_marker = false;
            for (int dy = -r; dy <= r && !near_marker; ++dy)
                for (int dx = -r; dx <= r && !near_marker; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    near_marker = markerish[static_cast<size_t>(ny) * w + nx] != 0;
                }
            if (near_marker) out[static_cast<size_t>(y) * w + x] = 0;
        }
    return out;
}

// Template pixels for the texture correlator: non-marker pixels that carry
// actual image gradient. Restricting the SSD to textured pixels keeps the
// flat background (pure sensor noise) from out-voting the texture signal.
inline std::vector<uint8_t> texture_template_mask(const Image& frame0,
                                                  const BaselineConfig& cfg) {
    const int w = frame0.width, h = frame0.height;
    std::vector<uint8_t> mask = non_marker_mask(frame0, cfg);
    std::vector<float> lum(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) lum[static_cast<size_t>(y) * w + x] = luminance(frame0, x, y);
    std::vector<uint8_t> out(mask.size(), 0);
    size_t n = 0;
    const float gradient_floor = 6.0f;
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            if (!mask[i]) continue;
            const float gx = lum[i + 1] - lum[i - 1];
            const float gy = lum[i + w] - lum[i - w];
            if (std::abs(gx) + std::abs(gy) > gradient_floor) {
                out[i] = 1;
                ++n;
            }
        }
    // degenerate frame with no texture gradients at all: fall back
    return n >= 50 ? out : mask;
}

}  // namespace detail

// Per-frame |texture displacement - mean marker displacement|. Displacement
// of everything is measured against frame 0 of the given sequence, so the
// caller should pass a window whose first frame predates the motion of
// interest (the canonical window does).
inline std::vector<double> track_relative_displacement(const std::vector<Image>& frames,
                                                       const BaselineConfig& cfg) {
    if (frames.size() < 2) throw InvalidParams("need at least 2 frames");
    const MarkerTrack track = track_markers(frames, cfg);
    const std::vector<Vec2> marker_disp = detail::mean_marker_displacement(track, frames, cfg);
    const std::vector<uint8_t> mask = detail::texture_template_mask(frames[0], cfg);

    std::vector<double> out(frames.size(), 0.0);
    for (size_t t = 1; t < frames.size(); ++t) {
        const std::vector<uint8_t> mask_t = detail::non_marker_mask(frames[t], cfg);
        const Vec2 tex =
            detail::texture_displacement(frames[0], frames[t], mask, mask_t, cfg.search_radius);
        out[t] = (tex - marker_disp[t]).norm();
    }
    return out;
}

// SLIP iff the relative displacement exceeds the threshold in any frame.
// The optional central-vs-peripheral marker cue adds a second SLIP condition
// when enabled (ratio > 0).
inline Label detect_slip_threshold(const std::vector<Image>& frames, const BaselineConfig& cfg) {
    const std::vector<double> rel = track_relative_displacement(frames, cfg);
    double peak = 0;
    for (double v : rel) peak = std::max(peak, v);
    if (peak > cfg.slip_threshold) return Label::SLIP;

    if (cfg.central_vs_peripheral_ratio > 0) {
        const MarkerTrack track = track_markers(frames, cfg);
        const auto& base = track.centroids[0];
        double cx = 0, cy = 0;
        for (const auto& m : base) { cx += m.x; cy += m.y; }
        cx /= base.size();
        cy /= base.size();
        double spread = 0;
        for (const auto& m : base) spread = std::max(spread, std::hypot(m.x - cx, m.y - cy));
        double central = 0, peripheral = 0;
        int nc = 0, np = 0;
        for (size_t i = 0; i < base.size(); ++i) {
            const double r = std::hypot(base[i].x - cx, base[i].y - cy);
            const double d = track.cumulative_displacement[i].norm();
            if (r < 0.5 * spread) { central += d; ++nc; }
            else { peripheral += d; ++np; }
        }
        if (nc > 0 && np > 0 && peripheral > 1e-6 &&
            (central / nc) / (peripheral / np) > cfg.central_vs_peripheral_ratio)
            return Label::SLIP;
    }
    return Label::STABLE;
}

}  // namespace slipfuse
