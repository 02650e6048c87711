#include "pda/frame_select.hpp"

#include <algorithm>
#include <cmath>

#include "pda/error.hpp"

namespace pda {

double laplacian_variance(const Image& image) {
    if (image.height < 3 || image.width < 3) throw InputError("laplacian_variance: image must be at least 3x3");
    const auto gray = image.grayscale();
    const std::size_t h = image.height, w = image.width;
    std::vector<double> lap;
    lap.reserve((h - 2) * (w - 2));
    for (std::size_t r = 1; r + 1 < h; ++r) {
        for (std::size_t c = 1; c + 1 < w; ++c) {
            lap.push_back(gray[(r - 1) * w + c] + gray[(r + 1) * w + c] + gray[r * w + c - 1] +
                          gray[r * w + c + 1] - 4.0 * gray[r * w + c]);
        }
    }
    double mean = 0.0;
    for (double v : lap) mean += v;
    mean /= static_cast<double>(lap.size());
    double var = 0.0;
    for (double v : lap) var += (v - mean) * (v - mean);
    return var / static_cast<double>(lap.size());
}

namespace {

// Sharpest frame in [lo, hi], lowest index on ties.
std::size_t argmax(const std::vector<FrameScore>& scores, std::size_t lo, std::size_t hi) {
    std::size_t best = lo;
    for (std::size_t i = lo + 1; i <= hi; ++i) {
        if (scores[i].sharpness > scores[best].sharpness) best = i;
    }
    return best;
}

}  // namespace

std::vector<std::size_t> select_sharp_frames(const std::vector<FrameScore>& scores, double fps) {
    if (scores.empty()) throw InputError("select_sharp_frames: no frames");
    if (!(fps > 0.0) || !std::isfinite(fps)) throw ParameterError("select_sharp_frames: fps must be positive");
    const auto gap = static_cast<std::size_t>(std::floor(2.0 * fps));
    if (gap < 2 * kSelectSpacing) throw ParameterError("select_sharp_frames: fps must be at least 6");
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i].index != i) throw InputError("select_sharp_frames: scores must be in frame order");
        if (!(scores[i].sharpness >= 0.0)) throw InputError("select_sharp_frames: sharpness must be >= 0");
    }
    const std::size_t n = scores.size();

    std::vector<std::size_t> regular;
    for (std::size_t start = 0; start < n; start += kSelectWindow) {
        const std::size_t end = std::min(n, start + kSelectWindow) - 1;
        std::size_t lo = start;
        if (!regular.empty()) lo = std::max(lo, regular.back() + kSelectSpacing);
        if (lo > end) continue;
        regular.push_back(argmax(scores, lo, end));
    }

    std::vector<std::size_t> picks;
    // Fill every stretch longer than the gap with forced picks. The first
    // pick may land anywhere in the first gap frames.
    bool have_last = false;
    std::size_t last = 0;
    // next is the upcoming pick, or n for the end of the sequence.
    auto force_until = [&](std::size_t next, bool is_end) {
        for (;;) {
            const std::size_t first_allowed = have_last ? last + kSelectSpacing : 0;
            const std::size_t deadline = have_last ? last + gap : gap - 1;
            if (next <= deadline) return;
            const std::size_t hi = is_end ? std::min(deadline, n - 1) : std::min(deadline, next - kSelectSpacing);
            const std::size_t f = argmax(scores, first_allowed, hi);
            picks.push_back(f);
            last = f;
            have_last = true;
        }
    };
    for (std::size_t p : regular) {
        force_until(p, false);
        picks.push_back(p);
        last = p;
        have_last = true;
    }
    force_until(n, true);
    return picks;
}

}  // namespace pda
