#include "pda/depth_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pda/error.hpp"
#include "pda/ops.hpp"

namespace pda {

DepthMap::DepthMap(std::size_t h, std::size_t w, double value, bool is_valid)
    : height(h), width(w), depth(h * w, value), valid(h * w, is_valid ? 1 : 0) {}

std::size_t DepthMap::valid_count() const {
    return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }));
}

Tensor DepthMap::to_tensor() const { return Tensor::from({1, height, width}, depth); }

Tensor DepthMap::mask_tensor() const {
    std::vector<double> m(valid.begin(), valid.end());
    return Tensor::from({1, height, width}, std::move(m));
}

DepthMap DepthMap::from_tensor(const Tensor& t) {
    std::size_t h = 0;
    std::size_t w = 0;
    if (t.rank() == 3 && t.dim(0) == 1) {
        h = t.dim(1);
        w = t.dim(2);
    } else if (t.rank() == 2) {
        h = t.dim(0);
        w = t.dim(1);
    } else {
        throw ShapeError("DepthMap::from_tensor: expected [1,H,W] or [H,W], got " + shape_str(t.shape()));
    }
    DepthMap map(h, w);
    std::copy(t.data().begin(), t.data().end(), map.depth.begin());
    return map;
}

void Image::set(std::size_t row, std::size_t col, double r, double g, double b) {
    auto quantize = [](double v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    auto* px = &rgb[(row * width + col) * 3];
    px[0] = quantize(r);
    px[1] = quantize(g);
    px[2] = quantize(b);
}

Tensor Image::to_tensor() const {
    std::vector<double> out(3 * size());
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) out[c * size() + i] = rgb[i * 3 + c] / 255.0;
    }
    return Tensor::from({3, height, width}, std::move(out));
}

std::vector<double> Image::grayscale() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) {
        out[i] = (0.299 * rgb[i * 3] + 0.587 * rgb[i * 3 + 1] + 0.114 * rgb[i * 3 + 2]) / 255.0;
    }
    return out;
}

DepthMap fill_nearest_valid(const DepthMap& map) {
    if (map.valid_count() == 0) throw InputError("fill_nearest_valid: no valid pixel");
    DepthMap out = map;
    const auto h = static_cast<long>(map.height);
    const auto w = static_cast<long>(map.width);
    for (long r = 0; r < h; ++r) {
        for (long c = 0; c < w; ++c) {
            if (map.is_valid(static_cast<std::size_t>(r), static_cast<std::size_t>(c))) continue;
            long best_d2 = std::numeric_limits<long>::max();
            std::size_t best = 0;
            // Ring search by Chebyshev radius; stop once no closer pixel can exist.
            for (long rad = 1; rad < std::max(h, w); ++rad) {
                if (rad * rad > best_d2) break;
                for (long dr = -rad; dr <= rad; ++dr) {
                    const long rr = r + dr;
                    if (rr < 0 || rr >= h) continue;
                    const bool edge_row = (dr == -rad || dr == rad);
                    const long step = edge_row ? 1 : 2 * rad;
                    for (long dc = -rad; dc <= rad; dc += step) {
                        const long cc = c + dc;
                        if (cc < 0 || cc >= w) continue;
                        const auto idx = static_cast<std::size_t>(rr * w + cc);
                        if (!map.valid[idx]) continue;
                        const long d2 = dr * dr + dc * dc;
                        if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                            best_d2 = d2;
                            best = idx;
                        }
                    }
                }
            }
            const auto here = static_cast<std::size_t>(r * w + c);
            out.depth[here] = map.depth[best];
            out.valid[here] = 1;
        }
    }
    return out;
}

DepthMap resize_bilinear(const DepthMap& map, std::size_t height, std::size_t width) {
    const DepthMap filled = map.valid_count() == map.size() ? map : fill_nearest_valid(map);
    Tensor resized = ops::bilinear_resize(filled.to_tensor(), height, width);
    return DepthMap::from_tensor(resized);
}

DepthMap resize_nearest(const DepthMap& map, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw ShapeError("resize_nearest: target extent must be >= 1");
    DepthMap out(height, width);
    for (std::size_t r = 0; r < height; ++r) {
        const auto sr = std::min(map.height - 1,
                                 static_cast<std::size_t>((static_cast<double>(r) + 0.5) * map.height / height));
        for (std::size_t c = 0; c < width; ++c) {
            const auto sc = std::min(map.width - 1,
                                     static_cast<std::size_t>((static_cast<double>(c) + 0.5) * map.width / width));
            out.depth[out.index(r, c)] = map.at(sr, sc);
            out.valid[out.index(r, c)] = map.valid[map.index(sr, sc)];
        }
    }
    return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
    Tensor resized = ops::bilinear_resize(image.to_tensor(), height, width);
    Image out(height, width);
    auto d = resized.data();
    const std::size_t n = height * width;
    for (std::size_t i = 0; i < n; ++i) out.set(i / width, i % width, d[i], d[n + i], d[2 * n + i]);
    return out;
}

}  // namespace pda
