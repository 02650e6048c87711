#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pda/tensor.hpp"

namespace pda {

// Single-channel depth raster with a validity mask. Values are meters unless a
// function states otherwise (normalized maps use the same type).
struct DepthMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> depth;
    std::vector<std::uint8_t> valid;

    DepthMap() = default;
    DepthMap(std::size_t h, std::size_t w, double value = 0.0, bool is_valid = true);

    std::size_t size() const { return height * width; }
    std::size_t index(std::size_t row, std::size_t col) const { return row * width + col; }
    double at(std::size_t row, std::size_t col) const { return depth[index(row, col)]; }
    double& at(std::size_t row, std::size_t col) { return depth[index(row, col)]; }
    bool is_valid(std::size_t row, std::size_t col) const { return valid[index(row, col)] != 0; }
    std::size_t valid_count() const;
    bool same_size(const DepthMap& other) const { return height == other.height && width == other.width; }

    // [1,H,W]; invalid pixels carry their stored value.
    Tensor to_tensor() const;
    // [1,H,W] mask of 0/1 values.
    Tensor mask_tensor() const;
    // Accepts [1,H,W] or [H,W]; every pixel valid.
    static DepthMap from_tensor(const Tensor& t);

    bool operator==(const DepthMap&) const = default;
};

// 8-bit interleaved RGB raster.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}

    std::size_t size() const { return height * width; }
    // Channel value scaled to [0, 1].
    double value(std::size_t row, std::size_t col, std::size_t channel) const {
        return rgb[(row * width + col) * 3 + channel] / 255.0;
    }
    void set(std::size_t row, std::size_t col, double r, double g, double b);

    // [3,H,W] in [0, 1].
    Tensor to_tensor() const;
    // Rec.601 luma in [0, 1], row-major.
    std::vector<double> grayscale() const;

    bool operator==(const Image&) const = default;
};

// Bilinear resample (align-corners-false) of the depth values. Invalid pixels
// are filled from their nearest valid neighbour first; the output is fully valid.
DepthMap resize_bilinear(const DepthMap& map, std::size_t height, std::size_t width);
// Nearest-neighbour resample that carries the mask along.
DepthMap resize_nearest(const DepthMap& map, std::size_t height, std::size_t width);
// Bilinear resample of each colour channel.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

// Replaces every invalid pixel with the value of its nearest valid pixel
// (squared Euclidean pixel distance, ties to the lowest index).
DepthMap fill_nearest_valid(const DepthMap& map);

}  // namespace pda
