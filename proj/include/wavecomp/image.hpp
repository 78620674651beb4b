#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace wavecomp {

// Single-channel coefficient/pixel block, row-major (y outer, x inner).
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> v;

    Plane() = default;
    Plane(int w, int h) : width(w), height(h), v(static_cast<size_t>(w) * h, 0.0) {}

    double& at(int x, int y) { return v[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return v[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return v.size(); }
};

// Dense raster, scanline order with channel-last layout: index (y, x, c).
// Pixel values are nominally in [0, 1]; distortions and subband
// reconstructions may exit that range.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, 0.0) {}

    double& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    Plane channel(int c) const;
    void set_channel(int c, const Plane& p);
};

// --- raw tensor container -------------------------------------------------
// Layout: magic "TNSR", version u32 LE, ndim u32, dims u32*ndim, payload
// f64 LE row-major. Images use dims [height, width, channels] (channel-last).

struct Tensor {
    std::vector<uint32_t> dims;
    std::vector<double> data;
};

void write_tnsr(std::ostream& os, const Tensor& t);
Tensor read_tnsr(std::istream& is, const std::string& what);
void write_tnsr_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_tnsr_file(const std::filesystem::path& path);

Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, const std::string& what);
Tensor plane_to_tensor(const Plane& p);

// --- PPM (P6, 8-bit) ------------------------------------------------------
// Reads scale to [0,1] (v / 255). Writing clamps to [0,1] and rounds to
// 8 bits; returns true when clamping actually occurred.
Image read_ppm(const std::filesystem::path& path);
bool write_ppm(const std::filesystem::path& path, const Image& img);

} // namespace wavecomp
