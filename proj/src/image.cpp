#include "wavecomp/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wavecomp/errors.hpp"

namespace wavecomp {

Plane Image::channel(int c) const {
    Plane p(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            p.at(x, y) = at(x, y, c);
    return p;
}

void Image::set_channel(int c, const Plane& p) {
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            at(x, y, c) = p.at(x, y);
}

namespace {

constexpr uint32_t kTnsrVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

void put_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
    uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4))
        throw DataError("truncated read of " + what);
    return v;
}

} // namespace

void write_tnsr(std::ostream& os, const Tensor& t) {
    os.write("TNSR", 4);
    put_u32(os, kTnsrVersion);
    put_u32(os, static_cast<uint32_t>(t.dims.size()));
    size_t n = 1;
    for (uint32_t d : t.dims) {
        put_u32(os, d);
        n *= d;
    }
    if (n != t.data.size()) throw DataError("tensor payload does not match dims");
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!os) throw DataError("tensor write failed");
}

Tensor read_tnsr(std::istream& is, const std::string& what) {
    char magic[4] = {};
    if (!is.read(magic, 4) || std::memcmp(magic, "TNSR", 4) != 0)
        throw DataError("bad magic in tensor container " + what);
    uint32_t version = get_u32(is, what + " version");
    if (version != kTnsrVersion)
        throw DataError("unsupported tensor container version in " + what);
    uint32_t ndim = get_u32(is, what + " ndim");
    if (ndim == 0 || ndim > 8) throw DataError("implausible ndim in " + what);
    Tensor t;
    size_t n = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
        uint32_t d = get_u32(is, what + " dims");
        t.dims.push_back(d);
        n *= d;
    }
    t.data.resize(n);
    if (!is.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(n * sizeof(double))))
        throw DataError("truncated payload in " + what);
    return t;
}

void write_tnsr_file(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_tnsr(os, t);
}

Tensor read_tnsr_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    return read_tnsr(is, path.string());
}

Tensor image_to_tensor(const Image& img) {
    Tensor t;
    t.dims = {static_cast<uint32_t>(img.height), static_cast<uint32_t>(img.width),
              static_cast<uint32_t>(img.channels)};
    t.data = img.data;
    return t;
}

Image tensor_to_image(const Tensor& t, const std::string& what) {
    if (t.dims.size() == 2) {
        Image img(static_cast<int>(t.dims[1]), static_cast<int>(t.dims[0]), 1);
        img.data = t.data;
        return img;
    }
    if (t.dims.size() != 3)
        throw DataError(what + ": expected a [height, width, channels] tensor");
    Image img(static_cast<int>(t.dims[1]), static_cast<int>(t.dims[0]),
              static_cast<int>(t.dims[2]));
    img.data = t.data;
    return img;
}

Tensor plane_to_tensor(const Plane& p) {
    Tensor t;
    t.dims = {static_cast<uint32_t>(p.height), static_cast<uint32_t>(p.width)};
    t.data = p.v;
    return t;
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    std::string magic;
    is >> magic;
    if (magic != "P6") throw DataError(path.string() + ": not a P6 PPM file");
    auto next_int = [&](const char* what) {
        // skip whitespace and '#' comment lines
        for (;;) {
            int ch = is.peek();
            if (ch == std::char_traits<char>::eof()) break;
            if (ch == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(static_cast<unsigned char>(ch))) {
                is.get();
            } else {
                break;
            }
        }
        long v = -1;
        is >> v;
        if (!is || v < 0) throw DataError(path.string() + ": bad " + std::string(what));
        return v;
    };
    long w = next_int("width");
    long h = next_int("height");
    long maxval = next_int("maxval");
    if (maxval != 255) throw DataError(path.string() + ": only 8-bit PPM supported");
    is.get(); // single whitespace before the raster
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw DataError(path.string() + ": truncated pixel data");
    Image img(static_cast<int>(w), static_cast<int>(h), 3);
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

bool write_ppm(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 3 && img.channels != 1)
        throw DataError("PPM export needs 1 or 3 channels");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    bool clamped = false;
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = img.at(x, y, img.channels == 1 ? 0 : c);
                if (v < 0.0 || v > 1.0) {
                    clamped = true;
                    v = std::clamp(v, 0.0, 1.0);
                }
                raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
            }
        }
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw DataError("PPM write failed: " + path.string());
    return clamped;
}

} // namespace wavecomp
