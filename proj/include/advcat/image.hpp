#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "advcat/common.hpp"

namespace advcat {

// Interleaved H x W x C image with double channels, nominally in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    double& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    bool empty() const { return data.empty(); }
};

// Channel-major stack of planes (C x H x W); backs probability maps and
// Gumbel seed fields.
struct Field3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Field3() = default;
    Field3(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          data(static_cast<size_t>(c) * h * w, fill) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    size_t size() const { return data.size(); }
    bool same_shape(const Field3& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

inline uint8_t to_byte(double v) {
    double s = clamp01(v) * 255.0;
    int b = static_cast<int>(s + 0.5);
    return static_cast<uint8_t>(std::min(b, 255));
}

// Binary PPM (P6), 8-bit RGB. Alpha, when present, is dropped on write.
inline void write_ppm(const Image& img, const std::string& path) {
    if (img.channels < 3) throw InvalidInputError("write_ppm: need at least 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("write_ppm: cannot open " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) row[x * 3 + c] = to_byte(img.at(x, y, c));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw FormatError("write_ppm: write failed for " + path);
}

inline Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("read_ppm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw FormatError("read_ppm: not a P6 file: " + path);
    auto next_token = [&in, &path]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw FormatError("read_ppm: truncated header in " + path);
    };
    int w = std::stoi(next_token());
    int h = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    if (w <= 0 || h <= 0 || maxval != 255)
        throw FormatError("read_ppm: unsupported header in " + path);
    in.get();  // single whitespace after maxval
    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw FormatError("read_ppm: truncated pixel data in " + path);
    Image img(w, h, 3);
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

// Bilinear fetch with clamp-to-edge addressing; uv in pixel coordinates.
inline void bilinear_fetch(const Image& img, double u, double v, double* out) {
    double x = u - 0.5;
    double y = v - 0.5;
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0;
    double fy = y - y0;
    auto cx = [&img](int i) { return std::clamp(i, 0, img.width - 1); };
    auto cy = [&img](int i) { return std::clamp(i, 0, img.height - 1); };
    int x0c = cx(x0), x1c = cx(x0 + 1), y0c = cy(y0), y1c = cy(y0 + 1);
    for (int c = 0; c < img.channels; ++c) {
        double v00 = img.at(x0c, y0c, c), v10 = img.at(x1c, y0c, c);
        double v01 = img.at(x0c, y1c, c), v11 = img.at(x1c, y1c, c);
        out[c] = (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 +
                 (1 - fx) * fy * v01 + fx * fy * v11;
    }
}

// Adjoint of bilinear_fetch: scatters per-channel cotangents back into grad.
inline void bilinear_scatter(Image& grad, double u, double v, const double* cotangent) {
    double x = u - 0.5;
    double y = v - 0.5;
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0;
    double fy = y - y0;
    auto cx = [&grad](int i) { return std::clamp(i, 0, grad.width - 1); };
    auto cy = [&grad](int i) { return std::clamp(i, 0, grad.height - 1); };
    int x0c = cx(x0), x1c = cx(x0 + 1), y0c = cy(y0), y1c = cy(y0 + 1);
    for (int c = 0; c < grad.channels; ++c) {
        double g = cotangent[c];
        grad.at(x0c, y0c, c) += (1 - fx) * (1 - fy) * g;
        grad.at(x1c, y0c, c) += fx * (1 - fy) * g;
        grad.at(x0c, y1c, c) += (1 - fx) * fy * g;
        grad.at(x1c, y1c, c) += fx * fy * g;
    }
}

}  // namespace advcat
