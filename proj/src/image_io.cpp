#include "compsplat/image_io.hpp"

#include <png.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace compsplat {

Image read_png(const std::filesystem::path& path, int channels) {
    if (channels != 1 && channels != 3) throw InvalidParameter("read_png: channels must be 1 or 3");
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw IoError(path.string() + ": cannot read PNG (" + image.message + ")");
    }
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError(path.string() + ": cannot decode PNG (" + msg + ")");
    }
    Image out(static_cast<int>(image.width), static_cast<int>(image.height), channels);
    for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] / 255.0;
    return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw InvalidParameter("write_png: channels must be 1 or 3");
    std::vector<std::uint8_t> buf(img.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.data[i]);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
        throw IoError(path.string() + ": cannot write PNG (" + image.message + ")");
    }
}

Image read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open PFM file");
    std::string magic;
    int w = 0;
    int h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    in.get();
    if (!in || (magic != "Pf" && magic != "PF") || w <= 0 || h <= 0 || scale == 0.0) {
        throw IoError(path.string() + ": malformed PFM header");
    }
    if (scale > 0.0) throw IoError(path.string() + ": big-endian PFM is not supported");
    const int channels = magic == "PF" ? 3 : 1;
    Image out(w, h, channels);
    const std::size_t row = static_cast<std::size_t>(w) * channels;
    std::vector<float> buf(row);
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(row * sizeof(float)));
        if (!in) throw IoError(path.string() + ": truncated PFM data");
        for (std::size_t i = 0; i < row; ++i) out.data[static_cast<std::size_t>(y) * row + i] = buf[i];
    }
    return out;
}

void write_pfm(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw InvalidParameter("write_pfm: channels must be 1 or 3");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << (img.channels == 3 ? "PF" : "Pf") << '\n' << img.width << ' ' << img.height << "\n-1\n";
    const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<float> buf(row);
    for (int y = img.height - 1; y >= 0; --y) {
        for (std::size_t i = 0; i < row; ++i) {
            buf[i] = static_cast<float>(img.data[static_cast<std::size_t>(y) * row + i]);
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(row * sizeof(float)));
    }
    if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace compsplat
