#include "restrav/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "restrav/error.hpp"

namespace restrav {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

std::uint8_t to_byte(float v, float max_value) {
    const float scaled = std::clamp(v / max_value, 0.0f, 1.0f) * 255.0f;
    return static_cast<std::uint8_t>(std::lround(scaled));
}

}  // namespace

bool is_supported_image(const std::filesystem::path& path) {
    const auto ext = lower_extension(path);
    return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

Image read_image(const std::filesystem::path& path) {
    if (lower_extension(path) == ".png") return read_png(path);
    if (is_supported_image(path)) return read_pnm(path);
    throw Error(ErrorCode::DecodeFailure, "unsupported image type: " + path.string());
}

Image read_png(const std::filesystem::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
        throw Error(ErrorCode::DecodeFailure, path.string() + ": " + img.message);
    }
    const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&img);
        throw Error(ErrorCode::DecodeFailure, path.string() + ": " + img.message);
    }
    Image out(static_cast<int>(img.height), static_cast<int>(img.width), gray ? 1 : 3, 255.0f);
    std::copy(buffer.begin(), buffer.end(), out.pixels.begin());
    return out;
}

Image read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::DecodeFailure, "cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    auto skip_space_and_comments = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&] {
        skip_space_and_comments();
        long value = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            value = value * 10 + (bytes[pos] - '0');
            any = true;
            ++pos;
            if (value > 1'000'000) break;
        }
        if (!any) throw Error(ErrorCode::DecodeFailure, "malformed PNM header in " + path.string());
        return value;
    };

    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
        throw Error(ErrorCode::DecodeFailure, "not a binary PPM/PGM: " + path.string());
    }
    const int channels = bytes[1] == '6' ? 3 : 1;
    pos = 2;
    const long width = read_int();
    const long height = read_int();
    const long maxval = read_int();
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
        throw Error(ErrorCode::DecodeFailure, "invalid PNM dimensions in " + path.string());
    }
    ++pos;  // single whitespace before raster

    const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
    const std::size_t samples = static_cast<std::size_t>(width) * height * channels;
    if (bytes.size() < pos + samples * bytes_per_sample) {
        throw Error(ErrorCode::DecodeFailure, "truncated PNM raster in " + path.string());
    }
    Image out(static_cast<int>(height), static_cast<int>(width), channels, static_cast<float>(maxval));
    const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    for (std::size_t i = 0; i < samples; ++i) {
        out.pixels[i] = bytes_per_sample == 1
                            ? static_cast<float>(raster[i])
                            : static_cast<float>((raster[2 * i] << 8) | raster[2 * i + 1]);
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw Error(ErrorCode::ConfigInvalid, "write_png expects 1 or 3 channels");
    }
    std::vector<png_byte> buffer(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), buffer.begin(),
                   [&](float v) { return to_byte(v, image.max_value); });
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
        throw Error(ErrorCode::IoError, path.string() + ": " + img.message);
    }
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw Error(ErrorCode::ConfigInvalid, "write_pnm expects 1 or 3 channels");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
    std::vector<char> raster(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), raster.begin(),
                   [&](float v) { return static_cast<char>(to_byte(v, image.max_value)); });
    out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
}

}  // namespace restrav
