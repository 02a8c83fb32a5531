#pragma once

#include <filesystem>

#include "restrav/ingest.hpp"

namespace restrav {

// PNG (8/16-bit, any colour type, alpha dropped) and binary PPM/PGM (P6/P5).
// Grayscale is returned with a single channel; max_value reflects the file's range.
Image read_image(const std::filesystem::path& path);

Image read_png(const std::filesystem::path& path);
Image read_pnm(const std::filesystem::path& path);

// 8-bit writers; pixels are interpreted in [0, max_value] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);
void write_pnm(const std::filesystem::path& path, const Image& image);

bool is_supported_image(const std::filesystem::path& path);

}  // namespace restrav
