#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "voxpix/fieldcore.hpp"

namespace voxpix {

// 8-bit RGBA PNG; alpha carries the foreground mask.
void write_png(const std::filesystem::path& path, const ImageSample& image);
// Images without alpha get a mask of every non-black pixel.
ImageSample read_png(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace voxpix
