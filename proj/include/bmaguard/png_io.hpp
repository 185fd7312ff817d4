// PNG encode/decode for RGB8 buffers (libpng simplified API).

#ifndef BMAGUARD_PNG_IO_HPP_
#define BMAGUARD_PNG_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bmaguard/imaging.hpp"

namespace bmaguard {

RgbImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RgbImage& img);

RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& img);

} // namespace bmaguard

#endif
