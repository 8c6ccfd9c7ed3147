// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <splatedit/image.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace splatedit {

/// Default scale for 16-bit depth PNGs: stored value = round(depth * scale), i.e. millimetres.
inline constexpr double kDefaultDepthScale = 1000.0;

/// Raw PNG contents. Text chunks are round-tripped (used to declare the depth scale).
struct PngData {
    int width = 0, height = 0, channels = 0, bitDepth = 8;
    std::vector<std::uint16_t> samples; // row-major, interleaved, widened to 16 bits
    std::map<std::string, std::string> text;
};

PngData readPng(const std::filesystem::path &path);
void writePng(const std::filesystem::path &path, const PngData &png);
/// In-memory variants; `name` only appears in error messages.
PngData decodePng(std::string_view bytes, const std::string &name = "buffer");
std::string encodePng(const PngData &png);

PngData colorToPng(const ImageF &rgb);
PngData labelsToPng(const LabelMap &labels, bool force16 = false);
PngData depthToPng(const ImageF &depth, double scale = kDefaultDepthScale);

/// RGB colour in [0,1] (values clamped) to 8-bit PNG, and back.
void writeColorPng(const std::filesystem::path &path, const ImageF &rgb);
ImageF readColorPng(const std::filesystem::path &path);

/// Label map as 8-bit PNG when every label fits, 16-bit otherwise (or when forced).
void writeLabelPng(const std::filesystem::path &path, const LabelMap &labels, bool force16 = false);
LabelMap readLabelPng(const std::filesystem::path &path);

/// Binary mask as 8-bit PNG with 0/255. Reading treats any nonzero sample as set.
void writeMaskPng(const std::filesystem::path &path, const Mask &mask);
Mask readMaskPng(const std::filesystem::path &path);

/// Depth as 16-bit PNG with a `depth_scale` text chunk.
void writeDepthPng(const std::filesystem::path &path, const ImageF &depth,
                   double scale = kDefaultDepthScale);
ImageF readDepthPng(const std::filesystem::path &path);

/// Float32 .npy with shape (H, W) for single-channel images or (H, W, C) otherwise.
void writeNpy(const std::filesystem::path &path, const ImageF &image);
ImageF readNpy(const std::filesystem::path &path);

} // namespace splatedit
