// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <splatedit/scene.hpp>

#include <filesystem>

namespace splatedit {

enum class PlyPrecision { Float32, Float64 };

/// Reads a binary little-endian 3DGS-convention PLY (x, y, z, f_dc_*, f_rest_*, opacity,
/// scale_*, rot_*). Identity data comes from optional `obj_id` / `feat_0..15` vertex
/// properties, or from `<path>.identity.json` when the PLY has none. An optional `classifier`
/// element carries the identity classifier. Unknown properties and elements are skipped.
GaussianScene loadScene(const std::filesystem::path &path);

/// Writes the scene in the layout accepted by loadScene. Float64 (the default) makes the
/// round trip lossless; Float32 matches stock 3DGS tooling.
void saveScene(const GaussianScene &scene, const std::filesystem::path &path,
               PlyPrecision precision = PlyPrecision::Float64);

/// Sidecar carrying object ids and identity features for stock PLY files.
void saveIdentitySidecar(const GaussianScene &scene, const std::filesystem::path &path);

std::filesystem::path identitySidecarPath(const std::filesystem::path &plyPath);

} // namespace splatedit
