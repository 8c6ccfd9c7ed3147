// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// Procedural test scenes: Gaussian blobs, textured planes and a camera ring, with exact
// ground-truth label maps.

#pragma once

#include <splatedit/camera.hpp>
#include <splatedit/image.hpp>
#include <splatedit/scene.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace splatedit {

struct BlobSpec {
    Vec3 center = Vec3::Zero();
    int count   = 100;
    double spread = 0.2;      // standard deviation of splat centres
    double splatScale = 0.08; // splat sigma, world units
    double opacity    = 0.95;
    Vec3 color        = Vec3(0.8, 0.2, 0.2);
    ObjectId id       = 1;
};

enum class TextureKind { Constant, Smooth, Checker };

/// Rectangle of splats spanned by two orthogonal axes.
struct PlaneSpec {
    Vec3 center = Vec3::Zero();
    Vec3 axisU  = Vec3::UnitX();
    Vec3 axisV  = Vec3::UnitY();
    Vec2 halfExtent = Vec2(1.0, 1.0);
    double spacing  = 0.05;
    double opacity  = 0.98;
    TextureKind texture = TextureKind::Smooth;
    Vec3 colorA  = Vec3(0.3, 0.5, 0.3);
    Vec3 colorB  = Vec3(0.7, 0.6, 0.4);
    double period = 2.0; // texture wavelength in plane units
    /// Disc in plane coordinates (u, v, radius) left empty.
    std::optional<Vec3> hole;
    ObjectId id = 0; // 0 keeps the plane unlabelled
};

struct CameraRingSpec {
    int count     = 8;
    double radius = 3.0;
    double elevation = 1.0; // along `up`, relative to `target`
    Vec3 target   = Vec3::Zero();
    Vec3 up       = Vec3::UnitZ();
    double startAngle = 0.0; // radians
    int width    = 128;
    int height   = 96;
    double focal = 110.0;
};

struct SynthSpec {
    std::uint64_t seed = 1;
    Vec3 background    = Vec3::Zero();
    std::vector<BlobSpec> blobs;
    std::vector<PlaneSpec> planes;
    CameraRingSpec ring;
};

struct SynthResult {
    /// Splats carry their ground-truth ids (planes with id 0 included as 0).
    GaussianScene scene;
    std::vector<Camera> cameras;
    std::vector<LabelMap> labels;
};

/// Throws LoadError on malformed TOML and InvalidArgument on out-of-range values.
SynthSpec synthSpecFromToml(const std::string &text);
SynthSpec loadSynthSpec(const std::filesystem::path &path);
std::string synthSpecToToml(const SynthSpec &spec);

/// Throws InvalidArgument on an invalid spec.
SynthResult synthScene(const SynthSpec &spec);

/// Cameras evenly spaced on the ring described by `ring`, rotated by `angleOffset`.
std::vector<Camera> ringCameras(const CameraRingSpec &ring, double angleOffset = 0.0);

/// Ground-truth label map by direct per-pixel evaluation (6-sigma reach instead of the
/// rasterizer's 3-sigma ellipse, no tiles): the id with the largest blended weight where
/// coverage >= 0.5.
LabelMap referenceLabelMap(const GaussianScene &scene, const Camera &camera);

/// The same spec with every blob removed and every hole closed.
SynthSpec backgroundOnly(const SynthSpec &spec);

} // namespace splatedit
