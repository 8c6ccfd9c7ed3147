// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/error.hpp>
#include <splatedit/raster.hpp>
#include <splatedit/synth.hpp>

#include <Eigen/Geometry>

#define TOML_EXCEPTIONS 1
#include <tomlplusplus/toml.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace splatedit {

namespace {

template <typename T>
T
get(const toml::table &t, std::string_view key, T fallback) {
    if (const auto *node = t.get(key)) {
        if constexpr (std::is_same_v<T, double>) {
            if (auto v = node->value<double>()) {
                return *v;
            }
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (auto v = node->value<std::string>()) {
                return *v;
            }
        } else {
            if (auto v = node->value<std::int64_t>()) {
                return static_cast<T>(*v);
            }
        }
        throw LoadError("synth spec: key '" + std::string(key) + "' has the wrong type");
    }
    return fallback;
}

template <int N>
Eigen::Matrix<double, N, 1>
getVec(const toml::table &t, std::string_view key, const Eigen::Matrix<double, N, 1> &fallback) {
    const auto *node = t.get(key);
    if (!node) {
        return fallback;
    }
    const auto *arr = node->as_array();
    if (!arr || arr->size() != N) {
        throw LoadError("synth spec: key '" + std::string(key) + "' must be an array of " +
                              std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) {
        auto x = (*arr)[i].value<double>();
        if (!x) {
            throw LoadError("synth spec: key '" + std::string(key) + "' must hold numbers");
        }
        v[i] = *x;
    }
    return v;
}

TextureKind
parseTexture(const std::string &s) {
    if (s == "constant") {
        return TextureKind::Constant;
    }
    if (s == "smooth") {
        return TextureKind::Smooth;
    }
    if (s == "checker") {
        return TextureKind::Checker;
    }
    throw LoadError("synth spec: unknown texture '" + s + "'");
}

const char *
textureName(TextureKind k) {
    switch (k) {
    case TextureKind::Constant: return "constant";
    case TextureKind::Smooth: return "smooth";
    case TextureKind::Checker: return "checker";
    }
    return "smooth";
}

Vec3
textureAt(const PlaneSpec &p, double u, double v) {
    double t = 0.0;
    switch (p.texture) {
    case TextureKind::Constant: t = 0.0; break;
    case TextureKind::Smooth: {
        const double k = 2.0 * std::numbers::pi / p.period;
        t = 0.5 + 0.5 * std::sin(k * u) * std::cos(k * v);
        break;
    }
    case TextureKind::Checker: {
        const auto cu = static_cast<long>(std::floor(2.0 * u / p.period));
        const auto cv = static_cast<long>(std::floor(2.0 * v / p.period));
        t = ((cu + cv) & 1) ? 1.0 : 0.0;
        break;
    }
    }
    return p.colorA + t * (p.colorB - p.colorA);
}

void
validateSpec(const SynthSpec &spec) {
    auto unitColor = [](const Vec3 &c) { return (c.array() >= 0.0).all() && (c.array() <= 1.0).all(); };
    if (!unitColor(spec.background)) {
        throw InvalidArgument("synth spec: background must lie in [0,1]");
    }
    for (std::size_t i = 0; i < spec.blobs.size(); ++i) {
        const auto &b = spec.blobs[i];
        const std::string at = "synth spec: blob " + std::to_string(i) + ": ";
        if (b.count < 1 || !(b.spread >= 0.0) || !(b.splatScale > 0.0)) {
            throw InvalidArgument(at + "count must be >= 1, spread >= 0 and splat_scale > 0");
        }
        if (!(b.opacity > 0.0 && b.opacity < 1.0) || !unitColor(b.color)) {
            throw InvalidArgument(at + "opacity must lie in (0,1) and colour in [0,1]");
        }
        if (b.id == 0 || b.id > kMaxObjectId) {
            throw InvalidArgument(at + "id must lie in [1, 255]");
        }
    }
    for (std::size_t i = 0; i < spec.planes.size(); ++i) {
        const auto &p = spec.planes[i];
        const std::string at = "synth spec: plane " + std::to_string(i) + ": ";
        if (p.axisU.norm() < 1e-12 || p.axisV.norm() < 1e-12 ||
            std::abs(p.axisU.normalized().dot(p.axisV.normalized())) > 1e-9) {
            throw InvalidArgument(at + "axes must be non-zero and orthogonal");
        }
        if (!(p.spacing > 0.0) || !(p.halfExtent.array() > 0.0).all() || !(p.period > 0.0)) {
            throw InvalidArgument(at + "spacing, half_extent and period must be positive");
        }
        if (!(p.opacity > 0.0 && p.opacity < 1.0) || !unitColor(p.colorA) || !unitColor(p.colorB)) {
            throw InvalidArgument(at + "opacity must lie in (0,1) and colours in [0,1]");
        }
        if (p.id > kMaxObjectId) {
            throw InvalidArgument(at + "id must lie in [0, 255]");
        }
    }
    const auto &r = spec.ring;
    if (r.count < 1 || r.width < 1 || r.height < 1 || !(r.focal > 0.0) || !(r.radius > 0.0) ||
        r.up.norm() < 1e-12) {
        throw InvalidArgument("synth spec: ring needs count, image size, focal and radius > 0");
    }
}

} // namespace

SynthSpec
synthSpecFromToml(const std::string &text) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error &e) {
        std::ostringstream msg;
        msg << "synth spec: " << e.description() << " at line " << e.source().begin.line;
        throw LoadError(msg.str());
    }
    SynthSpec spec;
    spec.seed       = get<std::uint64_t>(root, "seed", spec.seed);
    spec.background = getVec<3>(root, "background", spec.background);

    if (const auto *blobs = root.get_as<toml::array>("blobs")) {
        for (const auto &node: *blobs) {
            const auto *t = node.as_table();
            if (!t) {
                throw LoadError("synth spec: [[blobs]] entries must be tables");
            }
            BlobSpec b;
            b.center     = getVec<3>(*t, "center", b.center);
            b.count      = get<int>(*t, "count", b.count);
            b.spread     = get<double>(*t, "spread", b.spread);
            b.splatScale = get<double>(*t, "splat_scale", b.splatScale);
            b.opacity    = get<double>(*t, "opacity", b.opacity);
            b.color      = getVec<3>(*t, "color", b.color);
            b.id         = get<ObjectId>(*t, "id", b.id);
            spec.blobs.push_back(b);
        }
    }
    if (const auto *planes = root.get_as<toml::array>("planes")) {
        for (const auto &node: *planes) {
            const auto *t = node.as_table();
            if (!t) {
                throw LoadError("synth spec: [[planes]] entries must be tables");
            }
            PlaneSpec p;
            p.center     = getVec<3>(*t, "center", p.center);
            p.axisU      = getVec<3>(*t, "axis_u", p.axisU);
            p.axisV      = getVec<3>(*t, "axis_v", p.axisV);
            p.halfExtent = getVec<2>(*t, "half_extent", p.halfExtent);
            p.spacing    = get<double>(*t, "spacing", p.spacing);
            p.opacity    = get<double>(*t, "opacity", p.opacity);
            p.texture    = parseTexture(get<std::string>(*t, "texture", textureName(p.texture)));
            p.colorA     = getVec<3>(*t, "color_a", p.colorA);
            p.colorB     = getVec<3>(*t, "color_b", p.colorB);
            p.period     = get<double>(*t, "period", p.period);
            if (t->contains("hole")) {
                p.hole = getVec<3>(*t, "hole", Vec3::Zero());
            }
            p.id = get<ObjectId>(*t, "id", p.id);
            spec.planes.push_back(p);
        }
    }
    if (const auto *ring = root.get_as<toml::table>("ring")) {
        auto &r      = spec.ring;
        r.count      = get<int>(*ring, "count", r.count);
        r.radius     = get<double>(*ring, "radius", r.radius);
        r.elevation  = get<double>(*ring, "elevation", r.elevation);
        r.target     = getVec<3>(*ring, "target", r.target);
        r.up         = getVec<3>(*ring, "up", r.up);
        r.startAngle = get<double>(*ring, "start_angle", r.startAngle);
        r.width      = get<int>(*ring, "width", r.width);
        r.height     = get<int>(*ring, "height", r.height);
        r.focal      = get<double>(*ring, "focal", r.focal);
    }
    validateSpec(spec);
    return spec;
}

SynthSpec
loadSynthSpec(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open synth spec '" + path.string() + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return synthSpecFromToml(buf.str());
}

std::string
synthSpecToToml(const SynthSpec &spec) {
    auto arr = [](const auto &v) {
        toml::array a;
        for (int i = 0; i < v.size(); ++i) {
            a.push_back(v[i]);
        }
        return a;
    };
    toml::table root;
    root.insert("seed", static_cast<std::int64_t>(spec.seed));
    root.insert("background", arr(spec.background));
    toml::array blobs;
    for (const auto &b: spec.blobs) {
        blobs.push_back(toml::table{{"center", arr(b.center)},
                                    {"count", b.count},
                                    {"spread", b.spread},
                                    {"splat_scale", b.splatScale},
                                    {"opacity", b.opacity},
                                    {"color", arr(b.color)},
                                    {"id", static_cast<int>(b.id)}});
    }
    toml::array planes;
    for (const auto &p: spec.planes) {
        toml::table t{{"center", arr(p.center)},
                      {"axis_u", arr(p.axisU)},
                      {"axis_v", arr(p.axisV)},
                      {"half_extent", arr(p.halfExtent)},
                      {"spacing", p.spacing},
                      {"opacity", p.opacity},
                      {"texture", textureName(p.texture)},
                      {"color_a", arr(p.colorA)},
                      {"color_b", arr(p.colorB)},
                      {"period", p.period},
                      {"id", static_cast<int>(p.id)}};
        if (p.hole) {
            t.insert("hole", arr(*p.hole));
        }
        planes.push_back(std::move(t));
    }
    root.insert("blobs", std::move(blobs));
    root.insert("planes", std::move(planes));
    const auto &r = spec.ring;
    root.insert("ring", toml::table{{"count", r.count},
                                    {"radius", r.radius},
                                    {"elevation", r.elevation},
                                    {"target", arr(r.target)},
                                    {"up", arr(r.up)},
                                    {"start_angle", r.startAngle},
                                    {"width", r.width},
                                    {"height", r.height},
                                    {"focal", r.focal}});
    std::ostringstream out;
    out << root;
    return out.str();
}

std::vector<Camera>
ringCameras(const CameraRingSpec &ring, double angleOffset) {
    const Vec3 up = ring.up.normalized();
    // Any in-plane basis works; pick the axis least aligned with `up`.
    Vec3 seed = Vec3::UnitX();
    if (std::abs(up.dot(seed)) > 0.9) {
        seed = Vec3::UnitY();
    }
    const Vec3 e1 = (seed - up * up.dot(seed)).normalized();
    const Vec3 e2 = up.cross(e1);
    std::vector<Camera> cams;
    cams.reserve(ring.count);
    for (int i = 0; i < ring.count; ++i) {
        const double a = ring.startAngle + angleOffset + 2.0 * std::numbers::pi * i / ring.count;
        const Vec3 eye = ring.target + ring.radius * (std::cos(a) * e1 + std::sin(a) * e2) + ring.elevation * up;
        Camera cam     = Camera::lookAt(eye, ring.target, up, ring.width, ring.height, ring.focal, ring.focal,
                                        0.5 * (ring.width - 1), 0.5 * (ring.height - 1));
        char name[32];
        std::snprintf(name, sizeof name, "view_%03d", i);
        cam.name = name;
        cams.push_back(std::move(cam));
    }
    return cams;
}

LabelMap
referenceLabelMap(const GaussianScene &scene, const Camera &camera) {
    struct Entry {
        double depth;
        std::uint32_t index;
        Vec2 mean;
        Mat2 conic;
        double opacity;
        ObjectId id;
    };
    std::vector<Entry> entries;
    for (std::uint32_t i = 0; i < scene.size(); ++i) {
        const auto &g = scene.gaussians[i];
        if (auto p = project(g, camera, i)) {
            entries.push_back({p->depth, i, p->mean2d, p->conic, g.opacity(), g.objectId.value_or(0)});
        }
    }
    std::sort(entries.begin(), entries.end(), [](const Entry &a, const Entry &b) {
        return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
    });

    // Coarse bins keep the per-pixel scan short. Only contributions past 6 sigma, where the
    // falloff is below 2e-8, are left out.
    constexpr int kBin = 8;
    const int bw = (camera.width + kBin - 1) / kBin, bh = (camera.height + kBin - 1) / kBin;
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(bw) * bh);
    for (std::uint32_t e = 0; e < entries.size(); ++e) {
        const Mat2 cov  = entries[e].conic.inverse();
        const double lo = 0.5 * (cov(0, 0) + cov(1, 1));
        const double r  = 6.0 * std::sqrt(lo + std::sqrt(std::max(0.0, lo * lo - cov.determinant())));
        const int x0 = std::max(0, static_cast<int>(std::floor((entries[e].mean.x() - r) / kBin)));
        const int x1 = std::min(bw - 1, static_cast<int>(std::floor((entries[e].mean.x() + r) / kBin)));
        const int y0 = std::max(0, static_cast<int>(std::floor((entries[e].mean.y() - r) / kBin)));
        const int y1 = std::min(bh - 1, static_cast<int>(std::floor((entries[e].mean.y() + r) / kBin)));
        for (int by = y0; by <= y1; ++by) {
            for (int bx = x0; bx <= x1; ++bx) {
                bins[static_cast<std::size_t>(by) * bw + bx].push_back(e);
            }
        }
    }

    LabelMap labels(camera.width, camera.height, 1);
    std::vector<double> weight(kMaxObjectId + 1);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            std::fill(weight.begin(), weight.end(), 0.0);
            double T = 1.0;
            for (const auto ei: bins[static_cast<std::size_t>(y / kBin) * bw + x / kBin]) {
                const auto &e      = entries[ei];
                const Vec2 d       = Vec2(x, y) - e.mean;
                const double alpha = std::min(kMaxAlpha, e.opacity * std::exp(-0.5 * d.dot(e.conic * d)));
                if (T * (1.0 - alpha) < kMinTransmittance) {
                    break;
                }
                weight[e.id] += alpha * T;
                T *= 1.0 - alpha;
            }
            if (1.0 - T >= kIdAlphaThreshold) {
                labels.at(x, y) = static_cast<ObjectId>(std::max_element(weight.begin(), weight.end()) - weight.begin());
            }
        }
    }
    return labels;
}

SynthResult
synthScene(const SynthSpec &spec) {
    validateSpec(spec);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    SynthResult result;
    auto &scene      = result.scene;
    scene.background = spec.background;

    for (const auto &b: spec.blobs) {
        for (int i = 0; i < b.count; ++i) {
            Gaussian g;
            g.position   = b.center + b.spread * Vec3(normal(rng), normal(rng), normal(rng));
            g.logScale   = Vec3::Constant(std::log(b.splatScale));
            g.opacityRaw = logit(b.opacity);
            g.setBaseColor(b.color);
            g.objectId = b.id;
            scene.gaussians.push_back(g);
        }
    }
    for (const auto &p: spec.planes) {
        const Vec3 u = p.axisU.normalized();
        const Vec3 v = p.axisV.normalized();
        Mat3 basis;
        basis << u, v, u.cross(v);
        const Eigen::Quaterniond q(basis);
        const int nu = static_cast<int>(std::floor(p.halfExtent.x() / p.spacing + 1e-9));
        const int nv = static_cast<int>(std::floor(p.halfExtent.y() / p.spacing + 1e-9));
        for (int j = -nv; j <= nv; ++j) {
            for (int i = -nu; i <= nu; ++i) {
                const double a = i * p.spacing, c = j * p.spacing;
                if (p.hole && std::hypot(a - p.hole->x(), c - p.hole->y()) < p.hole->z()) {
                    continue;
                }
                Gaussian g;
                g.position   = p.center + a * u + c * v;
                g.logScale   = Vec3(std::log(0.6 * p.spacing), std::log(0.6 * p.spacing), std::log(0.05 * p.spacing));
                g.rotation   = Vec4(q.w(), q.x(), q.y(), q.z());
                g.opacityRaw = logit(p.opacity);
                g.setBaseColor(textureAt(p, a, c));
                g.objectId = p.id;
                scene.gaussians.push_back(g);
            }
        }
    }

    result.cameras = ringCameras(spec.ring);
    for (const auto &cam: result.cameras) {
        result.labels.push_back(referenceLabelMap(scene, cam));
    }
    return result;
}

SynthSpec
backgroundOnly(const SynthSpec &spec) {
    SynthSpec out = spec;
    out.blobs.clear();
    for (auto &p: out.planes) {
        p.hole.reset();
    }
    return out;
}

} // namespace splatedit
