// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/error.hpp>
#include <splatedit/ply.hpp>

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace splatedit {

namespace {

enum class ScalarType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

struct Property {
    std::string name;
    ScalarType type;
    std::size_t offset = 0;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;
    std::size_t stride = 0;

    const Property *
    find(const std::string &prop) const {
        for (const auto &p: properties) {
            if (p.name == prop) {
                return &p;
            }
        }
        return nullptr;
    }
};

std::size_t
sizeOf(ScalarType t) {
    switch (t) {
    case ScalarType::Int8:
    case ScalarType::UInt8: return 1;
    case ScalarType::Int16:
    case ScalarType::UInt16: return 2;
    case ScalarType::Int32:
    case ScalarType::UInt32:
    case ScalarType::Float32: return 4;
    case ScalarType::Float64: return 8;
    }
    return 0;
}

ScalarType
parseType(const std::string &s) {
    static const std::unordered_map<std::string, ScalarType> table = {
        {"char", ScalarType::Int8},     {"int8", ScalarType::Int8},
        {"uchar", ScalarType::UInt8},   {"uint8", ScalarType::UInt8},
        {"short", ScalarType::Int16},   {"int16", ScalarType::Int16},
        {"ushort", ScalarType::UInt16}, {"uint16", ScalarType::UInt16},
        {"int", ScalarType::Int32},     {"int32", ScalarType::Int32},
        {"uint", ScalarType::UInt32},   {"uint32", ScalarType::UInt32},
        {"float", ScalarType::Float32}, {"float32", ScalarType::Float32},
        {"double", ScalarType::Float64}, {"float64", ScalarType::Float64}};
    const auto it = table.find(s);
    if (it == table.end()) {
        throw LoadError("unsupported PLY property type '" + s + "'");
    }
    return it->second;
}

template <typename T>
T
readAs(const char *p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

double
readScalar(const char *p, ScalarType t) {
    switch (t) {
    case ScalarType::Int8: return readAs<std::int8_t>(p);
    case ScalarType::UInt8: return readAs<std::uint8_t>(p);
    case ScalarType::Int16: return readAs<std::int16_t>(p);
    case ScalarType::UInt16: return readAs<std::uint16_t>(p);
    case ScalarType::Int32: return readAs<std::int32_t>(p);
    case ScalarType::UInt32: return readAs<std::uint32_t>(p);
    case ScalarType::Float32: return readAs<float>(p);
    case ScalarType::Float64: return readAs<double>(p);
    }
    return 0.0;
}

struct Header {
    std::vector<Element> elements;
    std::vector<std::string> comments;
};

Header
parseHeader(std::istream &in, const std::string &where) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
        throw LoadError(where + ": malformed header (missing 'ply' magic)");
    }
    Header header;
    bool sawFormat = false;
    while (true) {
        if (!std::getline(in, line)) {
            throw LoadError(where + ": malformed header (missing end_header)");
        }
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "end_header") {
            break;
        }
        if (keyword == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") {
                throw LoadError(where + ": malformed header (only binary_little_endian is supported, got '" +
                                fmt + "')");
            }
            sawFormat = true;
        } else if (keyword == "comment" || keyword == "obj_info") {
            header.comments.push_back(line.size() > keyword.size() ? line.substr(keyword.size() + 1)
                                                                    : std::string{});
        } else if (keyword == "element") {
            Element e;
            long long count = -1;
            ls >> e.name >> count;
            if (e.name.empty() || count < 0) {
                throw LoadError(where + ": malformed header (bad element line '" + line + "')");
            }
            e.count = static_cast<std::size_t>(count);
            header.elements.push_back(std::move(e));
        } else if (keyword == "property") {
            if (header.elements.empty()) {
                throw LoadError(where + ": malformed header (property before element)");
            }
            std::string type, name;
            ls >> type;
            if (type == "list") {
                throw LoadError(where + ": malformed header (list properties are not supported)");
            }
            ls >> name;
            if (name.empty()) {
                throw LoadError(where + ": malformed header (property without a name)");
            }
            auto &e = header.elements.back();
            Property p{name, parseType(type), e.stride};
            e.stride += sizeOf(p.type);
            e.properties.push_back(std::move(p));
        } else if (!keyword.empty()) {
            throw LoadError(where + ": malformed header (unknown keyword '" + keyword + "')");
        }
    }
    if (!sawFormat) {
        throw LoadError(where + ": malformed header (missing format line)");
    }
    return header;
}

// Background colour is carried in a comment as hex floats so the round trip is exact.
bool
parseBackground(const std::string &comment, Vec3 &out) {
    static const std::string prefix = "splatedit background ";
    if (comment.rfind(prefix, 0) != 0) {
        return false;
    }
    std::istringstream ls(comment.substr(prefix.size()));
    std::string tok[3];
    ls >> tok[0] >> tok[1] >> tok[2];
    for (int i = 0; i < 3; ++i) {
        char *end = nullptr;
        out[i]    = std::strtod(tok[i].c_str(), &end);
        if (tok[i].empty() || *end != '\0') {
            return false;
        }
    }
    return true;
}

std::string
hexDouble(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

void
loadSidecar(GaussianScene &scene, const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        return;
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception &e) {
        throw LoadError(path.string() + ": " + e.what());
    }
    const auto n = scene.size();
    if (doc.contains("object_ids")) {
        const auto &ids = doc["object_ids"];
        if (ids.size() != n) {
            throw LoadError(path.string() + ": object_ids has " + std::to_string(ids.size()) +
                            " entries for " + std::to_string(n) + " gaussians");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (ids[i].is_null()) {
                scene.gaussians[i].objectId.reset();
                continue;
            }
            const auto v = ids[i].get<long long>();
            if (v < 0 || v > 65535) {
                throw LoadError(path.string() + ": record " + std::to_string(i) + ": object id out of range");
            }
            scene.gaussians[i].objectId = static_cast<ObjectId>(v);
        }
    }
    if (doc.contains("features")) {
        const auto &feats = doc["features"];
        if (feats.size() != n) {
            throw LoadError(path.string() + ": features has " + std::to_string(feats.size()) +
                            " entries for " + std::to_string(n) + " gaussians");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (feats[i].size() != kFeatureDim) {
                throw LoadError(path.string() + ": record " + std::to_string(i) +
                                ": feature must have 16 entries");
            }
            for (int k = 0; k < kFeatureDim; ++k) {
                scene.gaussians[i].feature[k] = feats[i][k].get<double>();
            }
        }
    }
}

} // namespace

std::filesystem::path
identitySidecarPath(const std::filesystem::path &plyPath) {
    return std::filesystem::path(plyPath.string() + ".identity.json");
}

GaussianScene
loadScene(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open scene file " + path.string());
    }
    const std::string where = path.string();
    const Header header     = parseHeader(in, where);

    GaussianScene scene;
    for (const auto &c: header.comments) {
        Vec3 bg;
        if (parseBackground(c, bg)) {
            scene.background = bg;
        }
    }

    bool sawVertex = false;
    bool identityInPly = false;
    std::vector<char> buffer;
    for (const auto &element: header.elements) {
        buffer.resize(element.stride * element.count);
        if (!buffer.empty()) {
            in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
            const auto got = static_cast<std::size_t>(in.gcount());
            if (got != buffer.size()) {
                const std::size_t record = element.stride ? got / element.stride : 0;
                throw LoadError(where + ": record " + std::to_string(record) + " of element '" +
                                element.name + "': unexpected end of file");
            }
        }

        auto read = [&](std::size_t record, const Property &p) {
            const double v = readScalar(buffer.data() + record * element.stride + p.offset, p.type);
            if (!std::isfinite(v)) {
                throw LoadError(where + ": record " + std::to_string(record) +
                                ": non-finite value in property '" + p.name + "'");
            }
            return v;
        };
        auto require = [&](const std::string &name) -> const Property & {
            const Property *p = element.find(name);
            if (!p) {
                throw LoadError(where + ": element '" + element.name + "' lacks property '" + name + "'");
            }
            return *p;
        };

        if (element.name == "vertex") {
            sawVertex = true;
            const Property *pos[3]   = {&require("x"), &require("y"), &require("z")};
            const Property *dc[3]    = {&require("f_dc_0"), &require("f_dc_1"), &require("f_dc_2")};
            const Property &opacity  = require("opacity");
            const Property *scale[3] = {&require("scale_0"), &require("scale_1"), &require("scale_2")};
            const Property *rot[4]   = {&require("rot_0"), &require("rot_1"), &require("rot_2"),
                                        &require("rot_3")};

            std::vector<const Property *> rest;
            while (const Property *p = element.find("f_rest_" + std::to_string(rest.size()))) {
                rest.push_back(p);
            }
            if (rest.size() % 3 != 0) {
                throw LoadError(where + ": inconsistent property counts (" + std::to_string(rest.size()) +
                                " f_rest properties is not a multiple of 3)");
            }
            const int restPerChannel = static_cast<int>(rest.size() / 3);
            if (restPerChannel > kMaxShCoeffs - 1) {
                throw LoadError(where + ": inconsistent property counts (more SH coefficients than degree 3)");
            }
            // Partial bands are zero-padded up to the next full degree.
            int degree = 0;
            while (shCoeffCount(degree) - 1 < restPerChannel) {
                ++degree;
            }
            scene.shDegree = degree;

            const Property *objId = element.find("obj_id");
            std::vector<const Property *> feat;
            for (int k = 0; k < kFeatureDim; ++k) {
                if (const Property *p = element.find("feat_" + std::to_string(k))) {
                    feat.push_back(p);
                }
            }
            if (!feat.empty() && feat.size() != kFeatureDim) {
                throw LoadError(where + ": inconsistent property counts (identity feature needs 16 feat_* properties, found " +
                                std::to_string(feat.size()) + ")");
            }
            identityInPly = objId != nullptr || !feat.empty();

            scene.gaussians.resize(element.count);
            for (std::size_t i = 0; i < element.count; ++i) {
                Gaussian &g = scene.gaussians[i];
                for (int k = 0; k < 3; ++k) {
                    g.position[k] = read(i, *pos[k]);
                    g.logScale[k] = read(i, *scale[k]);
                    g.sh[0][k]    = read(i, *dc[k]);
                }
                for (int k = 0; k < 4; ++k) {
                    g.rotation[k] = read(i, *rot[k]);
                }
                g.opacityRaw = read(i, opacity);
                for (int c = 0; c < 3; ++c) {
                    for (int k = 0; k < restPerChannel; ++k) {
                        g.sh[k + 1][c] = read(i, *rest[c * restPerChannel + k]);
                    }
                }
                if (objId) {
                    const double v = read(i, *objId);
                    if (v < -1.0 || v > 65535.0 || v != std::floor(v)) {
                        throw LoadError(where + ": record " + std::to_string(i) + ": obj_id out of range");
                    }
                    if (v >= 0.0) {
                        g.objectId = static_cast<ObjectId>(v);
                    }
                }
                for (int k = 0; k < static_cast<int>(feat.size()); ++k) {
                    g.feature[k] = read(i, *feat[k]);
                }
                if (g.rotation.norm() == 0.0) {
                    throw LoadError(where + ": record " + std::to_string(i) + ": zero quaternion");
                }
            }
        } else if (element.name == "classifier") {
            Classifier cls;
            cls.weight.resize(static_cast<Eigen::Index>(element.count), kFeatureDim);
            cls.bias.resize(static_cast<Eigen::Index>(element.count));
            for (std::size_t q = 0; q < element.count; ++q) {
                for (int k = 0; k < kFeatureDim; ++k) {
                    cls.weight(static_cast<Eigen::Index>(q), k) = read(q, require("w_" + std::to_string(k)));
                }
                cls.bias[static_cast<Eigen::Index>(q)] = read(q, require("bias"));
            }
            scene.classifier = std::move(cls);
        }
    }
    if (!sawVertex) {
        throw LoadError(where + ": malformed header (no vertex element)");
    }
    if (!identityInPly) {
        loadSidecar(scene, identitySidecarPath(path));
    }
    return scene;
}

void
saveScene(const GaussianScene &scene, const std::filesystem::path &path, PlyPrecision precision) {
    const bool wide        = precision == PlyPrecision::Float64;
    const char *type       = wide ? "double" : "float";
    const bool withIdentity = scene.hasIdentity();
    const int restPerChannel = shCoeffCount(scene.shDegree) - 1;

    std::ostringstream hdr;
    hdr << "ply\nformat binary_little_endian 1.0\n";
    hdr << "comment splatedit background " << hexDouble(scene.background.x()) << ' '
        << hexDouble(scene.background.y()) << ' ' << hexDouble(scene.background.z()) << '\n';
    hdr << "element vertex " << scene.size() << '\n';
    for (const char *n: {"x", "y", "z"}) {
        hdr << "property " << type << ' ' << n << '\n';
    }
    for (int k = 0; k < 3; ++k) {
        hdr << "property " << type << " f_dc_" << k << '\n';
    }
    for (int k = 0; k < 3 * restPerChannel; ++k) {
        hdr << "property " << type << " f_rest_" << k << '\n';
    }
    hdr << "property " << type << " opacity\n";
    for (int k = 0; k < 3; ++k) {
        hdr << "property " << type << " scale_" << k << '\n';
    }
    for (int k = 0; k < 4; ++k) {
        hdr << "property " << type << " rot_" << k << '\n';
    }
    if (withIdentity) {
        hdr << "property int obj_id\n";
        for (int k = 0; k < kFeatureDim; ++k) {
            hdr << "property " << type << " feat_" << k << '\n';
        }
    }
    if (scene.classifier) {
        hdr << "element classifier " << scene.classifier->classes() << '\n';
        for (int k = 0; k < kFeatureDim; ++k) {
            hdr << "property double w_" << k << '\n';
        }
        hdr << "property double bias\n";
    }
    hdr << "end_header\n";

    std::string body;
    auto put = [&](double v) {
        if (wide) {
            body.append(reinterpret_cast<const char *>(&v), sizeof(v));
        } else {
            const float f = static_cast<float>(v);
            body.append(reinterpret_cast<const char *>(&f), sizeof(f));
        }
    };
    for (const auto &g: scene.gaussians) {
        for (int k = 0; k < 3; ++k) {
            put(g.position[k]);
        }
        for (int k = 0; k < 3; ++k) {
            put(g.sh[0][k]);
        }
        for (int c = 0; c < 3; ++c) {
            for (int k = 0; k < restPerChannel; ++k) {
                put(g.sh[k + 1][c]);
            }
        }
        put(g.opacityRaw);
        for (int k = 0; k < 3; ++k) {
            put(g.logScale[k]);
        }
        for (int k = 0; k < 4; ++k) {
            put(g.rotation[k]);
        }
        if (withIdentity) {
            const std::int32_t id = g.objectId ? static_cast<std::int32_t>(*g.objectId) : -1;
            body.append(reinterpret_cast<const char *>(&id), sizeof(id));
            for (const double f: g.feature) {
                put(f);
            }
        }
    }
    if (scene.classifier) {
        const auto &cls = *scene.classifier;
        for (int q = 0; q < cls.classes(); ++q) {
            for (int k = 0; k < kFeatureDim; ++k) {
                const double v = cls.weight(q, k);
                body.append(reinterpret_cast<const char *>(&v), sizeof(v));
            }
            const double b = cls.bias[q];
            body.append(reinterpret_cast<const char *>(&b), sizeof(b));
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write scene file " + path.string());
    }
    const std::string h = hdr.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) {
        throw IoError("failed writing scene file " + path.string());
    }
}

void
saveIdentitySidecar(const GaussianScene &scene, const std::filesystem::path &path) {
    nlohmann::json ids   = nlohmann::json::array();
    nlohmann::json feats = nlohmann::json::array();
    for (const auto &g: scene.gaussians) {
        ids.push_back(g.objectId ? nlohmann::json(*g.objectId) : nlohmann::json(nullptr));
        feats.push_back(g.feature);
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write identity sidecar " + path.string());
    }
    out << nlohmann::json{{"object_ids", ids}, {"features", feats}}.dump() << '\n';
}

} // namespace splatedit
