// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/error.hpp>
#include <splatedit/image_io.hpp>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string_view>

namespace splatedit {

namespace {

int
colorTypeFor(int channels) {
    switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
    default: throw InvalidArgument("PNG supports 1 to 4 channels, got " + std::to_string(channels));
    }
}

std::uint8_t
toByte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct ReadCursor {
    std::string_view bytes;
    std::size_t offset = 0;
};

void
readFromCursor(png_structp png, png_bytep out, png_size_t length) {
    auto *cur = static_cast<ReadCursor *>(png_get_io_ptr(png));
    if (cur->offset + length > cur->bytes.size()) {
        png_error(png, "truncated PNG");
    }
    std::memcpy(out, cur->bytes.data() + cur->offset, length);
    cur->offset += length;
}

void
appendToString(png_structp png, png_bytep data, png_size_t length) {
    static_cast<std::string *>(png_get_io_ptr(png))->append(reinterpret_cast<const char *>(data), length);
}

void
flushNothing(png_structp) {}

} // namespace

PngData
readPng(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open PNG " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decodePng(bytes, path.string());
}

PngData
decodePng(std::string_view bytes, const std::string &name) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
        throw LoadError("malformed PNG " + name);
    }
    ReadCursor cursor{bytes};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info  = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialisation failed");
    }
    PngData out;
    std::vector<png_bytep> rows;
    std::vector<png_byte> raw;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw LoadError("malformed PNG " + name);
    }
    png_set_read_fn(png, &cursor, readFromCursor);
    png_read_info(png, info);
    const int colorType = png_get_color_type(png, info);
    int bitDepth        = png_get_bit_depth(png, info);
    if (colorType == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (colorType == PNG_COLOR_TYPE_GRAY && bitDepth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (bitDepth == 16) {
        png_set_swap(png); // big-endian on disk -> host order
    }
    png_read_update_info(png, info);
    out.width    = static_cast<int>(png_get_image_width(png, info));
    out.height   = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    bitDepth     = png_get_bit_depth(png, info);
    out.bitDepth = bitDepth;

    const std::size_t rowBytes = png_get_rowbytes(png, info);
    raw.resize(rowBytes * out.height);
    rows.resize(out.height);
    for (int y = 0; y < out.height; ++y) {
        rows[y] = raw.data() + rowBytes * y;
    }
    png_read_image(png, rows.data());
    png_read_end(png, info);

    png_textp text = nullptr;
    int numText    = 0;
    png_get_text(png, info, &text, &numText);
    for (int i = 0; i < numText; ++i) {
        out.text[text[i].key] = std::string(text[i].text, text[i].text_length);
    }
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
    out.samples.resize(n);
    if (bitDepth == 16) {
        for (int y = 0; y < out.height; ++y) {
            std::memcpy(out.samples.data() + static_cast<std::size_t>(y) * out.width * out.channels,
                        rows[y], static_cast<std::size_t>(out.width) * out.channels * 2);
        }
    } else {
        for (int y = 0; y < out.height; ++y) {
            for (int i = 0; i < out.width * out.channels; ++i) {
                out.samples[static_cast<std::size_t>(y) * out.width * out.channels + i] = rows[y][i];
            }
        }
    }
    return out;
}

void
writePng(const std::filesystem::path &path, const PngData &data) {
    const std::string bytes = encodePng(data);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        throw IoError("cannot write PNG " + path.string());
    }
}

std::string
encodePng(const PngData &data) {
    if (data.bitDepth != 8 && data.bitDepth != 16) {
        throw InvalidArgument("PNG bit depth must be 8 or 16");
    }
    if (data.samples.size() != static_cast<std::size_t>(data.width) * data.height * data.channels) {
        throw InvalidArgument("PNG sample count does not match its shape");
    }
    const int colorType = colorTypeFor(data.channels);
    std::string encoded;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info  = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialisation failed");
    }
    const int bytes            = data.bitDepth / 8;
    const std::size_t rowBytes = static_cast<std::size_t>(data.width) * data.channels * bytes;
    std::vector<png_byte> raw(rowBytes * data.height);
    std::vector<png_bytep> rows(data.height);
    for (int y = 0; y < data.height; ++y) {
        rows[y] = raw.data() + rowBytes * y;
        for (int i = 0; i < data.width * data.channels; ++i) {
            const std::uint16_t v = data.samples[static_cast<std::size_t>(y) * data.width * data.channels + i];
            if (bytes == 1) {
                rows[y][i] = static_cast<png_byte>(v);
            } else {
                rows[y][2 * i]     = static_cast<png_byte>(v >> 8);
                rows[y][2 * i + 1] = static_cast<png_byte>(v & 0xff);
            }
        }
    }
    std::vector<png_text> texts;
    for (const auto &[k, v]: data.text) {
        png_text t{};
        t.compression = PNG_TEXT_COMPRESSION_NONE;
        t.key         = const_cast<char *>(k.c_str());
        t.text        = const_cast<char *>(v.c_str());
        t.text_length = v.size();
        texts.push_back(t);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed encoding PNG");
    }
    png_set_write_fn(png, &encoded, appendToString, flushNothing);
    png_set_IHDR(png, info, data.width, data.height, data.bitDepth, colorType, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (!texts.empty()) {
        png_set_text(png, info, texts.data(), static_cast<int>(texts.size()));
    }
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return encoded;
}

PngData
colorToPng(const ImageF &rgb) {
    if (rgb.channels() != 3) {
        throw InvalidArgument("colour image must have 3 channels");
    }
    PngData png{rgb.width(), rgb.height(), 3, 8, {}, {}};
    png.samples.reserve(rgb.data().size());
    for (const double v: rgb.data()) {
        png.samples.push_back(toByte(v));
    }
    return png;
}

void
writeColorPng(const std::filesystem::path &path, const ImageF &rgb) {
    writePng(path, colorToPng(rgb));
}

ImageF
readColorPng(const std::filesystem::path &path) {
    const PngData png = readPng(path);
    if (png.channels < 3) {
        throw LoadError(path.string() + ": expected an RGB PNG");
    }
    const double peak = png.bitDepth == 16 ? 65535.0 : 255.0;
    ImageF out(png.width, png.height, 3);
    for (int y = 0; y < png.height; ++y) {
        for (int x = 0; x < png.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) =
                    png.samples[(static_cast<std::size_t>(y) * png.width + x) * png.channels + c] / peak;
            }
        }
    }
    return out;
}

PngData
labelsToPng(const LabelMap &labels, bool force16) {
    const auto maxLabel =
        labels.data().empty() ? 0 : *std::max_element(labels.data().begin(), labels.data().end());
    PngData png{labels.width(), labels.height(), 1, (force16 || maxLabel > 255) ? 16 : 8,
                labels.data(), {}};
    return png;
}

void
writeLabelPng(const std::filesystem::path &path, const LabelMap &labels, bool force16) {
    writePng(path, labelsToPng(labels, force16));
}

LabelMap
readLabelPng(const std::filesystem::path &path) {
    PngData png = readPng(path);
    if (png.channels != 1) {
        throw LoadError(path.string() + ": label maps must be single-channel PNGs");
    }
    LabelMap out(png.width, png.height, 1);
    out.data() = std::move(png.samples);
    return out;
}

void
writeMaskPng(const std::filesystem::path &path, const Mask &mask) {
    PngData png{mask.width(), mask.height(), 1, 8, {}, {}};
    png.samples.reserve(mask.pixelCount());
    for (const auto v: mask.data()) {
        png.samples.push_back(v ? 255 : 0);
    }
    writePng(path, png);
}

Mask
readMaskPng(const std::filesystem::path &path) {
    const PngData png = readPng(path);
    Mask out(png.width, png.height, 1);
    for (std::size_t i = 0; i < out.pixelCount(); ++i) {
        out.data()[i] = png.samples[i * png.channels] != 0;
    }
    return out;
}

PngData
depthToPng(const ImageF &depth, double scale) {
    if (depth.channels() != 1) {
        throw InvalidArgument("depth image must have 1 channel");
    }
    PngData png{depth.width(), depth.height(), 1, 16, {}, {}};
    png.samples.reserve(depth.pixelCount());
    for (const double d: depth.data()) {
        png.samples.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(d * scale, 0.0, 65535.0))));
    }
    std::ostringstream s;
    s.precision(17);
    s << scale;
    png.text["depth_scale"] = s.str();
    return png;
}

void
writeDepthPng(const std::filesystem::path &path, const ImageF &depth, double scale) {
    writePng(path, depthToPng(depth, scale));
}

ImageF
readDepthPng(const std::filesystem::path &path) {
    const PngData png = readPng(path);
    if (png.channels != 1 || png.bitDepth != 16) {
        throw LoadError(path.string() + ": depth maps must be 16-bit single-channel PNGs");
    }
    double scale = kDefaultDepthScale;
    if (const auto it = png.text.find("depth_scale"); it != png.text.end()) {
        scale = std::stod(it->second);
    }
    ImageF out(png.width, png.height, 1);
    for (std::size_t i = 0; i < out.pixelCount(); ++i) {
        out.data()[i] = png.samples[i] / scale;
    }
    return out;
}

void
writeNpy(const std::filesystem::path &path, const ImageF &image) {
    std::ostringstream shape;
    shape << "(" << image.height() << ", " << image.width();
    if (image.channels() != 1) {
        shape << ", " << image.channels();
    }
    shape << ")";
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape.str() + ", }";
    const std::size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header.push_back('\n');

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write("\x93NUMPY\x01\x00", 8);
    const auto len = static_cast<std::uint16_t>(header.size());
    out.write(reinterpret_cast<const char *>(&len), 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const double v: image.data()) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char *>(&f), sizeof(f));
    }
}

ImageF
readNpy(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    char magic[8];
    std::uint16_t len = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char *>(&len), 2);
    if (!in || std::memcmp(magic, "\x93NUMPY\x01\x00", 8) != 0) {
        throw LoadError(path.string() + ": not a version 1.0 .npy file");
    }
    std::string header(len, '\0');
    in.read(header.data(), len);
    if (header.find("'<f4'") == std::string::npos || header.find("False") == std::string::npos) {
        throw LoadError(path.string() + ": only little-endian float32 C-order arrays are supported");
    }
    const auto open  = header.find('(');
    const auto close = header.find(')');
    std::vector<int> dims;
    std::istringstream ds(header.substr(open + 1, close - open - 1));
    std::string tok;
    while (std::getline(ds, tok, ',')) {
        if (tok.find_first_not_of(' ') != std::string::npos) {
            dims.push_back(std::stoi(tok));
        }
    }
    if (dims.size() != 2 && dims.size() != 3) {
        throw LoadError(path.string() + ": expected a 2-D or 3-D array");
    }
    ImageF img(dims[1], dims[0], dims.size() == 3 ? dims[2] : 1);
    for (auto &v: img.data()) {
        float f = 0;
        in.read(reinterpret_cast<char *>(&f), sizeof(f));
        v = f;
    }
    if (!in) {
        throw LoadError(path.string() + ": truncated array data");
    }
    return img;
}

} // namespace splatedit
