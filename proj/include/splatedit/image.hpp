// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace splatedit {

/// Dense row-major image with interleaved channels.
template <typename T> class Image {
  public:
    using value_type = T;

    Image() = default;
    Image(int width, int height, int channels = 1, T fill = T{})
        : mWidth(width), mHeight(height), mChannels(channels),
          mData(static_cast<std::size_t>(width) * height * channels, fill) {}

    int
    width() const noexcept {
        return mWidth;
    }
    int
    height() const noexcept {
        return mHeight;
    }
    int
    channels() const noexcept {
        return mChannels;
    }
    std::size_t
    pixelCount() const noexcept {
        return static_cast<std::size_t>(mWidth) * mHeight;
    }
    bool
    empty() const noexcept {
        return mData.empty();
    }
    bool
    contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < mWidth && y < mHeight;
    }
    bool
    sameShape(const Image &other) const noexcept {
        return mWidth == other.mWidth && mHeight == other.mHeight && mChannels == other.mChannels;
    }
    template <typename U>
    bool
    sameSize(const Image<U> &other) const noexcept {
        return mWidth == other.width() && mHeight == other.height();
    }

    T &
    at(int x, int y, int c = 0) {
        assert(contains(x, y) && c < mChannels);
        return mData[(static_cast<std::size_t>(y) * mWidth + x) * mChannels + c];
    }
    const T &
    at(int x, int y, int c = 0) const {
        assert(contains(x, y) && c < mChannels);
        return mData[(static_cast<std::size_t>(y) * mWidth + x) * mChannels + c];
    }

    std::span<T>
    pixel(int x, int y) {
        return {&at(x, y), static_cast<std::size_t>(mChannels)};
    }
    std::span<const T>
    pixel(int x, int y) const {
        return {&at(x, y), static_cast<std::size_t>(mChannels)};
    }

    std::vector<T> &
    data() noexcept {
        return mData;
    }
    const std::vector<T> &
    data() const noexcept {
        return mData;
    }

    bool operator==(const Image &) const = default;

  private:
    int mWidth    = 0;
    int mHeight   = 0;
    int mChannels = 0;
    std::vector<T> mData;
};

using ImageF = Image<double>;

/// Single-channel integer label image. 0 is reserved for unlabeled/background.
using LabelMap = Image<std::uint16_t>;

/// Binary mask, 0 or 1 per pixel.
using Mask = Image<std::uint8_t>;

inline std::size_t
maskArea(const Mask &mask) {
    std::size_t n = 0;
    for (const auto v: mask.data()) {
        n += v != 0;
    }
    return n;
}

} // namespace splatedit
