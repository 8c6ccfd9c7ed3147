// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// PSNR, SSIM (full, masked, and its gradient for D-SSIM training) and mask coverage.

#pragma once

#include <splatedit/image.hpp>

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace splatedit {

inline constexpr int kSsimWindow    = 11;
inline constexpr double kSsimSigma  = 1.5;
inline constexpr double kSsimK1     = 0.01;
inline constexpr double kSsimK2     = 0.03;

/// Peak 1. Returns +infinity for identical inputs. With a mask, only masked pixels count.
double psnr(const ImageF &a, const ImageF &b, const Mask *mask = nullptr);

/// Per-pixel SSIM averaged over channels (H x W). Gaussian window renormalised where it
/// leaves the image.
ImageF ssimMap(const ImageF &a, const ImageF &b);

/// Mean of the SSIM map, over masked pixels when a mask is given.
double ssim(const ImageF &a, const ImageF &b, const Mask *mask = nullptr);

/// (1 - SSIM) / 2.
double dssim(const ImageF &a, const ImageF &b);

/// d ssim(a, b) / d b, same shape as b.
ImageF ssimGradient(const ImageF &a, const ImageF &b);

/// Mean over masks of the set fraction, in percent.
double amcr(const std::vector<Mask> &masks);
double amcr(const std::vector<LabelMap> &masks);

struct ViewMetrics {
    std::string view;
    double psnr       = 0.0;
    double maskedPsnr = 0.0;
    double ssim       = 0.0;
    double maskedSsim = 0.0;
    double coverage   = 0.0; // percent of the image inside the mask
};

struct MetricReport {
    std::vector<ViewMetrics> views;
    ViewMetrics mean; // arithmetic means; coverage mean is the AMCR

    nlohmann::json toJson() const;
    std::string toCsv() const;
};

/// One entry per view. Views with empty masks report NaN masked metrics and are left out of the
/// masked means.
MetricReport evaluate(const std::vector<ImageF> &rendered, const std::vector<ImageF> &reference,
                      const std::vector<Mask> &masks, const std::vector<std::string> &names = {});

} // namespace splatedit
