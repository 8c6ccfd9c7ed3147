// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/error.hpp>
#include <splatedit/metrics.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace splatedit {

namespace {

constexpr int kHalf = kSsimWindow / 2;

std::array<double, kSsimWindow>
gaussianTaps() {
    std::array<double, kSsimWindow> g{};
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kHalf;
        g[i]           = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    }
    return g;
}

void
checkShapes(const ImageF &a, const ImageF &b, const Mask *mask, const char *what) {
    if (!a.sameShape(b) || a.empty()) {
        throw InvalidArgument(std::string(what) + ": images differ in shape or are empty");
    }
    if (mask && !mask->sameSize(a)) {
        throw InvalidArgument(std::string(what) + ": mask size does not match the images");
    }
}

// Separable windowed mean of a single-channel W x H plane; taps outside the image are dropped
// and the rest renormalised.
class Window {
  public:
    Window(int w, int h) : mW(w), mH(h), mTaps(gaussianTaps()), mNormX(w), mNormY(h) {
        for (int x = 0; x < w; ++x) {
            mNormX[x] = 0.0;
            for (int k = -kHalf; k <= kHalf; ++k) {
                if (x + k >= 0 && x + k < w) {
                    mNormX[x] += mTaps[k + kHalf];
                }
            }
        }
        for (int y = 0; y < h; ++y) {
            mNormY[y] = 0.0;
            for (int k = -kHalf; k <= kHalf; ++k) {
                if (y + k >= 0 && y + k < h) {
                    mNormY[y] += mTaps[k + kHalf];
                }
            }
        }
    }

    std::vector<double>
    mean(const std::vector<double> &in) const {
        auto out = blur(in);
        for (int y = 0; y < mH; ++y) {
            for (int x = 0; x < mW; ++x) {
                out[y * mW + x] /= mNormX[x] * mNormY[y];
            }
        }
        return out;
    }

    // Adjoint of mean().
    std::vector<double>
    meanTranspose(std::vector<double> in) const {
        for (int y = 0; y < mH; ++y) {
            for (int x = 0; x < mW; ++x) {
                in[y * mW + x] /= mNormX[x] * mNormY[y];
            }
        }
        return blur(in);
    }

  private:
    std::vector<double>
    blur(const std::vector<double> &in) const {
        std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
        for (int y = 0; y < mH; ++y) {
            for (int x = 0; x < mW; ++x) {
                double s = 0.0;
                for (int k = std::max(-kHalf, -x); k <= std::min(kHalf, mW - 1 - x); ++k) {
                    s += mTaps[k + kHalf] * in[y * mW + x + k];
                }
                tmp[y * mW + x] = s;
            }
        }
        for (int y = 0; y < mH; ++y) {
            for (int x = 0; x < mW; ++x) {
                double s = 0.0;
                for (int k = std::max(-kHalf, -y); k <= std::min(kHalf, mH - 1 - y); ++k) {
                    s += mTaps[k + kHalf] * tmp[(y + k) * mW + x];
                }
                out[y * mW + x] = s;
            }
        }
        return out;
    }

    int mW, mH;
    std::array<double, kSsimWindow> mTaps;
    std::vector<double> mNormX, mNormY;
};

struct SsimPlanes {
    std::vector<double> s;                // SSIM per pixel
    std::vector<double> dMuB, dSbb, dSab; // partials w.r.t. the windowed statistics of b
};

SsimPlanes
ssimChannel(const Window &win, const ImageF &a, const ImageF &b, int c, bool partials) {
    const std::size_t n = a.pixelCount();
    const int ch        = a.channels();
    std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
    for (std::size_t p = 0; p < n; ++p) {
        pa[p] = a.data()[p * ch + c];
        pb[p] = b.data()[p * ch + c];
        aa[p] = pa[p] * pa[p];
        bb[p] = pb[p] * pb[p];
        ab[p] = pa[p] * pb[p];
    }
    const auto muA = win.mean(pa), muB = win.mean(pb);
    const auto sAA = win.mean(aa), sBB = win.mean(bb), sAB = win.mean(ab);
    constexpr double C1 = kSsimK1 * kSsimK1, C2 = kSsimK2 * kSsimK2;

    SsimPlanes out;
    out.s.resize(n);
    if (partials) {
        out.dMuB.resize(n);
        out.dSbb.resize(n);
        out.dSab.resize(n);
    }
    for (std::size_t p = 0; p < n; ++p) {
        const double ma = muA[p], mb = muB[p];
        const double n1 = 2.0 * ma * mb + C1;
        const double n2 = 2.0 * (sAB[p] - ma * mb) + C2;
        const double d1 = ma * ma + mb * mb + C1;
        const double d2 = (sAA[p] - ma * ma) + (sBB[p] - mb * mb) + C2;
        const double s  = n1 * n2 / (d1 * d2);
        out.s[p]        = s;
        if (partials) {
            out.dMuB[p] = (2.0 * ma * n2 - 2.0 * ma * n1) / (d1 * d2) - s * (2.0 * mb / d1 - 2.0 * mb / d2);
            out.dSbb[p] = -s / d2;
            out.dSab[p] = 2.0 * n1 / (d1 * d2);
        }
    }
    return out;
}

} // namespace

double
psnr(const ImageF &a, const ImageF &b, const Mask *mask) {
    checkShapes(a, b, mask, "psnr");
    const int ch  = a.channels();
    double sum    = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < a.pixelCount(); ++p) {
        if (mask && !mask->data()[p]) {
            continue;
        }
        for (int c = 0; c < ch; ++c) {
            const double d = a.data()[p * ch + c] - b.data()[p * ch + c];
            sum += d * d;
        }
        n += ch;
    }
    if (n == 0) {
        throw InvalidArgument("psnr: empty mask");
    }
    const double mse = sum / static_cast<double>(n);
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return -10.0 * std::log10(mse);
}

ImageF
ssimMap(const ImageF &a, const ImageF &b) {
    checkShapes(a, b, nullptr, "ssim");
    const Window win(a.width(), a.height());
    ImageF map(a.width(), a.height(), 1);
    for (int c = 0; c < a.channels(); ++c) {
        const auto planes = ssimChannel(win, a, b, c, false);
        for (std::size_t p = 0; p < map.pixelCount(); ++p) {
            map.data()[p] += planes.s[p] / a.channels();
        }
    }
    return map;
}

double
ssim(const ImageF &a, const ImageF &b, const Mask *mask) {
    checkShapes(a, b, mask, "ssim");
    const ImageF map = ssimMap(a, b);
    double sum       = 0.0;
    std::size_t n    = 0;
    for (std::size_t p = 0; p < map.pixelCount(); ++p) {
        if (!mask || mask->data()[p]) {
            sum += map.data()[p];
            ++n;
        }
    }
    if (n == 0) {
        throw InvalidArgument("ssim: empty mask");
    }
    return sum / static_cast<double>(n);
}

double
dssim(const ImageF &a, const ImageF &b) {
    return 0.5 * (1.0 - ssim(a, b));
}

ImageF
ssimGradient(const ImageF &a, const ImageF &b) {
    checkShapes(a, b, nullptr, "ssim");
    const Window win(a.width(), a.height());
    const std::size_t n = a.pixelCount();
    const int ch        = a.channels();
    const double scale  = 1.0 / static_cast<double>(n * ch);
    ImageF grad(a.width(), a.height(), ch);
    for (int c = 0; c < ch; ++c) {
        auto planes     = ssimChannel(win, a, b, c, true);
        const auto gMu  = win.meanTranspose(std::move(planes.dMuB));
        const auto gSbb = win.meanTranspose(std::move(planes.dSbb));
        const auto gSab = win.meanTranspose(std::move(planes.dSab));
        for (std::size_t p = 0; p < n; ++p) {
            const double av = a.data()[p * ch + c], bv = b.data()[p * ch + c];
            grad.data()[p * ch + c] = scale * (gMu[p] + 2.0 * bv * gSbb[p] + av * gSab[p]);
        }
    }
    return grad;
}

double
amcr(const std::vector<Mask> &masks) {
    if (masks.empty()) {
        throw InvalidArgument("amcr: no masks");
    }
    double sum = 0.0;
    for (const auto &m: masks) {
        sum += static_cast<double>(maskArea(m)) / static_cast<double>(m.pixelCount());
    }
    return 100.0 * sum / static_cast<double>(masks.size());
}

double
amcr(const std::vector<LabelMap> &masks) {
    std::vector<Mask> bin;
    for (const auto &l: masks) {
        Mask m(l.width(), l.height(), 1);
        for (std::size_t p = 0; p < l.pixelCount(); ++p) {
            m.data()[p] = l.data()[p] != 0;
        }
        bin.push_back(std::move(m));
    }
    return amcr(bin);
}

MetricReport
evaluate(const std::vector<ImageF> &rendered, const std::vector<ImageF> &reference, const std::vector<Mask> &masks,
         const std::vector<std::string> &names) {
    if (rendered.size() != reference.size() || rendered.size() != masks.size() || rendered.empty() ||
        (!names.empty() && names.size() != rendered.size())) {
        throw InvalidArgument("metrics: need the same non-zero number of renders, references and masks");
    }
    MetricReport report;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double sums[5]   = {0, 0, 0, 0, 0};
    std::size_t masked = 0;
    for (std::size_t v = 0; v < rendered.size(); ++v) {
        ViewMetrics m;
        m.view = names.empty() ? std::to_string(v) : names[v];
        m.psnr = psnr(rendered[v], reference[v]);
        m.ssim = ssim(rendered[v], reference[v]);
        m.coverage = amcr(std::vector<Mask>{masks[v]});
        if (maskArea(masks[v]) > 0) {
            m.maskedPsnr = psnr(rendered[v], reference[v], &masks[v]);
            m.maskedSsim = ssim(rendered[v], reference[v], &masks[v]);
            sums[1] += m.maskedPsnr;
            sums[3] += m.maskedSsim;
            ++masked;
        } else {
            m.maskedPsnr = nan;
            m.maskedSsim = nan;
        }
        sums[0] += m.psnr;
        sums[2] += m.ssim;
        sums[4] += m.coverage;
        report.views.push_back(m);
    }
    const double nv      = static_cast<double>(rendered.size());
    report.mean.view     = "mean";
    report.mean.psnr     = sums[0] / nv;
    report.mean.ssim     = sums[2] / nv;
    report.mean.coverage = sums[4] / nv;
    report.mean.maskedPsnr = masked ? sums[1] / static_cast<double>(masked) : nan;
    report.mean.maskedSsim = masked ? sums[3] / static_cast<double>(masked) : nan;
    return report;
}

namespace {

nlohmann::json
number(double v) {
    if (std::isnan(v)) {
        return nullptr;
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    return v;
}

std::string
csvNumber(double v) {
    if (std::isnan(v)) {
        return "";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::json
viewJson(const ViewMetrics &m) {
    return {{"view", m.view},         {"psnr", number(m.psnr)},
            {"masked_psnr", number(m.maskedPsnr)}, {"ssim", number(m.ssim)},
            {"masked_ssim", number(m.maskedSsim)}, {"coverage", number(m.coverage)}};
}

} // namespace

nlohmann::json
MetricReport::toJson() const {
    nlohmann::json views = nlohmann::json::array();
    for (const auto &v: this->views) {
        views.push_back(viewJson(v));
    }
    auto m = viewJson(mean);
    m.erase("view");
    m.erase("coverage");
    m["amcr"] = number(mean.coverage);
    return {{"views", views}, {"mean", m}};
}

std::string
MetricReport::toCsv() const {
    std::ostringstream out;
    out << "view,psnr,masked_psnr,ssim,masked_ssim,coverage\n";
    auto row = [&](const ViewMetrics &m) {
        out << m.view << ',' << csvNumber(m.psnr) << ',' << csvNumber(m.maskedPsnr) << ',' << csvNumber(m.ssim)
            << ',' << csvNumber(m.maskedSsim) << ',' << csvNumber(m.coverage) << '\n';
    };
    for (const auto &v: views) {
        row(v);
    }
    row(mean);
    return out.str();
}

} // namespace splatedit
