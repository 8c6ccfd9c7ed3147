// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace splatedit {

/// Adam with bias correction over a flat parameter vector.
class Adam {
  public:
    Adam(std::size_t size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : mLr(lr), mBeta1(beta1), mBeta2(beta2), mEps(eps), mM(size, 0.0), mV(size, 0.0) {}

    void
    step(std::span<double> params, std::span<const double> grads) {
        if (params.size() != mM.size() || grads.size() != mM.size()) {
            throw std::invalid_argument("Adam: parameter count mismatch");
        }
        ++mT;
        const double c1 = 1.0 - std::pow(mBeta1, mT);
        const double c2 = 1.0 - std::pow(mBeta2, mT);
        for (std::size_t i = 0; i < params.size(); ++i) {
            mM[i] = mBeta1 * mM[i] + (1.0 - mBeta1) * grads[i];
            mV[i] = mBeta2 * mV[i] + (1.0 - mBeta2) * grads[i] * grads[i];
            params[i] -= mLr * (mM[i] / c1) / (std::sqrt(mV[i] / c2) + mEps);
        }
    }

    std::size_t
    size() const noexcept {
        return mM.size();
    }

  private:
    double mLr, mBeta1, mBeta2, mEps;
    int mT = 0;
    std::vector<double> mM, mV;
};

} // namespace splatedit
