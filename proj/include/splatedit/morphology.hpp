// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// Binary morphology with disc structuring elements.

#pragma once

#include <splatedit/image.hpp>

namespace splatedit {

Mask dilate(const Mask &mask, int radius);
Mask erode(const Mask &mask, int radius);
/// Dilation followed by erosion. Pixels outside the image count as unset for the dilation and as
/// set for the erosion, so closing never shrinks a mask.
Mask close(const Mask &mask, int radius);

} // namespace splatedit
