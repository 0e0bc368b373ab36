// Copyright 2026 The Fisheye Detection Toolkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "fisheye/geometry.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fisheye/error.h"

namespace fisheye {

namespace {

bool IsNormalized(BoxConvention c) {
  return c == BoxConvention::kCornerNorm || c == BoxConvention::kCenterNorm;
}

ImageDims RequireDims(const std::optional<ImageDims>& dims) {
  if (!dims) {
    Fail(ErrorKind::kInvalidArgument,
         "image dimensions are required for normalized box conventions");
  }
  if (dims->width <= 0 || dims->height <= 0) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("image dimensions must be positive, got {}x{}",
                     dims->width, dims->height));
  }
  return *dims;
}

}  // namespace

ImageDims MakeImageDims(int width, int height) {
  if (width <= 0 || height <= 0) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("image dimensions must be positive, got {}x{}", width,
                     height));
  }
  return ImageDims{width, height};
}

double Iou(const BoundingBox& a, const BoundingBox& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (area_a <= 0 || area_b <= 0) return 0.0;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

double IntersectionOverFirst(const BoundingBox& a, const BoundingBox& b) {
  const double area_a = a.area();
  if (area_a <= 0) return 0.0;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  return iw * ih / area_a;
}

BoundingBox ScaleBox(const BoundingBox& box, double factor) {
  if (!(factor > 0) || !std::isfinite(factor)) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("scale factor must be a positive finite number, got {}",
                     factor));
  }
  return {box.x1 * factor, box.y1 * factor, box.x2 * factor, box.y2 * factor};
}

BoundingBox ToCanonical(const BoxCoords& c, BoxConvention from,
                        std::optional<ImageDims> dims) {
  for (double v : c) {
    if (!std::isfinite(v)) {
      Fail(ErrorKind::kDomain, "box coordinate is not a finite number");
    }
  }
  if (IsNormalized(from)) {
    for (double v : c) {
      if (v < 0.0 || v > 1.0) {
        Fail(ErrorKind::kDomain,
             fmt::format("normalized coordinate {} outside [0, 1]", v));
      }
    }
  }
  BoundingBox box;
  switch (from) {
    case BoxConvention::kCornerAbs:
      box = {c[0], c[1], c[2], c[3]};
      break;
    case BoxConvention::kXywhAbs:
      box = {c[0], c[1], c[0] + c[2], c[1] + c[3]};
      break;
    case BoxConvention::kCornerNorm: {
      const ImageDims d = RequireDims(dims);
      box = {c[0] * d.width, c[1] * d.height, c[2] * d.width,
             c[3] * d.height};
      break;
    }
    case BoxConvention::kCenterNorm: {
      const ImageDims d = RequireDims(dims);
      const double cx = c[0] * d.width;
      const double cy = c[1] * d.height;
      const double hw = c[2] * d.width / 2;
      const double hh = c[3] * d.height / 2;
      box = {cx - hw, cy - hh, cx + hw, cy + hh};
      break;
    }
  }
  if (box.x1 > box.x2 || box.y1 > box.y2) {
    Fail(ErrorKind::kDomain,
         fmt::format("box ({}, {}, {}, {}) has negative extent", box.x1,
                     box.y1, box.x2, box.y2));
  }
  return box;
}

BoxCoords FromCanonical(const BoundingBox& b, BoxConvention to,
                        std::optional<ImageDims> dims) {
  switch (to) {
    case BoxConvention::kCornerAbs:
      return {b.x1, b.y1, b.x2, b.y2};
    case BoxConvention::kXywhAbs:
      return {b.x1, b.y1, b.x2 - b.x1, b.y2 - b.y1};
    case BoxConvention::kCornerNorm: {
      const ImageDims d = RequireDims(dims);
      return {b.x1 / d.width, b.y1 / d.height, b.x2 / d.width,
              b.y2 / d.height};
    }
    case BoxConvention::kCenterNorm: {
      const ImageDims d = RequireDims(dims);
      return {(b.x1 + b.x2) / 2 / d.width, (b.y1 + b.y2) / 2 / d.height,
              (b.x2 - b.x1) / d.width, (b.y2 - b.y1) / d.height};
    }
  }
  return {};
}

BoxCoords ConvertBox(const BoxCoords& coords, BoxConvention from,
                     BoxConvention to, std::optional<ImageDims> dims) {
  if (from == to) {
    // Still validates the input.
    ToCanonical(coords, from, dims);
    return coords;
  }
  return FromCanonical(ToCanonical(coords, from, dims), to, dims);
}

BoundingBox ClipBox(const BoundingBox& box, ImageDims dims) {
  const double w = dims.width;
  const double h = dims.height;
  return {std::clamp(box.x1, 0.0, w), std::clamp(box.y1, 0.0, h),
          std::clamp(box.x2, 0.0, w), std::clamp(box.y2, 0.0, h)};
}

}  // namespace fisheye
