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
#ifndef FISHEYE_GEOMETRY_H_
#define FISHEYE_GEOMETRY_H_

#include <array>
#include <optional>

namespace fisheye {

// Axis-aligned box in corner form, absolute pixels, continuous coordinates
// (COCO convention: a box covering pixel columns 0..9 is x1=0, x2=10).
// This is the only representation used inside the library; the other
// conventions exist at file boundaries only.
struct BoundingBox {
  double x1 = 0;
  double y1 = 0;
  double x2 = 0;
  double y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const {
    return (x2 > x1 && y2 > y1) ? (x2 - x1) * (y2 - y1) : 0.0;
  }
  bool degenerate() const { return !(x2 > x1 && y2 > y1); }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct ImageDims {
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

// Throws kInvalidArgument unless both sides are strictly positive.
ImageDims MakeImageDims(int width, int height);

enum class BoxConvention {
  kCornerAbs,   // x1, y1, x2, y2 in pixels
  kCornerNorm,  // x1, y1, x2, y2 as fractions of width/height
  kCenterNorm,  // cx, cy, w, h as fractions (YOLO)
  kXywhAbs,     // x, y, w, h in pixels (COCO)
};

// Raw four-tuple in some convention.
using BoxCoords = std::array<double, 4>;

// Intersection over union. Degenerate or disjoint boxes give 0.
double Iou(const BoundingBox& a, const BoundingBox& b);

// Intersection area over the area of `a` (COCO crowd matching).
double IntersectionOverFirst(const BoundingBox& a, const BoundingBox& b);

// Multiplies every coordinate by `factor`; factor must be > 0.
BoundingBox ScaleBox(const BoundingBox& box, double factor);

// Converts a raw tuple between conventions. `dims` is required whenever a
// normalized convention is involved on either side. Normalized input outside
// [0, 1] is rejected with kDomain.
BoxCoords ConvertBox(const BoxCoords& coords, BoxConvention from,
                     BoxConvention to,
                     std::optional<ImageDims> dims = std::nullopt);

// Canonicalizing shorthands over ConvertBox.
BoundingBox ToCanonical(const BoxCoords& coords, BoxConvention from,
                        std::optional<ImageDims> dims = std::nullopt);
BoxCoords FromCanonical(const BoundingBox& box, BoxConvention to,
                        std::optional<ImageDims> dims = std::nullopt);

// Clamps into [0, width] x [0, height]. May produce a zero-area box.
BoundingBox ClipBox(const BoundingBox& box, ImageDims dims);

}  // namespace fisheye

#endif  // FISHEYE_GEOMETRY_H_
