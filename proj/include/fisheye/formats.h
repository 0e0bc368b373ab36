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
#ifndef FISHEYE_FORMATS_H_
#define FISHEYE_FORMATS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fisheye/geometry.h"

namespace fisheye {

// Objects below 64x64 pixels are "small" in FishEye8K terms.
inline constexpr double kSmallObjectArea = 64.0 * 64.0;

struct ClassEntry {
  int id = 0;
  std::string name;

  friend bool operator==(const ClassEntry&, const ClassEntry&) = default;
};

// Ordered class list with unique ids.
class ClassSchema {
 public:
  // Bus, Bike, Car, Pedestrian, Truck with ids 0..4 (FishEye8K order).
  static ClassSchema Default();

  explicit ClassSchema(std::vector<ClassEntry> classes);

  const std::vector<ClassEntry>& classes() const { return classes_; }
  size_t size() const { return classes_.size(); }
  bool Contains(int id) const { return index_.contains(id); }
  // Position of `id` in the ordered list; throws kReferential if absent.
  size_t IndexOf(int id) const;
  const std::string& NameOf(int id) const { return classes_[IndexOf(id)].name; }
  std::optional<int> IdForName(std::string_view name) const;

  friend bool operator==(const ClassSchema& a, const ClassSchema& b) {
    return a.classes_ == b.classes_;
  }

 private:
  std::vector<ClassEntry> classes_;
  std::unordered_map<int, size_t> index_;
};

// Reads {"classes": [{"id":..,"name":..}, ...]} or a COCO file's
// "categories" collection.
ClassSchema LoadClassSchema(const std::filesystem::path& path);

struct ImageInfo {
  std::string image_id;
  std::string file_name;
  ImageDims dims;
};

// Image id -> dimensions, insertion ordered. Ids are opaque text and are
// matched exactly.
class ImageTable {
 public:
  void Add(ImageInfo info);
  const ImageInfo* Find(std::string_view image_id) const;
  // Resolves a file stem: first as an image id, then as the stem of a
  // registered file name. Exact matches only.
  const ImageInfo* FindByStem(std::string_view stem) const;
  ImageDims DimsOf(std::string_view image_id) const;

  const std::vector<ImageInfo>& images() const { return images_; }
  size_t size() const { return images_.size(); }
  bool empty() const { return images_.empty(); }

 private:
  std::vector<ImageInfo> images_;
  std::unordered_map<std::string, size_t> by_id_;
  std::unordered_map<std::string, size_t> by_stem_;
};

struct Annotation {
  std::int64_t id = 0;
  std::string image_id;
  int class_id = 0;
  BoundingBox box;
  double area = 0;
  bool crowd = false;

  bool small() const { return area < kSmallObjectArea; }
};

struct Detection {
  std::string image_id;
  int class_id = 0;
  BoundingBox box;
  double score = 0;
  std::string model_tag;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruth {
  ClassSchema schema = ClassSchema::Default();
  std::vector<Annotation> annotations;
  ImageTable images;
};

// COCO layout: images / annotations / categories, bbox = [x, y, w, h].
GroundTruth ParseGroundTruth(const std::filesystem::path& path);

enum class DetectionFormat {
  kCocoResults,  // JSON array of {image_id, category_id, bbox, score}
  kYoloTxtDir,   // directory of <image>.txt, "class cx cy w h conf" lines
};

DetectionFormat ParseDetectionFormat(std::string_view name);
std::string_view DetectionFormatName(DetectionFormat format);

struct DetectionParseOptions {
  const ClassSchema* schema = nullptr;  // required
  // Required for YOLO; optional for COCO, where it enables the image check.
  const ImageTable* images = nullptr;
  // Assigned to records that do not carry their own tag.
  std::string model_tag;
};

// Streams records one at a time in file order. COCO input is read through a
// SAX parser and never held in memory as a whole.
void ForEachDetection(const std::filesystem::path& path,
                      DetectionFormat format,
                      const DetectionParseOptions& options,
                      const std::function<void(Detection&&)>& sink);

std::vector<Detection> ParseDetections(const std::filesystem::path& path,
                                       DetectionFormat format,
                                       const DetectionParseOptions& options);

// COCO output keeps input order. YOLO output groups by image (one file per
// image id, named <image_id>.txt) and needs `images` for normalization;
// re-parsing yields records ordered by image id, then original order.
void WriteDetections(std::span<const Detection> detections,
                     const std::filesystem::path& path, DetectionFormat format,
                     const ImageTable* images = nullptr);

// The COCO results text WriteDetections produces.
std::string DetectionsToCocoJson(std::span<const Detection> detections);

// Shortest decimal text that parses back to the same double.
std::string FormatDouble(double value);

// Writes `contents` to a sibling temp file, then renames over `path`.
void WriteFileAtomic(const std::filesystem::path& path,
                     std::string_view contents);
std::string ReadFile(const std::filesystem::path& path);

}  // namespace fisheye

#endif  // FISHEYE_FORMATS_H_
