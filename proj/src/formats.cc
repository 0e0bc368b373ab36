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
#include "fisheye/formats.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

#include "fisheye/error.h"
#include "json.hpp"

namespace fisheye {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kImages[] = "images";
constexpr char kAnnotations[] = "annotations";
constexpr char kCategories[] = "categories";
constexpr char kImageId[] = "image_id";
constexpr char kCategoryId[] = "category_id";
constexpr char kBbox[] = "bbox";
constexpr char kScore[] = "score";
constexpr char kModelTag[] = "model_tag";
// Written next to "bbox" only when x + w cannot reproduce x2 in binary64
// (the sum lands on a rounding tie). Readers that ignore it lose one ulp.
constexpr char kBboxCorners[] = "bbox_xyxy";

bool LooksLikeIntegerId(std::string_view s) {
  if (s.empty() || s.size() > 18) return false;
  if (s.size() > 1 && s[0] == '0') return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

std::string ImageIdFromJson(const json& v, std::string_view where) {
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_string()) return v.get<std::string>();
  Fail(ErrorKind::kParse,
       fmt::format("{}: image id must be an integer or string", where));
}

// Width such that x + width == x2 exactly in double arithmetic, so that an
// xywh record parses back to the corner box it was written from.
double ExactExtent(double lo, double hi) {
  double w = hi - lo;
  for (int i = 0; i < 8 && lo + w != hi; ++i) {
    w = (lo + w < hi) ? std::nextafter(w, std::numeric_limits<double>::max())
                      : std::nextafter(w, std::numeric_limits<double>::lowest());
  }
  return (lo + w == hi) ? w : hi - lo;
}

std::ifstream OpenForRead(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    Fail(ErrorKind::kIo, fmt::format("cannot open '{}' for reading",
                                     path.string()));
  }
  return in;
}

// Shared validation for a parsed detection record.
Detection FinishDetection(std::string image_id, int class_id,
                          const BoxCoords& coords, BoxConvention convention,
                          double score, const DetectionParseOptions& options,
                          const std::string& locus) {
  if (!options.schema->Contains(class_id)) {
    Fail(ErrorKind::kReferential,
         fmt::format("{}: unknown class id {}", locus, class_id));
  }
  if (!(score >= 0.0 && score <= 1.0)) {
    Fail(ErrorKind::kDomain,
         fmt::format("{}: score {} outside [0, 1]", locus, score));
  }
  std::optional<ImageDims> dims;
  if (options.images != nullptr) {
    const ImageInfo* info = options.images->Find(image_id);
    if (info == nullptr) {
      Fail(ErrorKind::kReferential,
           fmt::format("{}: unknown image id '{}'", locus, image_id));
    }
    dims = info->dims;
  }
  if (convention == BoxConvention::kXywhAbs &&
      (coords[2] < 0 || coords[3] < 0)) {
    Fail(ErrorKind::kDomain,
         fmt::format("{}: bbox has negative width or height", locus));
  }
  BoundingBox box;
  try {
    box = ToCanonical(coords, convention, dims);
  } catch (const Error& e) {
    Fail(e.kind(), fmt::format("{}: {}", locus, e.what()));
  }
  if (box.degenerate()) {
    Fail(ErrorKind::kDomain, fmt::format("{}: zero-area box", locus));
  }
  return Detection{std::move(image_id), class_id, box, score,
                   options.model_tag};
}

// SAX consumer for a COCO results array. Each completed record is handed to
// the sink immediately; nothing but the current record is retained.
class CocoResultsSax : public nlohmann::json_sax<json> {
 public:
  CocoResultsSax(const fs::path& path, const DetectionParseOptions& options,
                 const std::function<void(Detection&&)>& sink)
      : path_(path.string()), options_(options), sink_(sink) {}

  bool null() override { return Scalar(ValueKind::kOther); }
  bool boolean(bool) override { return Scalar(ValueKind::kOther); }
  bool number_integer(number_integer_t v) override {
    number_ = static_cast<double>(v);
    text_ = std::to_string(v);
    integer_ = v;
    return Scalar(ValueKind::kInteger);
  }
  bool number_unsigned(number_unsigned_t v) override {
    number_ = static_cast<double>(v);
    text_ = std::to_string(v);
    integer_ = v <= static_cast<std::uint64_t>(
                        std::numeric_limits<std::int64_t>::max())
                   ? static_cast<std::int64_t>(v)
                   : std::numeric_limits<std::int64_t>::max();
    return Scalar(ValueKind::kInteger);
  }
  bool number_float(number_float_t v, const string_t&) override {
    number_ = v;
    return Scalar(ValueKind::kFloat);
  }
  bool string(string_t& v) override {
    text_ = std::move(v);
    return Scalar(ValueKind::kString);
  }
  bool binary(binary_t&) override { return Scalar(ValueKind::kOther); }

  bool start_object(std::size_t) override {
    if (skip_ > 0) return ++skip_, true;
    if (depth_ == 1) {
      record_ = Record{};
      ++depth_;
      return true;
    }
    if (depth_ == 2) return skip_ = 1, true;
    Fail(ErrorKind::kParse, Where("expected an array of result records"));
  }
  bool end_object() override {
    if (skip_ > 0) return --skip_, true;
    Emit();
    --depth_;
    return true;
  }
  bool start_array(std::size_t) override {
    if (skip_ > 0) return ++skip_, true;
    if (depth_ == 0) return ++depth_, true;
    if (depth_ == 2 && key_ == kBbox) {
      record_.bbox.clear();
      record_.has_bbox = true;
      array_ = &record_.bbox;
      ++depth_;
      return true;
    }
    if (depth_ == 2 && key_ == kBboxCorners) {
      record_.corners.clear();
      array_ = &record_.corners;
      ++depth_;
      return true;
    }
    if (depth_ == 2) return skip_ = 1, true;
    Fail(ErrorKind::kParse, Where("unexpected nested array"));
  }
  bool end_array() override {
    if (skip_ > 0) return --skip_, true;
    --depth_;
    return true;
  }
  bool key(string_t& k) override {
    if (skip_ == 0) key_ = std::move(k);
    return true;
  }
  bool parse_error(std::size_t position, const std::string&,
                   const nlohmann::detail::exception& ex) override {
    Fail(ErrorKind::kParse, fmt::format("{}: malformed JSON at byte {}: {}",
                                        path_, position, ex.what()));
  }

 private:
  enum class ValueKind { kInteger, kFloat, kString, kOther };

  struct Record {
    std::optional<std::string> image_id;
    std::optional<std::int64_t> category_id;
    std::optional<double> score;
    std::vector<double> bbox;
    bool has_bbox = false;
    std::vector<double> corners;
    std::optional<std::string> model_tag;
  };

  std::string Where(std::string_view what) const {
    return fmt::format("{}: record #{}: {}", path_, index_ + 1, what);
  }

  bool Scalar(ValueKind kind) {
    if (skip_ > 0) return true;
    if (depth_ == 0 || depth_ == 1) {
      Fail(ErrorKind::kParse, Where("expected an array of result records"));
    }
    if (depth_ == 3) {
      if (kind != ValueKind::kInteger && kind != ValueKind::kFloat) {
        Fail(ErrorKind::kParse, Where("bbox entries must be numbers"));
      }
      array_->push_back(number_);
      return true;
    }
    // depth_ == 2: a field of the current record.
    if (key_ == kImageId) {
      if (kind != ValueKind::kInteger && kind != ValueKind::kString) {
        Fail(ErrorKind::kParse,
             Where("image_id must be an integer or string"));
      }
      record_.image_id = text_;
    } else if (key_ == kCategoryId) {
      if (kind != ValueKind::kInteger) {
        Fail(ErrorKind::kParse, Where("category_id must be an integer"));
      }
      record_.category_id = integer_;
    } else if (key_ == kScore) {
      if (kind != ValueKind::kInteger && kind != ValueKind::kFloat) {
        Fail(ErrorKind::kParse, Where("score must be a number"));
      }
      record_.score = number_;
    } else if (key_ == kModelTag && kind == ValueKind::kString) {
      record_.model_tag = text_;
    } else if (key_ == kBbox || key_ == kBboxCorners) {
      Fail(ErrorKind::kParse, Where(fmt::format("{} must be an array", key_)));
    }
    return true;
  }

  void Emit() {
    if (!record_.image_id) Fail(ErrorKind::kParse, Where("missing image_id"));
    if (!record_.category_id) {
      Fail(ErrorKind::kParse, Where("missing category_id"));
    }
    if (!record_.score) Fail(ErrorKind::kParse, Where("missing score"));
    if (!record_.has_bbox) Fail(ErrorKind::kParse, Where("missing bbox"));
    if (record_.bbox.size() != 4) {
      Fail(ErrorKind::kParse, Where("bbox must have exactly 4 entries"));
    }
    if (*record_.category_id < std::numeric_limits<int>::min() ||
        *record_.category_id > std::numeric_limits<int>::max()) {
      Fail(ErrorKind::kReferential, Where("category_id out of range"));
    }
    BoxCoords coords{record_.bbox[0], record_.bbox[1], record_.bbox[2],
                     record_.bbox[3]};
    BoxConvention convention = BoxConvention::kXywhAbs;
    if (!record_.corners.empty()) {
      const std::vector<double>& k = record_.corners;
      const double tol = 1e-6 * (1.0 + std::abs(coords[0]) + std::abs(coords[1]) +
                                 coords[2] + coords[3]);
      if (k.size() != 4 || k[0] != coords[0] || k[1] != coords[1] ||
          std::abs(k[2] - (coords[0] + coords[2])) > tol ||
          std::abs(k[3] - (coords[1] + coords[3])) > tol) {
        Fail(ErrorKind::kParse, Where("bbox_xyxy disagrees with bbox"));
      }
      coords = {k[0], k[1], k[2], k[3]};
      convention = BoxConvention::kCornerAbs;
    }
    Detection det = FinishDetection(
        std::move(*record_.image_id), static_cast<int>(*record_.category_id),
        coords, convention, *record_.score, options_,
        fmt::format("{}: record #{}", path_, index_ + 1));
    if (record_.model_tag) det.model_tag = std::move(*record_.model_tag);
    sink_(std::move(det));
    ++index_;
  }

  std::string path_;
  const DetectionParseOptions& options_;
  const std::function<void(Detection&&)>& sink_;
  int depth_ = 0;
  int skip_ = 0;
  std::string key_;
  Record record_;
  std::vector<double>* array_ = nullptr;
  std::size_t index_ = 0;
  double number_ = 0;
  std::int64_t integer_ = 0;
  std::string text_;
};

void ForEachCocoResult(const fs::path& path,
                       const DetectionParseOptions& options,
                       const std::function<void(Detection&&)>& sink) {
  std::ifstream in = OpenForRead(path);
  CocoResultsSax sax(path, options, sink);
  // Empty files are not valid JSON; the SAX parser reports them with an
  // offset like any other syntax error.
  json::sax_parse(in, &sax);
}

template <typename T>
bool ParseNumber(std::string_view token, T* out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, *out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string_view> SplitWhitespace(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])))
      ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

void ForEachYoloDetection(const fs::path& dir,
                          const DetectionParseOptions& options,
                          const std::function<void(Detection&&)>& sink) {
  if (options.images == nullptr) {
    Fail(ErrorKind::kInvalidArgument,
         "YOLO detections need an image dimension table");
  }
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    Fail(ErrorKind::kIo,
         fmt::format("'{}' is not a readable directory", dir.string()));
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.stem().string() < b.stem().string();
  });

  for (const fs::path& file : files) {
    const std::string stem = file.stem().string();
    const ImageInfo* info = options.images->FindByStem(stem);
    if (info == nullptr) {
      Fail(ErrorKind::kReferential,
           fmt::format("{}: no image matches file stem '{}'", file.string(),
                       stem));
    }
    std::ifstream in = OpenForRead(file);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string locus = fmt::format("{}:{}", file.string(), line_no);
      const auto fields = SplitWhitespace(line);
      if (fields.empty()) continue;
      if (fields.size() != 6) {
        Fail(ErrorKind::kParse,
             fmt::format("{}: expected 6 fields 'class cx cy w h conf', got {}",
                         locus, fields.size()));
      }
      int class_id = 0;
      if (!ParseNumber(fields[0], &class_id)) {
        Fail(ErrorKind::kParse,
             fmt::format("{}: class '{}' is not an integer", locus, fields[0]));
      }
      std::array<double, 5> v{};
      for (size_t k = 0; k < 5; ++k) {
        if (!ParseNumber(fields[k + 1], &v[k])) {
          Fail(ErrorKind::kParse, fmt::format("{}: '{}' is not a number",
                                              locus, fields[k + 1]));
        }
      }
      sink(FinishDetection(info->image_id, class_id, {v[0], v[1], v[2], v[3]},
                           BoxConvention::kCenterNorm, v[4], options, locus));
    }
  }
}

std::string CocoRecord(const Detection& d) {
  const std::string id = LooksLikeIntegerId(d.image_id)
                             ? d.image_id
                             : json(d.image_id).dump();
  const double w = ExactExtent(d.box.x1, d.box.x2);
  const double h = ExactExtent(d.box.y1, d.box.y2);
  std::string out = fmt::format(
      R"({{"image_id": {}, "category_id": {}, "bbox": [{}, {}, {}, {}], "score": {})",
      id, d.class_id, FormatDouble(d.box.x1), FormatDouble(d.box.y1),
      FormatDouble(w), FormatDouble(h), FormatDouble(d.score));
  if (d.box.x1 + w != d.box.x2 || d.box.y1 + h != d.box.y2) {
    out += fmt::format(R"(, "{}": [{}, {}, {}, {}])", kBboxCorners,
                       FormatDouble(d.box.x1), FormatDouble(d.box.y1),
                       FormatDouble(d.box.x2), FormatDouble(d.box.y2));
  }
  if (!d.model_tag.empty()) {
    out += fmt::format(R"(, "model_tag": {})", json(d.model_tag).dump());
  }
  out += "}";
  return out;
}

void WriteYoloDir(std::span<const Detection> detections, const fs::path& dir,
                  const ImageTable* images) {
  if (images == nullptr) {
    Fail(ErrorKind::kInvalidArgument,
         "YOLO output needs an image dimension table");
  }
  std::map<std::string, std::string> files;
  for (const Detection& d : detections) {
    if (d.image_id.empty() || d.image_id.find('/') != std::string::npos) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("image id '{}' cannot name a YOLO file", d.image_id));
    }
    const ImageDims dims = images->DimsOf(d.image_id);
    const BoxCoords c = FromCanonical(d.box, BoxConvention::kCenterNorm, dims);
    if (!(d.box.x1 >= 0.0 && d.box.y1 >= 0.0 && d.box.x2 <= dims.width &&
          d.box.y2 <= dims.height)) {
      Fail(ErrorKind::kDomain,
           fmt::format("detection on '{}' leaves the frame; clip before "
                       "writing YOLO output",
                       d.image_id));
    }
    files[d.image_id] += fmt::format(
        "{} {} {} {} {} {}\n", d.class_id, FormatDouble(c[0]),
        FormatDouble(c[1]), FormatDouble(c[2]), FormatDouble(c[3]),
        FormatDouble(d.score));
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    Fail(ErrorKind::kIo, fmt::format("cannot create '{}': {}", dir.string(),
                                     ec.message()));
  }
  // Stale label files from an earlier write would be read back as part of
  // this set.
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      fs::remove(entry.path());
    }
  }
  for (const auto& [image_id, text] : files) {
    WriteFileAtomic(dir / (image_id + ".txt"), text);
  }
}

}  // namespace

ClassSchema ClassSchema::Default() {
  return ClassSchema({{0, "Bus"}, {1, "Bike"}, {2, "Car"}, {3, "Pedestrian"},
                      {4, "Truck"}});
}

ClassSchema::ClassSchema(std::vector<ClassEntry> classes)
    : classes_(std::move(classes)) {
  for (size_t i = 0; i < classes_.size(); ++i) {
    if (!index_.emplace(classes_[i].id, i).second) {
      Fail(ErrorKind::kDomain,
           fmt::format("duplicate class id {} in schema", classes_[i].id));
    }
  }
}

size_t ClassSchema::IndexOf(int id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    Fail(ErrorKind::kReferential, fmt::format("unknown class id {}", id));
  }
  return it->second;
}

std::optional<int> ClassSchema::IdForName(std::string_view name) const {
  for (const ClassEntry& c : classes_) {
    if (c.name == name) return c.id;
  }
  return std::nullopt;
}

ClassSchema LoadClassSchema(const fs::path& path) {
  json doc;
  {
    std::ifstream in = OpenForRead(path);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      Fail(ErrorKind::kParse, fmt::format("{}: malformed JSON at byte {}",
                                          path.string(), e.byte));
    }
  }
  const json* list = nullptr;
  if (doc.is_object() && doc.contains("classes")) list = &doc["classes"];
  if (doc.is_object() && doc.contains(kCategories)) list = &doc[kCategories];
  if (list == nullptr || !list->is_array()) {
    Fail(ErrorKind::kParse,
         fmt::format("{}: expected a 'classes' or 'categories' array",
                     path.string()));
  }
  std::vector<ClassEntry> classes;
  try {
    for (const json& c : *list) {
      classes.push_back({c.at("id").get<int>(), c.at("name").get<std::string>()});
    }
  } catch (const json::exception& e) {
    Fail(ErrorKind::kParse, fmt::format("{}: {}", path.string(), e.what()));
  }
  return ClassSchema(std::move(classes));
}

void ImageTable::Add(ImageInfo info) {
  if (by_id_.contains(info.image_id)) {
    Fail(ErrorKind::kDomain,
         fmt::format("duplicate image id '{}'", info.image_id));
  }
  const size_t index = images_.size();
  by_id_.emplace(info.image_id, index);
  if (!info.file_name.empty()) {
    by_stem_.emplace(fs::path(info.file_name).stem().string(), index);
  }
  images_.push_back(std::move(info));
}

const ImageInfo* ImageTable::Find(std::string_view image_id) const {
  auto it = by_id_.find(std::string(image_id));
  return it == by_id_.end() ? nullptr : &images_[it->second];
}

const ImageInfo* ImageTable::FindByStem(std::string_view stem) const {
  if (const ImageInfo* info = Find(stem)) return info;
  auto it = by_stem_.find(std::string(stem));
  return it == by_stem_.end() ? nullptr : &images_[it->second];
}

ImageDims ImageTable::DimsOf(std::string_view image_id) const {
  const ImageInfo* info = Find(image_id);
  if (info == nullptr) {
    Fail(ErrorKind::kReferential,
         fmt::format("unknown image id '{}'", image_id));
  }
  return info->dims;
}

GroundTruth ParseGroundTruth(const fs::path& path) {
  const std::string where = path.string();
  json doc;
  {
    std::ifstream in = OpenForRead(path);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      Fail(ErrorKind::kParse,
           fmt::format("{}: malformed JSON at byte {}", where, e.byte));
    }
  }
  if (!doc.is_object() || !doc.contains(kImages) ||
      !doc.contains(kAnnotations) || !doc.contains(kCategories)) {
    Fail(ErrorKind::kParse,
         fmt::format("{}: expected an object with images, annotations and "
                     "categories",
                     where));
  }

  GroundTruth gt;
  try {
    std::vector<ClassEntry> classes;
    for (const json& c : doc[kCategories]) {
      classes.push_back({c.at("id").get<int>(), c.at("name").get<std::string>()});
    }
    gt.schema = ClassSchema(std::move(classes));

    for (const json& img : doc[kImages]) {
      const std::string id = ImageIdFromJson(img.at("id"), where);
      const int w = img.at("width").get<int>();
      const int h = img.at("height").get<int>();
      if (w <= 0 || h <= 0) {
        Fail(ErrorKind::kDomain,
             fmt::format("{}: image '{}' has non-positive size {}x{}", where,
                         id, w, h));
      }
      gt.images.Add({id, img.value("file_name", std::string()), {w, h}});
    }

    std::int64_t ordinal = 0;
    for (const json& ann : doc[kAnnotations]) {
      Annotation a;
      a.id = ann.contains("id") ? ann["id"].get<std::int64_t>() : ordinal;
      ++ordinal;
      a.image_id = ImageIdFromJson(ann.at(kImageId), where);
      a.class_id = ann.at(kCategoryId).get<int>();
      const std::string locus =
          fmt::format("{}: annotation id {}", where, a.id);
      const ImageInfo* image = gt.images.Find(a.image_id);
      if (image == nullptr) {
        Fail(ErrorKind::kReferential,
             fmt::format("{} references missing image '{}'", locus,
                         a.image_id));
      }
      if (!gt.schema.Contains(a.class_id)) {
        Fail(ErrorKind::kReferential,
             fmt::format("{} has unknown category {}", locus, a.class_id));
      }
      const json& bbox = ann.at(kBbox);
      if (!bbox.is_array() || bbox.size() != 4) {
        Fail(ErrorKind::kParse, fmt::format("{}: bbox must have 4 numbers",
                                            locus));
      }
      const BoxCoords c{bbox[0].get<double>(), bbox[1].get<double>(),
                        bbox[2].get<double>(), bbox[3].get<double>()};
      if (c[2] < 0 || c[3] < 0) {
        Fail(ErrorKind::kDomain,
             fmt::format("{} has negative bbox width or height", locus));
      }
      a.box = ClipBox(ToCanonical(c, BoxConvention::kXywhAbs), image->dims);
      if (a.box.degenerate()) {
        Fail(ErrorKind::kDomain,
             fmt::format("{} has a zero-area bbox inside its image", locus));
      }
      a.area = ann.contains("area") ? ann["area"].get<double>() : c[2] * c[3];
      if (a.area < 0) {
        Fail(ErrorKind::kDomain, fmt::format("{} has negative area", locus));
      }
      a.crowd = ann.value("iscrowd", 0) != 0;
      gt.annotations.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    Fail(ErrorKind::kParse, fmt::format("{}: {}", where, e.what()));
  }
  return gt;
}

DetectionFormat ParseDetectionFormat(std::string_view name) {
  if (name == "coco" || name == "coco-results") {
    return DetectionFormat::kCocoResults;
  }
  if (name == "yolo" || name == "yolo-txt-dir") {
    return DetectionFormat::kYoloTxtDir;
  }
  Fail(ErrorKind::kInvalidArgument,
       fmt::format("unknown detection format '{}'", name));
}

std::string_view DetectionFormatName(DetectionFormat format) {
  return format == DetectionFormat::kCocoResults ? "coco-results"
                                                 : "yolo-txt-dir";
}

void ForEachDetection(const fs::path& path, DetectionFormat format,
                      const DetectionParseOptions& options,
                      const std::function<void(Detection&&)>& sink) {
  if (options.schema == nullptr) {
    Fail(ErrorKind::kInvalidArgument, "detection parsing needs a class schema");
  }
  if (format == DetectionFormat::kCocoResults) {
    ForEachCocoResult(path, options, sink);
  } else {
    ForEachYoloDetection(path, options, sink);
  }
}

std::vector<Detection> ParseDetections(const fs::path& path,
                                       DetectionFormat format,
                                       const DetectionParseOptions& options) {
  std::vector<Detection> out;
  ForEachDetection(path, format, options,
                   [&out](Detection&& d) { out.push_back(std::move(d)); });
  return out;
}

std::string DetectionsToCocoJson(std::span<const Detection> detections) {
  std::string text = "[";
  for (size_t i = 0; i < detections.size(); ++i) {
    text += i == 0 ? "\n" : ",\n";
    text += CocoRecord(detections[i]);
  }
  text += detections.empty() ? "]\n" : "\n]\n";
  return text;
}

void WriteDetections(std::span<const Detection> detections,
                     const fs::path& path, DetectionFormat format,
                     const ImageTable* images) {
  if (format == DetectionFormat::kYoloTxtDir) {
    WriteYoloDir(detections, path, images);
    return;
  }
  WriteFileAtomic(path, DetectionsToCocoJson(detections));
}

std::string FormatDouble(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void WriteFileAtomic(const fs::path& path, std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      Fail(ErrorKind::kIo,
           fmt::format("cannot open '{}' for writing", tmp.string()));
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      Fail(ErrorKind::kIo, fmt::format("write to '{}' failed", tmp.string()));
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    Fail(ErrorKind::kIo, fmt::format("cannot move '{}' into place: {}",
                                     path.string(), ec.message()));
  }
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in = OpenForRead(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fisheye
