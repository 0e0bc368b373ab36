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
#include "fisheye/image_io.h"

#include <algorithm>
#include <cctype>
#include <system_error>
#include <unordered_set>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fisheye/error.h"
#include "fisheye/log.h"
#include "fisheye/parallel.h"

namespace fisheye {

namespace fs = std::filesystem;

std::optional<RgbImage> DecodeImage(const fs::path& path) {
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception&) {
    return std::nullopt;
  }
  if (bgr.empty()) return std::nullopt;
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage out;
  out.dims = {rgb.cols, rgb.rows};
  out.pixels.resize(static_cast<size_t>(rgb.cols) * rgb.rows * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const std::uint8_t* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + rgb.cols * 3,
              out.pixels.begin() + static_cast<size_t>(y) * rgb.cols * 3);
  }
  return out;
}

void EncodeImage(const RgbImage& image, const fs::path& path) {
  cv::Mat rgb(image.dims.height, image.dims.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception& e) {
    Fail(ErrorKind::kIo, fmt::format("cannot write '{}': {}", path.string(),
                                     e.what()));
  }
  if (!ok) Fail(ErrorKind::kIo, fmt::format("cannot write '{}'", path.string()));
}

RgbImage SolidImage(ImageDims dims, std::uint8_t r, std::uint8_t g,
                    std::uint8_t b) {
  RgbImage img;
  img.dims = MakeImageDims(dims.width, dims.height);
  img.pixels.resize(static_cast<size_t>(dims.width) * dims.height * 3);
  for (size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  return img;
}

bool IsImageFile(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" ||
         ext == ".tif" || ext == ".tiff" || ext == ".ppm";
}

std::vector<fs::path> ListImages(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    Fail(ErrorKind::kIo, fmt::format("'{}' is not a directory", dir.string()));
  }
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && IsImageFile(entry.path())) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return out;
}

Manifest BuildManifestFromFiles(const std::vector<fs::path>& files,
                                const ManifestBuildOptions& options) {
  std::vector<std::optional<ImageRecord>> slots(files.size());
  ParallelFor(files.size(), options.threads, [&](size_t i) {
    const fs::path& file = files[i];
    std::optional<RgbImage> image = DecodeImage(file);
    if (!image) {
      LogWarning("skipping '{}': cannot decode image", file.string());
      return;
    }
    ImageRecord r;
    r.image_id = file.stem().string();
    r.path = file.string();
    r.dims = image->dims;
    r.stats = ComputeImageStats(image->view(), options.luminance_mode);
    r.scenario = ScenarioFromFileName(file.filename().string());
    if (!options.provenance_tag.empty()) {
      r.provenance.push_back(options.provenance_tag);
    }
    slots[i] = std::move(r);
  });
  Manifest m;
  m.header.stage = options.stage;
  m.header.luminance_mode = options.luminance_mode;
  std::unordered_set<std::string> seen;
  for (auto& slot : slots) {
    if (!slot) continue;
    if (!seen.insert(slot->image_id).second) {
      Fail(ErrorKind::kDomain,
           fmt::format("two images share the id '{}' ('{}')", slot->image_id,
                       slot->path));
    }
    m.records.push_back(std::move(*slot));
  }
  return m;
}

Manifest BuildManifest(const fs::path& dir,
                       const ManifestBuildOptions& options) {
  return BuildManifestFromFiles(ListImages(dir), options);
}

}  // namespace fisheye
