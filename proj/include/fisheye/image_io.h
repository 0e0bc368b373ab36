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
#ifndef FISHEYE_IMAGE_IO_H_
#define FISHEYE_IMAGE_IO_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fisheye/geometry.h"
#include "fisheye/illumination.h"

namespace fisheye {

struct RgbImage {
  ImageDims dims;
  std::vector<std::uint8_t> pixels;  // interleaved RGB

  RgbImageView view() const { return {pixels, dims.width, dims.height}; }
};

// PNG, JPEG, BMP, TIFF or PPM. Returns nullopt when the file cannot be
// decoded.
std::optional<RgbImage> DecodeImage(const std::filesystem::path& path);

// Format follows the extension. Throws kIo on failure.
void EncodeImage(const RgbImage& image, const std::filesystem::path& path);

RgbImage SolidImage(ImageDims dims, std::uint8_t r, std::uint8_t g,
                    std::uint8_t b);

bool IsImageFile(const std::filesystem::path& path);

// Image files directly inside `dir`, sorted by file name.
std::vector<std::filesystem::path> ListImages(const std::filesystem::path& dir);

struct ManifestBuildOptions {
  LuminanceMode luminance_mode = LuminanceMode::kChannelMean;
  int threads = 0;
  std::string stage = "raw";
  // Appended to every record's provenance.
  std::string provenance_tag = "raw";
};

// Decodes every image in `dir` and fills in dims, stats and the scenario
// parsed from the file name. Undecodable files are skipped with a warning.
Manifest BuildManifest(const std::filesystem::path& dir,
                       const ManifestBuildOptions& options);

// Same for an explicit file list; ids are the file stems.
Manifest BuildManifestFromFiles(const std::vector<std::filesystem::path>& files,
                                const ManifestBuildOptions& options);

}  // namespace fisheye

#endif  // FISHEYE_IMAGE_IO_H_
