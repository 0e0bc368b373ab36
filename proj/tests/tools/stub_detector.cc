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
// Deterministic stand-in for a detector: two boxes per image, placed
// relative to the image size and nudged by --variant.
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fisheye/formats.h"
#include "fisheye/image_io.h"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app("stub detector");
  std::string input, output, format = "coco";
  int variant = 0;
  app.add_option("--input", input)->required();
  app.add_option("--output", output)->required();
  app.add_option("--format", format)->check(CLI::IsMember({"coco", "yolo"}));
  app.add_option("--variant", variant);
  CLI11_PARSE(app, argc, argv);

  fisheye::ImageTable table;
  std::vector<fisheye::Detection> dets;
  const double k = variant;
  for (const fs::path& file : fisheye::ListImages(input)) {
    const auto image = fisheye::DecodeImage(file);
    if (!image) {
      std::cerr << "cannot decode " << file << "\n";
      return 1;
    }
    const double w = image->dims.width, h = image->dims.height;
    const std::string id = file.stem().string();
    table.Add({id, file.filename().string(), image->dims});
    dets.push_back({id, 2, {0.1 * w + k, 0.1 * h, 0.4 * w + k, 0.5 * h},
                    0.9 - 0.1 * k, ""});
    dets.push_back({id, 3, {0.6 * w, 0.6 * h - k, 0.9 * w, 0.9 * h},
                    0.6 + 0.1 * k, ""});
  }
  if (format == "coco") {
    fisheye::WriteDetections(dets, fs::path(output) / "detections.json",
                             fisheye::DetectionFormat::kCocoResults);
  } else {
    fisheye::WriteDetections(dets, output, fisheye::DetectionFormat::kYoloTxtDir,
                             &table);
  }
  return 0;
}
