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
#ifndef FISHEYE_ILLUMINATION_H_
#define FISHEYE_ILLUMINATION_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fisheye/geometry.h"

namespace fisheye {

enum class LuminanceMode {
  kChannelMean,  // (R + G + B) / 3 of the channel means
  kBt601,        // 0.299 R + 0.587 G + 0.114 B
};

LuminanceMode ParseLuminanceMode(std::string_view name);
std::string_view LuminanceModeName(LuminanceMode mode);

struct IlluminationStats {
  double mean_r = 0;
  double mean_g = 0;
  double mean_b = 0;
  double luminance = 0;

  friend bool operator==(const IlluminationStats&,
                         const IlluminationStats&) = default;
};

double Luminance(double r, double g, double b, LuminanceMode mode);

// Interleaved 8-bit RGB, row-major, no padding.
struct RgbImageView {
  std::span<const std::uint8_t> pixels;
  int width = 0;
  int height = 0;
};

// Channel means over every pixel and their luminance. Throws
// kInvalidArgument for an empty image or a buffer/size mismatch.
IlluminationStats ComputeImageStats(
    const RgbImageView& image, LuminanceMode mode = LuminanceMode::kChannelMean);

enum class Cluster { kNight, kOther };
enum class Scenario { kMorning, kAfternoon, kEvening, kNight };

std::string_view ClusterName(Cluster c);
Cluster ParseCluster(std::string_view name);
std::string_view ScenarioName(Scenario s);
Scenario ParseScenario(std::string_view name);

// FishEye8K frames are named camera<N>_<M|A|E|N>_<frame>; the letter is the
// capture scenario. Returns nullopt for names without that token.
std::optional<Scenario> ScenarioFromFileName(std::string_view file_name);

struct ImageRecord {
  std::string image_id;  // file stem of the raw image
  std::string path;
  ImageDims dims;
  std::optional<IlluminationStats> stats;
  std::optional<Cluster> cluster;
  std::vector<std::string> provenance;
  std::optional<Scenario> scenario;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// Luminance cut below which an image counts as night-time.
class NightThreshold {
 public:
  // Accepts values in (0, 255]. 255 is reachable by the automatic
  // threshold when the brightest bin is isolated.
  static NightThreshold Create(double value);
  double value() const { return value_; }

 private:
  explicit NightThreshold(double value) : value_(value) {}
  double value_;
};

struct IlluminationPartition {
  std::vector<ImageRecord> night;
  std::vector<ImageRecord> other;
};

// Night iff luminance < threshold. Input order is kept on both sides and
// each record's cluster field is set. Throws kInvalidArgument naming the
// first record without stats.
IlluminationPartition ClusterByIllumination(std::span<const ImageRecord> records,
                                            NightThreshold threshold);

// Otsu's method on the 256-bin histogram of floor(luminance). Candidate t
// puts bins < t on the night side; the smallest maximizer wins.
NightThreshold AutoThreshold(std::span<const ImageRecord> records);

// filename,mean_r,mean_g,mean_b,luminance,scenario,cluster
std::string ScatterCsv(std::span<const ImageRecord> records);
void ExportScatter(std::span<const ImageRecord> records,
                   const std::filesystem::path& path);

// JSON Lines manifest: a header line, then one record per line.
struct ManifestHeader {
  int version = 1;
  std::string stage;
  std::optional<double> threshold;
  LuminanceMode luminance_mode = LuminanceMode::kChannelMean;
};

struct Manifest {
  ManifestHeader header;
  std::vector<ImageRecord> records;
};

std::string ManifestToText(const Manifest& manifest);
Manifest ManifestFromText(std::string_view text, std::string_view source);
void WriteManifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest ReadManifest(const std::filesystem::path& path);

}  // namespace fisheye

#endif  // FISHEYE_ILLUMINATION_H_
