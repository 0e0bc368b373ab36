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
#include "fisheye/illumination.h"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

#include "fisheye/error.h"
#include "fisheye/formats.h"
#include "json.hpp"

namespace fisheye {

namespace {

using ojson = nlohmann::ordered_json;

constexpr char kManifestSchema[] = "fisheye-manifest";

int LuminanceBin(double luminance) {
  return std::clamp(static_cast<int>(std::floor(luminance)), 0, 255);
}

std::string CsvField(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

LuminanceMode ParseLuminanceMode(std::string_view name) {
  if (name == "mean" || name == "channel-mean") return LuminanceMode::kChannelMean;
  if (name == "bt601") return LuminanceMode::kBt601;
  Fail(ErrorKind::kInvalidArgument,
       fmt::format("unknown luminance mode '{}' (expected mean or bt601)", name));
}

std::string_view LuminanceModeName(LuminanceMode mode) {
  return mode == LuminanceMode::kChannelMean ? "mean" : "bt601";
}

double Luminance(double r, double g, double b, LuminanceMode mode) {
  if (mode == LuminanceMode::kBt601) return 0.299 * r + 0.587 * g + 0.114 * b;
  return (r + g + b) / 3.0;
}

IlluminationStats ComputeImageStats(const RgbImageView& image,
                                    LuminanceMode mode) {
  if (image.width <= 0 || image.height <= 0) {
    Fail(ErrorKind::kInvalidArgument, "image has no pixels");
  }
  const size_t count = static_cast<size_t>(image.width) * image.height;
  if (image.pixels.size() != count * 3) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("pixel buffer holds {} bytes, expected {} for {}x{} RGB",
                     image.pixels.size(), count * 3, image.width,
                     image.height));
  }
  // Integer sums are exact, which keeps the means independent of pixel order.
  std::uint64_t sum[3] = {0, 0, 0};
  const std::uint8_t* p = image.pixels.data();
  for (size_t i = 0; i < count; ++i, p += 3) {
    sum[0] += p[0];
    sum[1] += p[1];
    sum[2] += p[2];
  }
  IlluminationStats s;
  s.mean_r = static_cast<double>(sum[0]) / static_cast<double>(count);
  s.mean_g = static_cast<double>(sum[1]) / static_cast<double>(count);
  s.mean_b = static_cast<double>(sum[2]) / static_cast<double>(count);
  s.luminance = Luminance(s.mean_r, s.mean_g, s.mean_b, mode);
  return s;
}

std::string_view ClusterName(Cluster c) {
  return c == Cluster::kNight ? "Night" : "Other";
}

Cluster ParseCluster(std::string_view name) {
  if (name == "Night") return Cluster::kNight;
  if (name == "Other") return Cluster::kOther;
  Fail(ErrorKind::kParse, fmt::format("unknown cluster '{}'", name));
}

std::string_view ScenarioName(Scenario s) {
  switch (s) {
    case Scenario::kMorning:
      return "Morning";
    case Scenario::kAfternoon:
      return "Afternoon";
    case Scenario::kEvening:
      return "Evening";
    case Scenario::kNight:
      return "Night";
  }
  return "";
}

Scenario ParseScenario(std::string_view name) {
  for (Scenario s : {Scenario::kMorning, Scenario::kAfternoon,
                     Scenario::kEvening, Scenario::kNight}) {
    if (ScenarioName(s) == name) return s;
  }
  Fail(ErrorKind::kParse, fmt::format("unknown scenario '{}'", name));
}

std::optional<Scenario> ScenarioFromFileName(std::string_view file_name) {
  for (size_t i = 0; i + 2 < file_name.size(); ++i) {
    if (file_name[i] != '_' || file_name[i + 2] != '_') continue;
    switch (file_name[i + 1]) {
      case 'M':
        return Scenario::kMorning;
      case 'A':
        return Scenario::kAfternoon;
      case 'E':
        return Scenario::kEvening;
      case 'N':
        return Scenario::kNight;
      default:
        break;
    }
  }
  return std::nullopt;
}

NightThreshold NightThreshold::Create(double value) {
  if (!(value > 0.0 && value <= 255.0)) {
    Fail(ErrorKind::kDomain,
         fmt::format("night threshold {} outside (0, 255]", value));
  }
  return NightThreshold(value);
}

IlluminationPartition ClusterByIllumination(
    std::span<const ImageRecord> records, NightThreshold threshold) {
  IlluminationPartition out;
  for (const ImageRecord& r : records) {
    if (!r.stats) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("record '{}' has no illumination stats", r.image_id));
    }
  }
  for (const ImageRecord& r : records) {
    ImageRecord copy = r;
    if (r.stats->luminance < threshold.value()) {
      copy.cluster = Cluster::kNight;
      out.night.push_back(std::move(copy));
    } else {
      copy.cluster = Cluster::kOther;
      out.other.push_back(std::move(copy));
    }
  }
  return out;
}

NightThreshold AutoThreshold(std::span<const ImageRecord> records) {
  std::array<double, 256> hist{};
  for (const ImageRecord& r : records) {
    if (!r.stats) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("record '{}' has no illumination stats", r.image_id));
    }
    hist[LuminanceBin(r.stats->luminance)] += 1;
  }
  const double total = static_cast<double>(records.size());
  double total_mass = 0;
  for (int b = 0; b < 256; ++b) total_mass += b * hist[b];

  double best = 0;
  int best_t = -1;
  double below = 0;       // records in bins < t
  double below_mass = 0;  // sum of bin values in bins < t
  for (int t = 0; t < 256; ++t) {
    if (below > 0 && below < total) {
      const double w0 = below / total;
      const double w1 = 1.0 - w0;
      const double mu0 = below_mass / below;
      const double mu1 = (total_mass - below_mass) / (total - below);
      const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
      if (between > best) {
        best = between;
        best_t = t;
      }
    }
    below += hist[t];
    below_mass += t * hist[t];
  }
  if (best_t < 0) {
    Fail(ErrorKind::kDomain,
         "cannot derive a night threshold: all luminances fall in one bin; "
         "pass an explicit threshold instead");
  }
  return NightThreshold::Create(best_t);
}

std::string ScatterCsv(std::span<const ImageRecord> records) {
  std::string out = "filename,mean_r,mean_g,mean_b,luminance,scenario,cluster\n";
  for (const ImageRecord& r : records) {
    if (!r.stats) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("record '{}' has no illumination stats", r.image_id));
    }
    const std::string name = std::filesystem::path(r.path).filename().string();
    out += fmt::format(
        "{},{},{},{},{},{},{}\n", CsvField(name.empty() ? r.image_id : name),
        FormatDouble(r.stats->mean_r), FormatDouble(r.stats->mean_g),
        FormatDouble(r.stats->mean_b), FormatDouble(r.stats->luminance),
        r.scenario ? ScenarioName(*r.scenario) : "",
        r.cluster ? ClusterName(*r.cluster) : "");
  }
  return out;
}

void ExportScatter(std::span<const ImageRecord> records,
                   const std::filesystem::path& path) {
  WriteFileAtomic(path, ScatterCsv(records));
}

std::string ManifestToText(const Manifest& m) {
  ojson header = {{"schema", kManifestSchema},
                  {"version", m.header.version},
                  {"stage", m.header.stage},
                  {"threshold", m.header.threshold ? ojson(*m.header.threshold)
                                                   : ojson(nullptr)},
                  {"luminance_mode", LuminanceModeName(m.header.luminance_mode)},
                  {"records", m.records.size()}};
  std::string out = header.dump() + "\n";
  for (const ImageRecord& r : m.records) {
    ojson line = {{"image_id", r.image_id},
                  {"path", r.path},
                  {"width", r.dims.width},
                  {"height", r.dims.height}};
    if (r.stats) {
      line["mean_r"] = r.stats->mean_r;
      line["mean_g"] = r.stats->mean_g;
      line["mean_b"] = r.stats->mean_b;
      line["luminance"] = r.stats->luminance;
    }
    line["cluster"] = r.cluster ? ojson(ClusterName(*r.cluster)) : ojson(nullptr);
    line["scenario"] =
        r.scenario ? ojson(ScenarioName(*r.scenario)) : ojson(nullptr);
    line["provenance"] = r.provenance;
    out += line.dump() + "\n";
  }
  return out;
}

Manifest ManifestFromText(std::string_view text, std::string_view source) {
  Manifest m;
  size_t line_no = 0;
  size_t pos = 0;
  bool have_header = false;
  std::optional<size_t> declared;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string locus = fmt::format("{}:{}", source, line_no);
    ojson doc;
    try {
      doc = ojson::parse(line);
    } catch (const ojson::parse_error& e) {
      Fail(ErrorKind::kParse,
           fmt::format("{}: malformed JSON at byte {}", locus, e.byte));
    }
    try {
      if (!have_header) {
        if (doc.value("schema", std::string()) != kManifestSchema) {
          Fail(ErrorKind::kParse,
               fmt::format("{}: missing manifest header line", locus));
        }
        m.header.version = doc.at("version").get<int>();
        if (m.header.version != 1) {
          Fail(ErrorKind::kParse, fmt::format("{}: unsupported manifest "
                                              "version {}",
                                              locus, m.header.version));
        }
        m.header.stage = doc.value("stage", std::string());
        if (doc.contains("threshold") && !doc["threshold"].is_null()) {
          m.header.threshold = doc["threshold"].get<double>();
        }
        m.header.luminance_mode =
            ParseLuminanceMode(doc.value("luminance_mode", std::string("mean")));
        if (doc.contains("records")) declared = doc["records"].get<size_t>();
        have_header = true;
        continue;
      }
      ImageRecord r;
      r.image_id = doc.at("image_id").get<std::string>();
      r.path = doc.at("path").get<std::string>();
      r.dims = {doc.at("width").get<int>(), doc.at("height").get<int>()};
      if (doc.contains("luminance")) {
        r.stats = IlluminationStats{
            doc.at("mean_r").get<double>(), doc.at("mean_g").get<double>(),
            doc.at("mean_b").get<double>(), doc.at("luminance").get<double>()};
      }
      if (doc.contains("cluster") && !doc["cluster"].is_null()) {
        r.cluster = ParseCluster(doc["cluster"].get<std::string>());
      }
      if (doc.contains("scenario") && !doc["scenario"].is_null()) {
        r.scenario = ParseScenario(doc["scenario"].get<std::string>());
      }
      if (doc.contains("provenance")) {
        r.provenance = doc["provenance"].get<std::vector<std::string>>();
      }
      if (m.header.threshold && r.cluster && r.stats) {
        const bool night = r.stats->luminance < *m.header.threshold;
        if (night != (*r.cluster == Cluster::kNight)) {
          Fail(ErrorKind::kDomain,
               fmt::format("{}: record '{}' is tagged {} but its luminance {} "
                           "contradicts threshold {}",
                           locus, r.image_id, ClusterName(*r.cluster),
                           r.stats->luminance, *m.header.threshold));
        }
      }
      m.records.push_back(std::move(r));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kParse || e.kind() == ErrorKind::kDomain) {
        if (std::string_view(e.what()).starts_with(locus)) throw;
      }
      Fail(e.kind(), fmt::format("{}: {}", locus, e.what()));
    } catch (const ojson::exception& e) {
      Fail(ErrorKind::kParse, fmt::format("{}: {}", locus, e.what()));
    }
  }
  if (!have_header) {
    Fail(ErrorKind::kParse, fmt::format("{}: empty manifest", source));
  }
  if (declared && *declared != m.records.size()) {
    Fail(ErrorKind::kParse,
         fmt::format("{}: header declares {} records but {} follow "
                     "(truncated file?)",
                     source, *declared, m.records.size()));
  }
  return m;
}

void WriteManifest(const Manifest& manifest, const std::filesystem::path& path) {
  WriteFileAtomic(path, ManifestToText(manifest));
}

Manifest ReadManifest(const std::filesystem::path& path) {
  return ManifestFromText(ReadFile(path), path.string());
}

}  // namespace fisheye
