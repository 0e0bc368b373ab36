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
#include "fisheye/pipeline.h"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <unordered_map>
#include <utility>

#include <fmt/format.h>

#include "fisheye/error.h"
#include "fisheye/image_io.h"
#include "fisheye/log.h"
#include "fisheye/parallel.h"
#include "fisheye/process.h"
#include "fisheye/toml_lite.h"
#include "json.hpp"

namespace fisheye {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

constexpr char kInputPlaceholder[] = "{input_dir}";
constexpr char kOutputPlaceholder[] = "{output_dir}";
constexpr char kCocoDetectionsFile[] = "detections.json";

std::string ReplaceAll(std::string text, std::string_view from,
                       std::string_view to) {
  size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

bool ValidTag(std::string_view tag) {
  return !tag.empty() && std::all_of(tag.begin(), tag.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '-' || c == '.';
  }) && tag != "." && tag != "..";
}

// Replaces `dir` with an empty directory.
void ResetDirectory(const fs::path& dir) {
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) {
    Fail(ErrorKind::kIo,
         fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  }
}

void Symlink(const fs::path& target, const fs::path& link) {
  std::error_code ec;
  fs::create_symlink(fs::absolute(target), link, ec);
  if (ec) {
    Fail(ErrorKind::kIo, fmt::format("cannot link '{}' -> '{}': {}",
                                     link.string(), target.string(),
                                     ec.message()));
  }
}

// Mirrors the records' images into `dir` as <image_id><ext> symlinks.
void MaterializeLinks(const Manifest& manifest, const fs::path& dir) {
  ResetDirectory(dir);
  for (const ImageRecord& r : manifest.records) {
    Symlink(r.path, dir / (r.image_id + fs::path(r.path).extension().string()));
  }
}

ImageTable TableOf(const Manifest& manifest) {
  ImageTable table;
  for (const ImageRecord& r : manifest.records) {
    table.Add({r.image_id,
               r.image_id + fs::path(r.path).extension().string(), r.dims});
  }
  return table;
}

std::string RelativeTo(const fs::path& path, const fs::path& base) {
  return fs::relative(path, base).generic_string();
}

}  // namespace

std::string Fnv1aHex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string_view AdapterStageName(AdapterStage stage) {
  switch (stage) {
    case AdapterStage::kEnhance:
      return "enhance";
    case AdapterStage::kNightToDay:
      return "night_to_day";
    case AdapterStage::kSuperResolve:
      return "super_resolution";
    case AdapterStage::kDetect:
      return "detect";
  }
  return "?";
}

void AdapterSpec::Validate() const {
  const std::string where =
      fmt::format("{} adapter '{}'", AdapterStageName(stage), tag);
  if (command.find(kInputPlaceholder) == std::string::npos ||
      command.find(kOutputPlaceholder) == std::string::npos) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("{}: command must contain both {} and {}", where,
                     kInputPlaceholder, kOutputPlaceholder));
  }
  if (!(timeout_seconds > 0)) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("{}: timeout must be positive", where));
  }
  if (parallelism < 1) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("{}: parallelism must be at least 1", where));
  }
  if (!ValidTag(tag)) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("{}: tag may only use letters, digits, '_', '-', '.'",
                     where));
  }
}

// ---------------------------------------------------------------------------
// Configuration.

void PipelineConfig::Validate() const {
  if (work_dir.empty()) Fail(ErrorKind::kInvalidArgument, "work_dir is required");
  if (input_dir.empty()) {
    Fail(ErrorKind::kInvalidArgument, "input_dir is required");
  }
  for (const auto* spec : {&enhance, &night_to_day, &super_resolution}) {
    if (*spec) (*spec)->Validate();
  }
  if (t_night) NightThreshold::Create(*t_night);
  if (!(sr_factor > 0) || !std::isfinite(sr_factor)) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("super-resolution factor {} must be positive", sr_factor));
  }
  if (detectors.empty()) {
    Fail(ErrorKind::kInvalidArgument, "at least one [[detector]] is required");
  }
  std::set<std::string> tags;
  for (const DetectorSpec& d : detectors) {
    d.adapter.Validate();
    if (!tags.insert(d.adapter.tag).second) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("detector tag '{}' used twice", d.adapter.tag));
    }
    if (!(d.weight > 0) || !std::isfinite(d.weight)) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("detector '{}' weight must be positive", d.adapter.tag));
    }
  }
  FusionConfig f = fusion;
  f.model_weights.clear();
  f.Validate(detectors.size());
}

namespace {

ojson AdapterJson(const std::optional<AdapterSpec>& spec) {
  if (!spec) return ojson{{"skip", true}};
  return ojson{{"tag", spec->tag},
               {"command", spec->command},
               {"output", spec->output == OutputKind::kImages ? "images"
                                                              : "detections"},
               {"format", DetectionFormatName(spec->detection_format)},
               {"timeout", spec->timeout_seconds},
               {"parallelism", spec->parallelism}};
}

ojson FusionJson(const FusionConfig& f) {
  return ojson{{"iou_threshold", f.iou_threshold},
               {"skip_box_threshold", f.skip_box_threshold},
               {"score_mode", ScoreModeName(f.score_mode)},
               {"rescale", ScoreRescaleName(f.rescale)}};
}

ojson DetectorJson(const DetectorSpec& d) {
  ojson j = AdapterJson(d.adapter);
  j["weight"] = d.weight;
  j["use_sr"] = d.use_sr;
  return j;
}

ojson ClusterJson(const PipelineConfig& c) {
  return ojson{{"t_night", c.t_night ? ojson(*c.t_night) : ojson("auto")},
               {"luminance", LuminanceModeName(c.luminance_mode)}};
}

}  // namespace

std::string PipelineConfig::CanonicalJson() const {
  ojson detectors_json = ojson::array();
  for (const DetectorSpec& d : detectors) detectors_json.push_back(DetectorJson(d));
  ojson j = {{"work_dir", work_dir.generic_string()},
             {"input_dir", input_dir.generic_string()},
             {"class_schema",
              class_schema ? ojson(class_schema->generic_string()) : ojson()},
             {"enhance", AdapterJson(enhance)},
             {"cluster", ClusterJson(*this)},
             {"night_to_day", AdapterJson(night_to_day)},
             {"super_resolution", AdapterJson(super_resolution)},
             {"sr_factor", sr_factor},
             {"fusion", FusionJson(fusion)},
             {"detectors", detectors_json}};
  return j.dump();
}

std::string PipelineConfig::Hash() const { return Fnv1aHex(CanonicalJson()); }

namespace {

class ConfigReader {
 public:
  ConfigReader(const json& doc, fs::path base, std::string_view source)
      : doc_(doc), base_(std::move(base)), source_(source) {}

  [[noreturn]] void Error(std::string_view what) const {
    Fail(ErrorKind::kParse, fmt::format("{}: {}", source_, what));
  }

  void CheckKeys(const json& table, std::string_view where,
                 std::initializer_list<std::string_view> allowed) const {
    for (const auto& [key, _] : table.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        Error(fmt::format("unknown key '{}' in {}", key, where));
      }
    }
  }

  template <typename T>
  T Get(const json& table, std::string_view where, const char* key,
        T fallback) const {
    if (!table.contains(key)) return fallback;
    try {
      return table.at(key).get<T>();
    } catch (const json::exception&) {
      Error(fmt::format("{}.{} has the wrong type", where, key));
    }
  }

  std::string RequireString(const json& table, std::string_view where,
                            const char* key) const {
    if (!table.contains(key) || !table.at(key).is_string()) {
      Error(fmt::format("{}.{} must be a string", where, key));
    }
    return table.at(key).get<std::string>();
  }

  double Number(const json& table, std::string_view where, const char* key,
                double fallback) const {
    if (!table.contains(key)) return fallback;
    if (!table.at(key).is_number()) {
      Error(fmt::format("{}.{} must be a number", where, key));
    }
    return table.at(key).get<double>();
  }

  fs::path Path(const std::string& text) const {
    const fs::path p(text);
    return (p.is_absolute() ? p : base_ / p).lexically_normal();
  }

  std::optional<AdapterSpec> Adapter(const char* section, AdapterStage stage,
                                     std::initializer_list<std::string_view>
                                         extra_keys = {}) const {
    if (!doc_.contains(section) || !doc_.at(section).is_object()) {
      Error(fmt::format("missing [{}] section; give a command or set "
                        "skip = true",
                        section));
    }
    const json& t = doc_.at(section);
    std::vector<std::string_view> keys = {"command", "timeout", "parallelism",
                                          "skip", "tag"};
    keys.insert(keys.end(), extra_keys.begin(), extra_keys.end());
    for (const auto& [key, _] : t.items()) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        Error(fmt::format("unknown key '{}' in [{}]", key, section));
      }
    }
    if (Get<bool>(t, section, "skip", false)) return std::nullopt;
    AdapterSpec spec;
    spec.stage = stage;
    spec.tag = Get<std::string>(t, section, "tag", section);
    spec.command = RequireString(t, section, "command");
    spec.timeout_seconds = Number(t, section, "timeout", spec.timeout_seconds);
    spec.parallelism = Get<int>(t, section, "parallelism", 1);
    return spec;
  }

 private:
  const json& doc_;
  fs::path base_;
  std::string source_;
};

}  // namespace

PipelineConfig ParsePipelineConfig(std::string_view text,
                                   const fs::path& base_dir,
                                   std::string_view source) {
  const json doc = ParseTomlLite(text, source);
  const ConfigReader r(doc, fs::absolute(base_dir), source);
  r.CheckKeys(doc, "the top level",
              {"work_dir", "input_dir", "class_schema", "threads", "enhance",
               "cluster", "night_to_day", "super_resolution", "fusion",
               "detector"});
  PipelineConfig c;
  c.work_dir = r.Path(r.RequireString(doc, "config", "work_dir"));
  c.input_dir = r.Path(r.RequireString(doc, "config", "input_dir"));
  if (doc.contains("class_schema")) {
    c.class_schema = r.Path(r.RequireString(doc, "config", "class_schema"));
  }
  c.threads = r.Get<int>(doc, "config", "threads", 0);

  c.enhance = r.Adapter("enhance", AdapterStage::kEnhance);
  c.night_to_day = r.Adapter("night_to_day", AdapterStage::kNightToDay);
  c.super_resolution = r.Adapter("super_resolution",
                                 AdapterStage::kSuperResolve, {"factor"});
  if (doc.contains("super_resolution")) {
    c.sr_factor =
        r.Number(doc["super_resolution"], "super_resolution", "factor", 4.0);
  }

  if (!doc.contains("cluster")) {
    r.Error("missing [cluster] section; set t_night to a value or \"auto\"");
  }
  const json& cl = doc["cluster"];
  r.CheckKeys(cl, "[cluster]", {"t_night", "luminance"});
  if (!cl.contains("t_night")) {
    r.Error("cluster.t_night is required (a number or \"auto\")");
  }
  if (cl["t_night"].is_string()) {
    if (cl["t_night"] != "auto") r.Error("cluster.t_night must be a number or \"auto\"");
  } else {
    c.t_night = r.Number(cl, "cluster", "t_night", 0);
  }
  c.luminance_mode = ParseLuminanceMode(
      r.Get<std::string>(cl, "cluster", "luminance", "mean"));

  if (doc.contains("fusion")) {
    const json& f = doc["fusion"];
    r.CheckKeys(f, "[fusion]",
                {"iou_threshold", "skip_box_threshold", "score_mode",
                 "rescale"});
    c.fusion.iou_threshold =
        r.Number(f, "fusion", "iou_threshold", c.fusion.iou_threshold);
    c.fusion.skip_box_threshold = r.Number(f, "fusion", "skip_box_threshold",
                                           c.fusion.skip_box_threshold);
    c.fusion.score_mode =
        ParseScoreMode(r.Get<std::string>(f, "fusion", "score_mode", "mean"));
    c.fusion.rescale =
        ParseScoreRescale(r.Get<std::string>(f, "fusion", "rescale", "none"));
  }

  if (doc.contains("detector")) {
    for (const json& d : doc["detector"]) {
      r.CheckKeys(d, "[[detector]]",
                  {"tag", "command", "format", "weight", "use_sr", "timeout",
                   "parallelism"});
      DetectorSpec spec;
      spec.adapter.stage = AdapterStage::kDetect;
      spec.adapter.output = OutputKind::kDetections;
      spec.adapter.tag = r.RequireString(d, "detector", "tag");
      spec.adapter.command = r.RequireString(d, "detector", "command");
      spec.adapter.detection_format = ParseDetectionFormat(
          r.Get<std::string>(d, "detector", "format", "coco"));
      spec.adapter.timeout_seconds =
          r.Number(d, "detector", "timeout", spec.adapter.timeout_seconds);
      spec.adapter.parallelism = r.Get<int>(d, "detector", "parallelism", 1);
      spec.weight = r.Number(d, "detector", "weight", 1.0);
      spec.use_sr = r.Get<bool>(d, "detector", "use_sr", true);
      c.detectors.push_back(std::move(spec));
    }
  }
  c.fusion.model_weights.clear();
  for (const DetectorSpec& d : c.detectors) {
    c.fusion.model_weights.push_back(d.weight);
  }
  try {
    c.Validate();
  } catch (const Error& e) {
    Fail(e.kind(), fmt::format("{}: {}", source, e.what()));
  }
  return c;
}

PipelineConfig LoadPipelineConfig(const fs::path& path) {
  return ParsePipelineConfig(ReadFile(path), path.parent_path(), path.string());
}

// ---------------------------------------------------------------------------
// Adapters.

namespace {

struct Shard {
  int index = 0;
  fs::path in;
  fs::path out;
  fs::path log;
  std::vector<size_t> records;  // indices into the input manifest
};

std::vector<Shard> PlanShards(const AdapterSpec& spec, const Manifest& input,
                              const fs::path& staging,
                              const fs::path& log_dir) {
  const size_t n = input.records.size();
  const size_t count = std::min<size_t>(spec.parallelism, n);
  std::vector<Shard> shards(count);
  for (size_t k = 0; k < count; ++k) {
    Shard& s = shards[k];
    s.index = static_cast<int>(k);
    s.in = staging / fmt::format("shard-{}", k) / "in";
    s.out = staging / fmt::format("shard-{}", k) / "out";
    s.log = log_dir / (count == 1 ? fmt::format("{}.log", spec.tag)
                                  : fmt::format("{}.shard-{}.log", spec.tag, k));
  }
  // Contiguous blocks keep each shard's inputs in manifest order.
  for (size_t i = 0; i < n; ++i) shards[i * count / n].records.push_back(i);
  return shards;
}

std::string StagedName(const ImageRecord& r) {
  return r.image_id + fs::path(r.path).extension().string();
}

// Output images of a shard keyed by stem.
std::unordered_map<std::string, fs::path> ImagesByStem(const fs::path& dir) {
  std::unordered_map<std::string, fs::path> out;
  for (const fs::path& p : ListImages(dir)) out.emplace(p.stem().string(), p);
  return out;
}

}  // namespace

AdapterOutput RunAdapter(const AdapterSpec& spec, const Manifest& input,
                         const fs::path& output_dir,
                         const AdapterContext& context) {
  spec.Validate();
  const std::string stage = std::string(AdapterStageName(spec.stage));
  if (input.records.empty()) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("{} adapter '{}' has no input records", stage, spec.tag));
  }
  const fs::path staging =
      output_dir.parent_path() /
      fmt::format(".{}.staging", output_dir.filename().string());
  ResetDirectory(staging);
  fs::create_directories(context.log_dir);
  std::vector<Shard> shards =
      PlanShards(spec, input, staging, context.log_dir);
  for (Shard& s : shards) {
    fs::create_directories(s.in);
    fs::create_directories(s.out);
    std::error_code ec;
    fs::remove(s.log, ec);
    for (size_t i : s.records) {
      const ImageRecord& r = input.records[i];
      Symlink(r.path, s.in / StagedName(r));
    }
  }

  AdapterOutput result;
  result.runs.resize(shards.size());
  ParallelFor(shards.size(), static_cast<int>(shards.size()), [&](size_t k) {
    const Shard& s = shards[k];
    std::string command = ReplaceAll(spec.command, kInputPlaceholder,
                                     ShellQuote(s.in.string()));
    command = ReplaceAll(command, kOutputPlaceholder, ShellQuote(s.out.string()));
    LogInfo("{} '{}' shard {}: {}", stage, spec.tag, k, command);
    const ProcessResult pr =
        RunShellCommand(command, s.log, spec.timeout_seconds);
    result.runs[k] = {spec.tag,      s.index,
                      pr.exit_code,  pr.timed_out,
                      pr.seconds,    RelativeTo(s.log, context.work_dir)};
  });
  for (size_t k = 0; k < shards.size(); ++k) {
    const AdapterRun& run = result.runs[k];
    if (run.timed_out || run.exit_code != 0) {
      const std::string what =
          run.timed_out ? fmt::format("timed out after {} s", spec.timeout_seconds)
                        : fmt::format("exited with status {}", run.exit_code);
      Fail(ErrorKind::kStage,
           fmt::format("{} adapter '{}' {} (shard {}); log {}:\n{}", stage,
                       spec.tag, what, k, shards[k].log.string(),
                       TailOfFile(shards[k].log, 10)));
    }
  }

  if (spec.output == OutputKind::kImages) {
    std::vector<std::string> missing;
    std::vector<std::pair<size_t, fs::path>> produced;
    for (const Shard& s : shards) {
      const auto outputs = ImagesByStem(s.out);
      for (size_t i : s.records) {
        auto it = outputs.find(input.records[i].image_id);
        if (it == outputs.end()) {
          missing.push_back(input.records[i].image_id);
        } else {
          produced.emplace_back(i, it->second);
        }
      }
    }
    if (!missing.empty()) {
      std::string list;
      for (size_t i = 0; i < missing.size() && i < 10; ++i) {
        list += (i ? ", " : "") + missing[i];
      }
      if (missing.size() > 10) list += fmt::format(" and {} more", missing.size() - 10);
      Fail(ErrorKind::kStage,
           fmt::format("{} adapter '{}' produced no output for {} of {} "
                       "images: {}",
                       stage, spec.tag, missing.size(), input.records.size(),
                       list));
    }
    ResetDirectory(output_dir);
    std::vector<fs::path> files;
    for (auto& [i, path] : produced) {
      const fs::path dest = output_dir / path.filename();
      fs::rename(path, dest);
      files.push_back(dest);
    }
    ManifestBuildOptions opts;
    opts.luminance_mode = context.luminance_mode;
    opts.threads = context.threads;
    opts.stage = stage;
    opts.provenance_tag = "";
    const Manifest decoded = BuildManifestFromFiles(files, opts);
    if (decoded.records.size() != files.size()) {
      Fail(ErrorKind::kStage,
           fmt::format("{} adapter '{}' wrote images that cannot be decoded",
                       stage, spec.tag));
    }
    result.manifest.header = input.header;
    result.manifest.header.stage = stage;
    result.manifest.header.threshold.reset();
    result.manifest.header.luminance_mode = context.luminance_mode;
    for (size_t j = 0; j < produced.size(); ++j) {
      ImageRecord r = input.records[produced[j].first];
      const ImageRecord& d = decoded.records[j];
      r.path = d.path;
      r.dims = d.dims;
      r.stats = d.stats;
      r.provenance.push_back(spec.tag);
      result.manifest.records.push_back(std::move(r));
    }
  } else {
    if (context.schema == nullptr) {
      Fail(ErrorKind::kInvalidArgument, "detect adapters need a class schema");
    }
    const ImageTable table = TableOf(input);
    std::unordered_map<std::string, size_t> order;
    for (size_t i = 0; i < input.records.size(); ++i) {
      order.emplace(input.records[i].image_id, i);
    }
    for (const Shard& s : shards) {
      fs::path source = s.out;
      if (spec.detection_format == DetectionFormat::kCocoResults) {
        source = s.out / kCocoDetectionsFile;
        if (!fs::exists(source)) {
          Fail(ErrorKind::kStage,
               fmt::format("detect adapter '{}' did not write {} (shard {})",
                           spec.tag, kCocoDetectionsFile, s.index));
        }
      }
      try {
        ForEachDetection(source, spec.detection_format,
                         {context.schema, &table, spec.tag},
                         [&](Detection&& d) {
                           result.detections.push_back(std::move(d));
                         });
      } catch (const Error& e) {
        Fail(ErrorKind::kStage,
             fmt::format("detect adapter '{}' output rejected: {}", spec.tag,
                         e.what()));
      }
    }
    std::stable_sort(result.detections.begin(), result.detections.end(),
                     [&](const Detection& a, const Detection& b) {
                       return order.at(a.image_id) < order.at(b.image_id);
                     });
  }
  std::error_code ec;
  fs::remove_all(staging, ec);
  return result;
}

Manifest PrepareFinalDataset(const Manifest& other, const Manifest& daylike) {
  Manifest final_set;
  final_set.header.stage = "final";
  final_set.header.luminance_mode = other.header.luminance_mode;
  std::unordered_map<std::string, std::string> seen;
  auto add = [&](const Manifest& m, const char* branch) {
    for (const ImageRecord& r : m.records) {
      auto [it, inserted] = seen.emplace(r.image_id, branch);
      if (!inserted) {
        Fail(ErrorKind::kDomain,
             fmt::format("image '{}' appears in both the {} and {} branches",
                         r.image_id, it->second, branch));
      }
      ImageRecord copy = r;
      copy.provenance.push_back(branch);
      final_set.records.push_back(std::move(copy));
    }
  };
  add(other, "other");
  add(daylike, "daylike");
  return final_set;
}

std::vector<Detection> RemapSrDetections(std::span<const Detection> detections,
                                         double sr_factor,
                                         const ImageTable& original) {
  if (!(sr_factor > 0) || !std::isfinite(sr_factor)) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("super-resolution factor {} must be positive", sr_factor));
  }
  std::vector<Detection> out;
  out.reserve(detections.size());
  for (const Detection& d : detections) {
    Detection r = d;
    r.box = ClipBox(sr_factor == 1.0 ? d.box : ScaleBox(d.box, 1.0 / sr_factor),
                    original.DimsOf(d.image_id));
    out.push_back(std::move(r));
  }
  return out;
}

std::string FusionProvenanceJson(const FusionConfig& config,
                                 std::span<const FusionSource> sources) {
  ojson inputs = ojson::array();
  for (const FusionSource& s : sources) {
    inputs.push_back({{"tag", s.tag}, {"path", s.path}, {"weight", s.weight}});
  }
  ojson j = {{"method", "weighted_box_fusion"},
             {"config", FusionJson(config)},
             {"inputs", inputs}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Run record.

namespace {

constexpr StageId kStageOrder[kNumStages] = {
    StageId::kEnhance,      StageId::kCluster,         StageId::kNightToDay,
    StageId::kPrepareFinal, StageId::kSuperResolution, StageId::kDetect,
    StageId::kFuse};

constexpr StageStatus kAllStatuses[] = {
    StageStatus::kPending, StageStatus::kRunning, StageStatus::kComplete,
    StageStatus::kSkipped, StageStatus::kFailed};

}  // namespace

std::string_view StageName(StageId id) {
  switch (id) {
    case StageId::kEnhance:
      return "enhance";
    case StageId::kCluster:
      return "cluster";
    case StageId::kNightToDay:
      return "night_to_day";
    case StageId::kPrepareFinal:
      return "prepare_final";
    case StageId::kSuperResolution:
      return "super_resolution";
    case StageId::kDetect:
      return "detect";
    case StageId::kFuse:
      return "fuse";
  }
  return "?";
}

std::string_view StageStatusName(StageStatus status) {
  switch (status) {
    case StageStatus::kPending:
      return "pending";
    case StageStatus::kRunning:
      return "running";
    case StageStatus::kComplete:
      return "complete";
    case StageStatus::kSkipped:
      return "skipped";
    case StageStatus::kFailed:
      return "failed";
  }
  return "?";
}

int RunRecord::CountStatus(StageStatus s) const {
  return static_cast<int>(std::count_if(
      stages.begin(), stages.end(),
      [s](const StageRecord& r) { return r.status == s; }));
}

std::string RunRecordToJson(const RunRecord& record) {
  ojson stages = ojson::array();
  for (const StageRecord& s : record.stages) {
    ojson runs = ojson::array();
    for (const AdapterRun& r : s.runs) {
      runs.push_back({{"tag", r.tag},
                      {"shard", r.shard},
                      {"exit_code", r.exit_code},
                      {"timed_out", r.timed_out},
                      {"seconds", r.seconds},
                      {"log", r.log}});
    }
    stages.push_back({{"stage", StageName(s.id)},
                      {"status", StageStatusName(s.status)},
                      {"input_key", s.input_key},
                      {"output_hash", s.output_hash},
                      {"outputs", s.outputs},
                      {"records", s.records},
                      {"seconds", s.seconds},
                      {"message", s.message},
                      {"runs", runs}});
  }
  ojson j = {{"config_hash", record.config_hash},
             {"status", record.status},
             {"stages", stages}};
  return j.dump(2) + "\n";
}

RunRecord RunRecordFromJson(std::string_view text, std::string_view source) {
  auto bad = [&](std::string_view what) {
    Fail(ErrorKind::kParse, fmt::format("{}: {}", source, what));
  };
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    bad(e.what());
  }
  RunRecord record;
  try {
    record.config_hash = j.at("config_hash").get<std::string>();
    record.status = j.at("status").get<std::string>();
    const json& stages = j.at("stages");
    if (!stages.is_array() || stages.size() != kNumStages) {
      bad(fmt::format("expected {} stages", kNumStages));
    }
    for (int k = 0; k < kNumStages; ++k) {
      const json& s = stages[k];
      StageRecord r;
      r.id = kStageOrder[k];
      if (s.at("stage").get<std::string>() != StageName(r.id)) {
        bad(fmt::format("stage #{} should be '{}'", k + 1, StageName(r.id)));
      }
      const std::string status = s.at("status").get<std::string>();
      auto it = std::find_if(
          std::begin(kAllStatuses), std::end(kAllStatuses),
          [&](StageStatus st) { return StageStatusName(st) == status; });
      if (it == std::end(kAllStatuses)) {
        bad(fmt::format("unknown stage status '{}'", status));
      }
      r.status = *it;
      r.input_key = s.at("input_key").get<std::string>();
      r.output_hash = s.at("output_hash").get<std::string>();
      r.outputs = s.at("outputs").get<std::vector<std::string>>();
      r.records = s.at("records").get<std::int64_t>();
      r.seconds = s.at("seconds").get<double>();
      r.message = s.at("message").get<std::string>();
      for (const json& run : s.at("runs")) {
        r.runs.push_back({run.at("tag").get<std::string>(),
                          run.at("shard").get<int>(),
                          run.at("exit_code").get<int>(),
                          run.at("timed_out").get<bool>(),
                          run.at("seconds").get<double>(),
                          run.at("log").get<std::string>()});
      }
      record.stages.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    bad(e.what());
  }
  return record;
}

// ---------------------------------------------------------------------------
// Orchestration.

namespace {

constexpr char kRunRecordFile[] = "run.json";
constexpr char kRawManifest[] = "manifests/raw.jsonl";
constexpr char kRawKey[] = "manifests/raw.key";
constexpr char kEnhancedManifest[] = "manifests/enhanced.jsonl";
constexpr char kNightManifest[] = "manifests/night.jsonl";
constexpr char kOtherManifest[] = "manifests/other.jsonl";
constexpr char kDaylikeManifest[] = "manifests/daylike.jsonl";
constexpr char kFinalManifest[] = "manifests/final.jsonl";
constexpr char kSrManifest[] = "manifests/sr.jsonl";
constexpr char kScatterCsv[] = "reports/illumination.csv";
constexpr char kFusedDetections[] = "fused/detections.json";

// Settings that change what an adapter produces; timeouts and parallelism
// do not.
ojson AdapterKey(const std::optional<AdapterSpec>& spec) {
  if (!spec) return ojson{{"skip", true}};
  return ojson{{"tag", spec->tag},
               {"command", spec->command},
               {"format", DetectionFormatName(spec->detection_format)}};
}

struct StageResult {
  std::vector<std::string> outputs;
  std::int64_t records = 0;
  std::vector<AdapterRun> runs;
  std::string message;
  bool skipped = false;
};

class Orchestrator {
 public:
  Orchestrator(const PipelineConfig& config, const OrchestrateOptions& options)
      : config_(config), options_(options) {}

  RunRecord Run() {
    config_.Validate();
    fs::create_directories(config_.work_dir);
    schema_ = config_.class_schema ? LoadClassSchema(*config_.class_schema)
                                   : ClassSchema::Default();
    schema_key_ = config_.class_schema ? ReadFile(*config_.class_schema) : "";
    LoadPrevious();
    record_.config_hash = config_.Hash();
    record_.status = "running";
    for (StageId id : kStageOrder) {
      StageRecord rec;
      rec.id = id;
      record_.stages.push_back(std::move(rec));
    }
    Save();

    try {
      PrepareRaw();
    } catch (const std::exception&) {
      record_.status = "failed";
      Save();
      throw;
    }
    Stage(StageId::kEnhance,
          {AdapterKey(config_.enhance), raw_key_,
           LuminanceModeName(config_.luminance_mode)},
          [this] { return Enhance(); });
    Stage(StageId::kCluster, {ClusterJson(config_), Hash(StageId::kEnhance)},
          [this] { return ClusterStage(); });
    Stage(StageId::kNightToDay,
          {AdapterKey(config_.night_to_day), Hash(StageId::kCluster)},
          [this] { return NightToDay(); });
    Stage(StageId::kPrepareFinal,
          {Hash(StageId::kCluster), Hash(StageId::kNightToDay)},
          [this] { return PrepareFinal(); });
    Stage(StageId::kSuperResolution,
          {AdapterKey(config_.super_resolution), config_.sr_factor,
           Hash(StageId::kPrepareFinal)},
          [this] { return SuperResolution(); });
    ojson detectors = ojson::array();
    for (const DetectorSpec& d : config_.detectors) {
      detectors.push_back(
          {AdapterKey(d.adapter), d.use_sr, d.adapter.output == OutputKind::kImages});
    }
    Stage(StageId::kDetect,
          {detectors, schema_key_, Hash(StageId::kPrepareFinal),
           Hash(StageId::kSuperResolution), config_.sr_factor},
          [this] { return Detect(); });
    ojson weights = ojson::array();
    for (const DetectorSpec& d : config_.detectors) weights.push_back(d.weight);
    Stage(StageId::kFuse,
          {FusionJson(config_.fusion), weights, Hash(StageId::kDetect)},
          [this] { return Fuse(); });

    record_.status = "complete";
    Save();
    return record_;
  }

 private:
  fs::path W(std::string_view rel) const { return config_.work_dir / rel; }

  StageRecord& At(StageId id) { return record_.stages[static_cast<int>(id)]; }
  std::string Hash(StageId id) { return At(id).output_hash; }

  AdapterContext Context(StageId id) const {
    return {config_.work_dir, W("logs") / StageName(id), &schema_,
            config_.luminance_mode, config_.threads};
  }

  void Save() {
    WriteFileAtomic(W(kRunRecordFile), RunRecordToJson(record_));
  }

  void LoadPrevious() {
    const fs::path path = W(kRunRecordFile);
    if (!fs::exists(path)) return;
    try {
      previous_ = RunRecordFromJson(ReadFile(path), path.string());
    } catch (const Error& e) {
      LogWarning("ignoring unreadable run record: {}", e.what());
    }
  }

  // Names and sizes of directory entries (symlink targets for links);
  // full contents for regular files.
  std::string OutputHash(const std::vector<std::string>& outputs) const {
    std::string material;
    for (const std::string& rel : outputs) {
      const fs::path p = W(rel);
      material += rel + '\n';
      std::error_code ec;
      const fs::file_status st = fs::symlink_status(p, ec);
      if (ec || !fs::exists(st)) {
        material += "missing\n";
      } else if (fs::is_directory(st)) {
        std::vector<std::string> entries;
        for (const auto& e : fs::directory_iterator(p)) {
          std::string line = e.path().filename().string();
          if (e.is_symlink()) {
            line += " -> " + fs::read_symlink(e.path()).string();
          } else if (e.is_regular_file()) {
            line += fmt::format(" {}", e.file_size());
          }
          entries.push_back(std::move(line));
        }
        std::sort(entries.begin(), entries.end());
        for (const std::string& e : entries) material += e + '\n';
      } else {
        material += Fnv1aHex(ReadFile(p)) + '\n';
      }
    }
    return Fnv1aHex(material);
  }

  void Stage(StageId id, const ojson& key_material,
             const std::function<StageResult()>& body) {
    StageRecord& rec = At(id);
    const std::string input_key = Fnv1aHex(key_material.dump());
    if (!options_.force && previous_) {
      const StageRecord& prev = previous_->stages[static_cast<int>(id)];
      if ((prev.status == StageStatus::kComplete ||
           prev.status == StageStatus::kSkipped) &&
          prev.input_key == input_key && !prev.output_hash.empty() &&
          OutputHash(prev.outputs) == prev.output_hash) {
        rec = prev;
        LogInfo("stage {}: up to date", StageName(id));
        Save();
        return;
      }
    }
    rec = StageRecord();
    rec.id = id;
    rec.status = StageStatus::kRunning;
    rec.input_key = input_key;
    Save();
    LogInfo("stage {}: running", StageName(id));
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           start)
          .count();
    };
    StageResult result;
    try {
      result = body();
    } catch (const std::exception& e) {
      rec.status = StageStatus::kFailed;
      rec.message = e.what();
      rec.seconds = elapsed();
      record_.status = "failed";
      Save();
      Fail(ErrorKind::kStage,
           fmt::format("stage {} failed: {}", StageName(id), e.what()));
    }
    rec.status = result.skipped ? StageStatus::kSkipped : StageStatus::kComplete;
    rec.outputs = std::move(result.outputs);
    rec.records = result.records;
    rec.runs = std::move(result.runs);
    rec.message = std::move(result.message);
    rec.output_hash = OutputHash(rec.outputs);
    rec.seconds = elapsed();
    Save();
    LogInfo("stage {}: {} ({} records)", StageName(id),
            StageStatusName(rec.status), rec.records);
  }

  void PrepareRaw() {
    const std::vector<fs::path> files = ListImages(config_.input_dir);
    if (files.empty()) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("no images in '{}'", config_.input_dir.string()));
    }
    std::string listing =
        fmt::format("{}\n", LuminanceModeName(config_.luminance_mode));
    for (const fs::path& f : files) {
      listing += fmt::format(
          "{}\t{}\t{}\n", fs::absolute(f).string(), fs::file_size(f),
          fs::last_write_time(f).time_since_epoch().count());
    }
    raw_key_ = Fnv1aHex(listing);
    fs::create_directories(W("manifests"));
    if (fs::exists(W(kRawKey)) && fs::exists(W(kRawManifest)) &&
        ReadFile(W(kRawKey)) == raw_key_) {
      return;
    }
    std::vector<fs::path> absolute;
    for (const fs::path& f : files) absolute.push_back(fs::absolute(f));
    Manifest raw = BuildManifestFromFiles(
        absolute, {config_.luminance_mode, config_.threads, "raw", "raw"});
    if (raw.records.empty()) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("no decodable images in '{}'",
                       config_.input_dir.string()));
    }
    WriteManifest(raw, W(kRawManifest));
    WriteFileAtomic(W(kRawKey), raw_key_);
  }

  Manifest Read(std::string_view rel) const { return ReadManifest(W(rel)); }

  Manifest Fresh(std::string_view stage) const {
    Manifest m;
    m.header.stage = stage;
    m.header.luminance_mode = config_.luminance_mode;
    return m;
  }

  static void RemoveIfPresent(const fs::path& p) {
    std::error_code ec;
    fs::remove_all(p, ec);
  }

  StageResult Enhance() {
    StageResult r;
    Manifest out = Fresh("enhanced");
    const Manifest raw = Read(kRawManifest);
    if (!config_.enhance) {
      RemoveIfPresent(W("enhanced"));
      out.records = raw.records;
      r.skipped = true;
      r.message = "skipped by config; raw images pass through";
    } else {
      AdapterOutput a = RunAdapter(*config_.enhance, raw, W("enhanced"),
                                   Context(StageId::kEnhance));
      out.records = std::move(a.manifest.records);
      r.runs = std::move(a.runs);
    }
    WriteManifest(out, W(kEnhancedManifest));
    r.records = static_cast<std::int64_t>(out.records.size());
    r.outputs = {kEnhancedManifest, "enhanced"};
    return r;
  }

  StageResult ClusterStage() {
    const Manifest enhanced = Read(kEnhancedManifest);
    const NightThreshold t = config_.t_night
                                 ? NightThreshold::Create(*config_.t_night)
                                 : AutoThreshold(enhanced.records);
    IlluminationPartition part =
        ClusterByIllumination(enhanced.records, t);
    Manifest night = Fresh("night");
    Manifest other = Fresh("other");
    night.header.threshold = other.header.threshold = t.value();
    night.records = part.night;
    other.records = part.other;
    MaterializeLinks(night, W("night"));
    WriteManifest(night, W(kNightManifest));
    WriteManifest(other, W(kOtherManifest));

    std::unordered_map<std::string, Cluster> cluster_of;
    for (const auto& rec : part.night) cluster_of[rec.image_id] = Cluster::kNight;
    for (const auto& rec : part.other) cluster_of[rec.image_id] = Cluster::kOther;
    std::vector<ImageRecord> all = enhanced.records;
    for (ImageRecord& rec : all) rec.cluster = cluster_of.at(rec.image_id);
    fs::create_directories(W("reports"));
    ExportScatter(all, W(kScatterCsv));

    StageResult r;
    r.records = static_cast<std::int64_t>(all.size());
    r.message = fmt::format("T_night {}{}: {} night, {} other",
                            FormatDouble(t.value()),
                            config_.t_night ? "" : " (auto)", part.night.size(),
                            part.other.size());
    r.outputs = {kNightManifest, kOtherManifest, "night", kScatterCsv};
    return r;
  }

  StageResult NightToDay() {
    StageResult r;
    const Manifest night = Read(kNightManifest);
    Manifest day = Fresh("daylike");
    if (!config_.night_to_day) {
      RemoveIfPresent(W("daylike"));
      day.records = night.records;
      r.skipped = true;
      r.message = "skipped by config; night images pass through";
    } else if (night.records.empty()) {
      ResetDirectory(W("daylike"));
      r.message = "empty input";
    } else {
      AdapterOutput a = RunAdapter(*config_.night_to_day, night, W("daylike"),
                                   Context(StageId::kNightToDay));
      day.records = std::move(a.manifest.records);
      r.runs = std::move(a.runs);
    }
    WriteManifest(day, W(kDaylikeManifest));
    r.records = static_cast<std::int64_t>(day.records.size());
    r.outputs = {kDaylikeManifest, "daylike"};
    return r;
  }

  StageResult PrepareFinal() {
    Manifest final_set =
        PrepareFinalDataset(Read(kOtherManifest), Read(kDaylikeManifest));
    final_set.header.luminance_mode = config_.luminance_mode;
    MaterializeLinks(final_set, W("final"));
    WriteManifest(final_set, W(kFinalManifest));
    StageResult r;
    r.records = static_cast<std::int64_t>(final_set.records.size());
    r.outputs = {kFinalManifest, "final"};
    return r;
  }

  StageResult SuperResolution() {
    StageResult r;
    const Manifest final_set = Read(kFinalManifest);
    Manifest sr = Fresh("sr");
    if (!config_.super_resolution) {
      RemoveIfPresent(W("sr"));
      sr.records = final_set.records;
      r.skipped = true;
      r.message = "skipped by config; detectors see the final images";
    } else {
      AdapterOutput a = RunAdapter(*config_.super_resolution, final_set,
                                   W("sr"), Context(StageId::kSuperResolution));
      for (size_t i = 0; i < a.manifest.records.size(); ++i) {
        const ImageRecord& in = final_set.records[i];
        const ImageRecord& out = a.manifest.records[i];
        const double ew = in.dims.width * config_.sr_factor;
        const double eh = in.dims.height * config_.sr_factor;
        if (std::abs(out.dims.width - ew) > 1 ||
            std::abs(out.dims.height - eh) > 1) {
          Fail(ErrorKind::kStage,
               fmt::format("super-resolved '{}' is {}x{}; expected {}x{} "
                           "for factor {}",
                           out.image_id, out.dims.width, out.dims.height,
                           FormatDouble(ew), FormatDouble(eh),
                           FormatDouble(config_.sr_factor)));
        }
      }
      sr.records = std::move(a.manifest.records);
      r.runs = std::move(a.runs);
    }
    WriteManifest(sr, W(kSrManifest));
    r.records = static_cast<std::int64_t>(sr.records.size());
    r.outputs = {kSrManifest, "sr"};
    return r;
  }

  std::string DetectionsFile(const DetectorSpec& d) const {
    return fmt::format("dets/{}/{}", d.adapter.tag, kCocoDetectionsFile);
  }

  StageResult Detect() {
    StageResult r;
    const Manifest final_set = Read(kFinalManifest);
    const ImageTable original = TableOf(final_set);
    const bool sr_ran = config_.super_resolution.has_value();
    std::optional<Manifest> sr;
    if (sr_ran) sr = Read(kSrManifest);
    for (const DetectorSpec& d : config_.detectors) {
      const bool use_sr = sr_ran && d.use_sr;
      const fs::path dir = W("dets") / d.adapter.tag;
      AdapterOutput a = RunAdapter(d.adapter, use_sr ? *sr : final_set, dir,
                                   Context(StageId::kDetect));
      const std::vector<Detection> remapped = RemapSrDetections(
          a.detections, use_sr ? config_.sr_factor : 1.0, original);
      fs::create_directories(dir);
      WriteDetections(remapped, W(DetectionsFile(d)),
                      DetectionFormat::kCocoResults);
      r.records += static_cast<std::int64_t>(remapped.size());
      r.outputs.push_back(DetectionsFile(d));
      r.runs.insert(r.runs.end(), a.runs.begin(), a.runs.end());
      r.message += fmt::format("{}{}: {} detections{}",
                               r.message.empty() ? "" : "; ", d.adapter.tag,
                               remapped.size(), use_sr ? " (remapped)" : "");
    }
    return r;
  }

  StageResult Fuse() {
    const ImageTable original = TableOf(Read(kFinalManifest));
    std::vector<std::vector<Detection>> per_model;
    std::vector<FusionSource> sources;
    for (const DetectorSpec& d : config_.detectors) {
      per_model.push_back(ParseDetections(W(DetectionsFile(d)),
                                          DetectionFormat::kCocoResults,
                                          {&schema_, &original, d.adapter.tag}));
      sources.push_back({d.adapter.tag, DetectionsFile(d), d.weight});
    }
    const std::vector<Detection> fused =
        FuseDataset(per_model, config_.fusion, config_.threads);
    fs::create_directories(W("fused"));
    WriteDetections(fused, W(kFusedDetections), DetectionFormat::kCocoResults);
    const std::string sidecar = std::string(kFusedDetections) + ".provenance.json";
    WriteFileAtomic(W(sidecar), FusionProvenanceJson(config_.fusion, sources));
    StageResult r;
    r.records = static_cast<std::int64_t>(fused.size());
    r.outputs = {kFusedDetections, sidecar};
    return r;
  }

  const PipelineConfig& config_;
  OrchestrateOptions options_;
  ClassSchema schema_ = ClassSchema::Default();
  std::string schema_key_;
  std::string raw_key_;
  RunRecord record_;
  std::optional<RunRecord> previous_;
};

}  // namespace

RunRecord Orchestrate(const PipelineConfig& config,
                      const OrchestrateOptions& options) {
  return Orchestrator(config, options).Run();
}

}  // namespace fisheye
