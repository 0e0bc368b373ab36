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
#ifndef FISHEYE_PIPELINE_H_
#define FISHEYE_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fisheye/formats.h"
#include "fisheye/fusion.h"
#include "fisheye/illumination.h"

namespace fisheye {

enum class AdapterStage { kEnhance, kNightToDay, kSuperResolve, kDetect };
enum class OutputKind { kImages, kDetections };

std::string_view AdapterStageName(AdapterStage stage);

// An external command realizing one neural stage. The command reads images
// from {input_dir} and writes images or detections into {output_dir}.
struct AdapterSpec {
  AdapterStage stage = AdapterStage::kEnhance;
  std::string tag;  // provenance tag; detector name for detect stages
  std::string command;
  OutputKind output = OutputKind::kImages;
  // Detect stages: COCO results in {output_dir}/detections.json, or YOLO
  // label files directly in {output_dir}.
  DetectionFormat detection_format = DetectionFormat::kCocoResults;
  double timeout_seconds = 86400;
  int parallelism = 1;

  // Both placeholders present, timeout > 0, parallelism >= 1.
  void Validate() const;
};

struct DetectorSpec {
  AdapterSpec adapter;
  double weight = 1.0;
  bool use_sr = true;
};

struct PipelineConfig {
  std::filesystem::path work_dir;
  std::filesystem::path input_dir;
  std::optional<std::filesystem::path> class_schema;
  int threads = 0;

  // nullopt means the stage is explicitly skipped.
  std::optional<AdapterSpec> enhance;
  std::optional<AdapterSpec> night_to_day;
  std::optional<AdapterSpec> super_resolution;

  std::optional<double> t_night;  // nullopt: automatic threshold
  LuminanceMode luminance_mode = LuminanceMode::kChannelMean;
  double sr_factor = 4.0;
  FusionConfig fusion;  // model weights come from the detectors
  std::vector<DetectorSpec> detectors;

  void Validate() const;
  // Stable JSON rendering of every setting; the config hash covers it.
  std::string CanonicalJson() const;
  std::string Hash() const;
};

// Relative paths resolve against `base_dir`.
PipelineConfig ParsePipelineConfig(std::string_view text,
                                   const std::filesystem::path& base_dir,
                                   std::string_view source);
PipelineConfig LoadPipelineConfig(const std::filesystem::path& path);

struct AdapterRun {
  std::string tag;
  int shard = 0;
  int exit_code = 0;
  bool timed_out = false;
  double seconds = 0;
  std::string log;  // relative to the work directory
};

struct AdapterOutput {
  Manifest manifest;                // image stages
  std::vector<Detection> detections;  // detect stages, input-record order
  std::vector<AdapterRun> runs;
};

struct AdapterContext {
  std::filesystem::path work_dir;
  std::filesystem::path log_dir;
  const ClassSchema* schema = nullptr;
  LuminanceMode luminance_mode = LuminanceMode::kChannelMean;
  int threads = 0;
};

// Stages the input records into shard directories (symlinks named
// <image_id><ext>), runs the command once per shard, and verifies the
// outputs: one image per input (matched by file stem) for image stages,
// a parseable detection set for detect stages. Image outputs land in
// `output_dir` and their records gain the adapter tag. Throws kStage on a
// nonzero exit, timeout or missing output; kInvalidArgument on an empty
// input.
AdapterOutput RunAdapter(const AdapterSpec& spec, const Manifest& input,
                         const std::filesystem::path& output_dir,
                         const AdapterContext& context);

// Disjoint union of the two branches; each record's provenance names its
// branch. Throws kDomain naming an image present in both.
Manifest PrepareFinalDataset(const Manifest& other, const Manifest& daylike);

// Divides every box by `sr_factor`, then clips to the original image.
// Throws kInvalidArgument for a non-positive factor and kReferential for an
// image missing from `original`.
std::vector<Detection> RemapSrDetections(std::span<const Detection> detections,
                                         double sr_factor,
                                         const ImageTable& original);

enum class StageId {
  kEnhance,
  kCluster,
  kNightToDay,
  kPrepareFinal,
  kSuperResolution,
  kDetect,
  kFuse,
};
inline constexpr int kNumStages = 7;

std::string_view StageName(StageId id);

enum class StageStatus { kPending, kRunning, kComplete, kSkipped, kFailed };
std::string_view StageStatusName(StageStatus status);

struct StageRecord {
  StageId id = StageId::kEnhance;
  StageStatus status = StageStatus::kPending;
  std::string input_key;    // hash of the stage settings and its inputs
  std::string output_hash;  // hash of everything the stage wrote
  std::vector<std::string> outputs;  // relative to the work directory
  std::int64_t records = 0;
  std::vector<AdapterRun> runs;
  double seconds = 0;
  std::string message;
};

struct RunRecord {
  std::string config_hash;
  std::string status;  // "complete", "failed" or "running"
  std::vector<StageRecord> stages;  // always in procedure order

  int CountStatus(StageStatus status) const;
};

std::string RunRecordToJson(const RunRecord& record);
RunRecord RunRecordFromJson(std::string_view text, std::string_view source);

struct OrchestrateOptions {
  // Re-run every stage even when its recorded outputs are intact.
  bool force = false;
};

// Runs the procedure in order: enhance, cluster, night_to_day,
// prepare_final, super_resolution, detect (with remap), fuse. A stage whose
// recorded inputs and outputs are unchanged is not re-run. The RunRecord is
// rewritten atomically at <work_dir>/run.json after every transition; a
// failure throws kStage after recording it.
RunRecord Orchestrate(const PipelineConfig& config,
                      const OrchestrateOptions& options = {});

struct FusionSource {
  std::string tag;
  std::string path;
  double weight = 1.0;
};

// Sidecar document describing how a fused detection file was produced.
std::string FusionProvenanceJson(const FusionConfig& config,
                                 std::span<const FusionSource> sources);

// 64-bit FNV-1a as 16 hex digits.
std::string Fnv1aHex(std::string_view data);

}  // namespace fisheye

#endif  // FISHEYE_PIPELINE_H_
