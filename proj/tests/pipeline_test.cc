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
#include <fstream>
#include <random>
#include <set>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "fisheye/error.h"
#include "fisheye/image_io.h"
#include "fisheye/process.h"
#include "fisheye/toml_lite.h"
#include "json.hpp"
#include "pipeline_fixture.h"
#include "test_util.h"

namespace fisheye {
namespace {

namespace fs = std::filesystem;
using ::fisheye::testing::CountLines;
using ::fisheye::testing::DryRunSetup;
using ::fisheye::testing::TempDir;
using ::fisheye::testing::WriteSyntheticImages;
using ::fisheye::testing::WriteText;
using ::testing::HasSubstr;

template <typename Fn>
ErrorKind KindOf(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kInvalidArgument;
}

template <typename Fn>
std::string MessageOf(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  ADD_FAILURE() << "no error thrown";
  return "";
}

// ---------------------------------------------------------------------------
// TOML subset.

TEST(TomlLiteTest, ParsesTablesArraysAndScalars) {
  const auto doc = ParseTomlLite(R"(# comment
name = "a \"quoted\" value"  # trailing
path = 'C:\raw'
count = 1_000
ratio = -0.25
flag = true
list = [1, 2, 3,]

[section]
key = "x"

[[item]]
tag = "first"

[[item]]
tag = "second"
)",
                                 "test.toml");
  EXPECT_EQ(doc["name"], "a \"quoted\" value");
  EXPECT_EQ(doc["path"], "C:\\raw");
  EXPECT_EQ(doc["count"], 1000);
  EXPECT_DOUBLE_EQ(doc["ratio"].get<double>(), -0.25);
  EXPECT_EQ(doc["flag"], true);
  EXPECT_EQ(doc["list"].size(), 3u);
  EXPECT_EQ(doc["section"]["key"], "x");
  ASSERT_EQ(doc["item"].size(), 2u);
  EXPECT_EQ(doc["item"][1]["tag"], "second");
}

TEST(TomlLiteTest, ErrorsNameTheLine) {
  EXPECT_THAT(MessageOf([] { ParseTomlLite("a = 1\na = 2\n", "x.toml"); }),
              HasSubstr("x.toml:2"));
  EXPECT_EQ(KindOf([] { ParseTomlLite("a = \n", "x.toml"); }),
            ErrorKind::kParse);
  EXPECT_EQ(KindOf([] { ParseTomlLite("a = \"open\n", "x.toml"); }),
            ErrorKind::kParse);
  EXPECT_EQ(KindOf([] { ParseTomlLite("[t]\n[t]\n", "x.toml"); }),
            ErrorKind::kParse);
  EXPECT_EQ(KindOf([] { ParseTomlLite("a.b = 1\n", "x.toml"); }),
            ErrorKind::kParse);
}

// ---------------------------------------------------------------------------
// Configuration.

constexpr char kMinimalConfig[] = R"(work_dir = "work"
input_dir = "images"

[enhance]
skip = true

[cluster]
t_night = "auto"

[night_to_day]
skip = true

[super_resolution]
skip = true

[[detector]]
tag = "only"
command = "run {input_dir} {output_dir}"
)";

TEST(PipelineConfigTest, ResolvesPathsAndDefaults) {
  const PipelineConfig c = ParsePipelineConfig(kMinimalConfig, "/base", "c");
  EXPECT_EQ(c.work_dir, fs::path("/base/work"));
  EXPECT_EQ(c.input_dir, fs::path("/base/images"));
  EXPECT_FALSE(c.t_night.has_value());
  EXPECT_FALSE(c.enhance.has_value());
  EXPECT_DOUBLE_EQ(c.sr_factor, 4.0);
  ASSERT_EQ(c.detectors.size(), 1u);
  EXPECT_EQ(c.detectors[0].adapter.detection_format,
            DetectionFormat::kCocoResults);
  EXPECT_EQ(c.fusion.model_weights, std::vector<double>{1.0});
}

TEST(PipelineConfigTest, FullDryRunConfigParses) {
  DryRunSetup s{.root = "/tmp/x"};
  const PipelineConfig c =
      ParsePipelineConfig(testing::DryRunConfigText(s), "/tmp/x", "dry");
  ASSERT_TRUE(c.enhance.has_value());
  EXPECT_EQ(c.enhance->tag, "enhance");
  EXPECT_DOUBLE_EQ(*c.t_night, 100);
  EXPECT_EQ(c.super_resolution->parallelism, 2);
  EXPECT_EQ(c.detectors[1].adapter.detection_format,
            DetectionFormat::kYoloTxtDir);
  EXPECT_EQ(c.fusion.model_weights, (std::vector<double>{2.0, 1.0}));
}

TEST(PipelineConfigTest, StagesMustBePresentOrSkipped) {
  std::string text = kMinimalConfig;
  text.erase(text.find("[enhance]"), std::string("[enhance]\nskip = true\n").size());
  EXPECT_THAT(MessageOf([&] { ParsePipelineConfig(text, "/", "c"); }),
              HasSubstr("[enhance]"));
}

TEST(PipelineConfigTest, RejectsBadSettings) {
  auto with = [](std::string_view extra) {
    return std::string(kMinimalConfig) + std::string(extra);
  };
  // Unknown key, duplicate tag, missing placeholder, bad factor.
  EXPECT_EQ(KindOf([&] { ParsePipelineConfig(with("bogus = 1\n"), "/", "c"); }),
            ErrorKind::kParse);
  EXPECT_THAT(MessageOf([&] {
                ParsePipelineConfig(
                    with("[[detector]]\ntag = \"only\"\ncommand = "
                         "\"x {input_dir} {output_dir}\"\n"),
                    "/", "c");
              }),
              HasSubstr("used twice"));
  EXPECT_THAT(MessageOf([&] {
                ParsePipelineConfig(
                    with("[[detector]]\ntag = \"b\"\ncommand = \"x\"\n"), "/",
                    "c");
              }),
              HasSubstr("{input_dir}"));
  std::string sr = kMinimalConfig;
  sr.replace(sr.find("[super_resolution]\nskip = true"),
             std::string("[super_resolution]\nskip = true").size(),
             "[super_resolution]\ncommand = \"u {input_dir} {output_dir}\"\n"
             "factor = 0");
  EXPECT_EQ(KindOf([&] { ParsePipelineConfig(sr, "/", "c"); }),
            ErrorKind::kInvalidArgument);
  std::string t = kMinimalConfig;
  t.replace(t.find("\"auto\""), 6, "300");
  EXPECT_EQ(KindOf([&] { ParsePipelineConfig(t, "/", "c"); }),
            ErrorKind::kDomain);
}

TEST(PipelineConfigTest, HashTracksSettings) {
  const PipelineConfig a = ParsePipelineConfig(kMinimalConfig, "/b", "c");
  PipelineConfig b = ParsePipelineConfig(kMinimalConfig, "/b", "c");
  EXPECT_EQ(a.Hash(), b.Hash());
  EXPECT_EQ(a.Hash().size(), 16u);
  b.fusion.iou_threshold = 0.6;
  EXPECT_NE(a.Hash(), b.Hash());
}

TEST(AdapterSpecTest, Validates) {
  AdapterSpec spec{.tag = "t", .command = "cp {input_dir} {output_dir}"};
  EXPECT_NO_THROW(spec.Validate());
  spec.timeout_seconds = 0;
  EXPECT_EQ(KindOf([&] { spec.Validate(); }), ErrorKind::kInvalidArgument);
  spec.timeout_seconds = 1;
  spec.parallelism = 0;
  EXPECT_EQ(KindOf([&] { spec.Validate(); }), ErrorKind::kInvalidArgument);
  spec.parallelism = 1;
  spec.command = "cp {input_dir} out";
  EXPECT_EQ(KindOf([&] { spec.Validate(); }), ErrorKind::kInvalidArgument);
}

TEST(Fnv1aTest, KnownValues) {
  EXPECT_EQ(Fnv1aHex(""), "cbf29ce484222325");
  EXPECT_EQ(Fnv1aHex("a"), "af63dc4c8601ec8c");
}

// ---------------------------------------------------------------------------
// Processes.

TEST(ProcessTest, ExitCodeAndLog) {
  TempDir dir;
  const ProcessResult r =
      RunShellCommand("echo hello; echo oops >&2; exit 3", dir / "log", 10);
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_FALSE(r.timed_out);
  EXPECT_EQ(TailOfFile(dir / "log", 10), "hello\noops\n");
  EXPECT_EQ(TailOfFile(dir / "log", 1), "oops\n");
}

TEST(ProcessTest, TimeoutKillsTheGroup) {
  TempDir dir;
  const ProcessResult r =
      RunShellCommand("sleep 30 & sleep 30; wait", dir / "log", 0.3);
  EXPECT_TRUE(r.timed_out);
  EXPECT_LT(r.seconds, 5);
}

TEST(ProcessTest, ShellQuoteSurvivesTheShell) {
  TempDir dir;
  const std::string text = "it's a \"test\" $HOME `x` \\";
  RunShellCommand("printf %s " + ShellQuote(text), dir / "log", 10);
  EXPECT_EQ(ReadFile(dir / "log"), text);
}

// ---------------------------------------------------------------------------
// Adapters.

class AdapterTest : public ::testing::Test {
 protected:
  void SetUp() override {
    WriteSyntheticImages(dir_ / "in", 2, 1);
    input_ = BuildManifest(dir_ / "in", {});
    context_.work_dir = dir_.path();
    context_.log_dir = dir_ / "logs";
    context_.schema = &schema_;
  }

  AdapterSpec Copy(int parallelism = 1) {
    return {.stage = AdapterStage::kEnhance,
            .tag = "copy",
            .command = "cp {input_dir}/* {output_dir}/",
            .parallelism = parallelism};
  }

  TempDir dir_;
  Manifest input_;
  ClassSchema schema_ = ClassSchema::Default();
  AdapterContext context_;
};

TEST_F(AdapterTest, IdentityAdapterAddsOneTag) {
  const AdapterOutput out = RunAdapter(Copy(), input_, dir_ / "out", context_);
  ASSERT_EQ(out.manifest.records.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    const ImageRecord& in = input_.records[i];
    const ImageRecord& r = out.manifest.records[i];
    EXPECT_EQ(r.image_id, in.image_id);
    EXPECT_EQ(r.provenance,
              (std::vector<std::string>{"raw", "copy"}));
    EXPECT_EQ(fs::path(r.path).parent_path(), dir_ / "out");
    EXPECT_EQ(r.stats, in.stats);
    EXPECT_EQ(r.scenario, in.scenario);
  }
  ASSERT_EQ(out.runs.size(), 1u);
  EXPECT_EQ(out.runs[0].exit_code, 0);
  EXPECT_FALSE(fs::exists(dir_ / ".out.staging"));
}

TEST_F(AdapterTest, ShardsRunInParallel) {
  const AdapterOutput out =
      RunAdapter(Copy(8), input_, dir_ / "out", context_);
  EXPECT_EQ(out.runs.size(), 3u);  // capped at the record count
  ASSERT_EQ(out.manifest.records.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out.manifest.records[i].image_id, input_.records[i].image_id);
  }
}

TEST_F(AdapterTest, ProcessesOnlyTheGivenSubset) {
  // Scoping an adapter to the night records touches nothing else.
  Manifest night = input_;
  std::erase_if(night.records, [](const ImageRecord& r) {
    return r.scenario != Scenario::kNight;
  });
  ASSERT_EQ(night.records.size(), 2u);
  const AdapterOutput out = RunAdapter(Copy(), night, dir_ / "out", context_);
  EXPECT_EQ(out.manifest.records.size(), 2u);
  EXPECT_EQ(ListImages(dir_ / "out").size(), 2u);
}

TEST_F(AdapterTest, NonzeroExitIsAStageFailure) {
  AdapterSpec spec = Copy();
  spec.command = "echo broken model; exit 1 # {input_dir} {output_dir}";
  const std::string msg =
      MessageOf([&] { RunAdapter(spec, input_, dir_ / "out", context_); });
  EXPECT_THAT(msg, HasSubstr("status 1"));
  EXPECT_THAT(msg, HasSubstr("broken model"));
  EXPECT_EQ(KindOf([&] { RunAdapter(spec, input_, dir_ / "out", context_); }),
            ErrorKind::kStage);
}

TEST_F(AdapterTest, MissingOutputsAreListed) {
  AdapterSpec spec = Copy();
  spec.command = "cp {input_dir}/camera0* {output_dir}/";
  const std::string msg =
      MessageOf([&] { RunAdapter(spec, input_, dir_ / "out", context_); });
  EXPECT_THAT(msg, HasSubstr("2 of 3"));
  EXPECT_THAT(msg, HasSubstr("camera1_N_1"));
}

TEST_F(AdapterTest, TimeoutIsAStageFailure) {
  AdapterSpec spec = Copy();
  spec.command = "sleep 20 # {input_dir} {output_dir}";
  spec.timeout_seconds = 0.2;
  EXPECT_THAT(
      MessageOf([&] { RunAdapter(spec, input_, dir_ / "out", context_); }),
      HasSubstr("timed out"));
}

TEST_F(AdapterTest, EmptyInputIsRejected) {
  Manifest empty;
  EXPECT_EQ(KindOf([&] { RunAdapter(Copy(), empty, dir_ / "out", context_); }),
            ErrorKind::kInvalidArgument);
}

TEST_F(AdapterTest, DetectAdaptersReadCocoAndYolo) {
  for (const char* format : {"coco", "yolo"}) {
    AdapterSpec spec{
        .stage = AdapterStage::kDetect,
        .tag = format,
        .command = fmt::format("{} --input {{input_dir}} --output "
                               "{{output_dir}} --format {}",
                               FISHEYE_STUB_DETECTOR, format),
        .output = OutputKind::kDetections,
        .detection_format = ParseDetectionFormat(format),
        .parallelism = 2};
    const AdapterOutput out = RunAdapter(spec, input_, dir_ / "dets", context_);
    ASSERT_EQ(out.detections.size(), 6u) << format;
    for (size_t i = 0; i < 6; ++i) {
      EXPECT_EQ(out.detections[i].image_id, input_.records[i / 2].image_id);
      EXPECT_EQ(out.detections[i].model_tag, format);
    }
    // Box 1 spans 0.1w..0.4w on a 64 px wide image.
    EXPECT_NEAR(out.detections[0].box.x1, 6.4, 1e-9);
    EXPECT_NEAR(out.detections[0].box.x2, 25.6, 1e-9);
  }
}

TEST_F(AdapterTest, DetectWithoutResultsFileFails) {
  AdapterSpec spec{.stage = AdapterStage::kDetect,
                   .tag = "lazy",
                   .command = "true {input_dir} {output_dir}",
                   .output = OutputKind::kDetections};
  EXPECT_THAT(
      MessageOf([&] { RunAdapter(spec, input_, dir_ / "dets", context_); }),
      HasSubstr("detections.json"));
}

// ---------------------------------------------------------------------------
// Final dataset and remapping.

const ClassSchema kSchema = ClassSchema::Default();

ImageRecord Rec(std::string id) {
  ImageRecord r;
  r.image_id = std::move(id);
  r.path = "/x/" + r.image_id + ".png";
  r.dims = {10, 10};
  return r;
}

Manifest Of(std::initializer_list<const char*> ids) {
  Manifest m;
  for (const char* id : ids) m.records.push_back(Rec(id));
  return m;
}

TEST(PrepareFinalDatasetTest, DisjointUnion) {
  const Manifest f = PrepareFinalDataset(Of({"a", "b", "c"}), Of({"d", "e"}));
  ASSERT_EQ(f.records.size(), 5u);
  EXPECT_EQ(f.records[0].provenance.back(), "other");
  EXPECT_EQ(f.records[4].provenance.back(), "daylike");
}

TEST(PrepareFinalDatasetTest, EmptyNightBranchKeepsOther) {
  const Manifest other = Of({"a", "b"});
  const Manifest f = PrepareFinalDataset(other, Manifest{});
  ASSERT_EQ(f.records.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(f.records[i].image_id, other.records[i].image_id);
    EXPECT_EQ(f.records[i].path, other.records[i].path);
  }
}

TEST(PrepareFinalDatasetTest, DuplicateIsNamed) {
  EXPECT_THAT(
      MessageOf([] { PrepareFinalDataset(Of({"a", "b"}), Of({"b"})); }),
      HasSubstr("'b'"));
  EXPECT_EQ(KindOf([] { PrepareFinalDataset(Of({"a"}), Of({"a"})); }),
            ErrorKind::kDomain);
}

ImageTable Table(std::string id, ImageDims dims) {
  ImageTable t;
  t.Add({id, id + ".png", dims});
  return t;
}

TEST(RemapSrDetectionsTest, Examples) {
  const ImageTable t = Table("img", {100, 100});
  const std::vector<Detection> in = {{"img", 0, {40, 80, 120, 160}, 0.7, "m"},
                                     {"img", 1, {300, 300, 500, 480}, 0.2, "m"}};
  const auto out = RemapSrDetections(in, 4, t);
  EXPECT_EQ(out[0].box, (BoundingBox{10, 20, 30, 40}));
  EXPECT_EQ(out[0].score, 0.7);
  EXPECT_EQ(out[1].box, (BoundingBox{75, 75, 100, 100}));
  EXPECT_EQ(RemapSrDetections(std::span(in).first(1), 1, Table("img", {200, 200}))[0]
                .box,
            in[0].box);
  EXPECT_EQ(KindOf([&] { RemapSrDetections(in, 0, t); }),
            ErrorKind::kInvalidArgument);
  EXPECT_EQ(KindOf([&] { RemapSrDetections(in, 4, Table("other", {1, 1})); }),
            ErrorKind::kReferential);
}

TEST(RemapSrDetectionsTest, InvertsScalingInsideTheFrame) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  const ImageTable t = Table("img", {1920, 1080});
  for (int i = 0; i < 1000; ++i) {
    const double factor = 1 + 7 * u(rng);
    const double x1 = 1900 * u(rng), y1 = 1060 * u(rng);
    const BoundingBox b{x1, y1, x1 + (1920 - x1) * u(rng),
                        y1 + (1080 - y1) * u(rng)};
    const Detection d{"img", 0, ScaleBox(b, factor), 0.5, ""};
    const BoundingBox r = RemapSrDetections({&d, 1}, factor, t)[0].box;
    EXPECT_NEAR(r.x1, b.x1, 1e-12 * 1920);
    EXPECT_NEAR(r.y1, b.y1, 1e-12 * 1920);
    EXPECT_NEAR(r.x2, b.x2, 1e-12 * 1920);
    EXPECT_NEAR(r.y2, b.y2, 1e-12 * 1920);
  }
}

// ---------------------------------------------------------------------------
// Run record.

TEST(RunRecordTest, JsonRoundTrip) {
  RunRecord r;
  r.config_hash = "0123456789abcdef";
  r.status = "failed";
  for (int k = 0; k < kNumStages; ++k) {
    StageRecord s;
    s.id = static_cast<StageId>(k);
    s.status = k < 2 ? StageStatus::kComplete : StageStatus::kPending;
    s.input_key = "k";
    s.outputs = {"a", "b"};
    s.records = k;
    s.seconds = 0.5;
    if (k == 0) s.runs.push_back({"enhance", 0, 0, false, 0.25, "logs/x"});
    r.stages.push_back(s);
  }
  const RunRecord back = RunRecordFromJson(RunRecordToJson(r), "r");
  EXPECT_EQ(RunRecordToJson(back), RunRecordToJson(r));
  EXPECT_EQ(back.CountStatus(StageStatus::kComplete), 2);
  EXPECT_EQ(KindOf([] { RunRecordFromJson("{}", "r"); }), ErrorKind::kParse);
}

// ---------------------------------------------------------------------------
// Orchestration.

class OrchestrateTest : public ::testing::Test {
 protected:
  PipelineConfig Setup(int dark = 3, int bright = 3) {
    testing::WriteDryRun(setup_, dark, bright);
    return LoadPipelineConfig(setup_.config());
  }
  nlohmann::json RunJson() const {
    return nlohmann::json::parse(ReadFile(setup_.work() / "run.json"));
  }

  TempDir dir_;
  DryRunSetup setup_{.root = dir_.path()};
};

TEST_F(OrchestrateTest, DryRunCompletesEveryStage) {
  const PipelineConfig config = Setup();
  const RunRecord r = Orchestrate(config);
  EXPECT_EQ(r.status, "complete");
  ASSERT_EQ(r.stages.size(), 7u);
  for (int k = 0; k < kNumStages; ++k) {
    EXPECT_EQ(r.stages[k].id, static_cast<StageId>(k));
    EXPECT_EQ(r.stages[k].status, StageStatus::kComplete)
        << StageName(r.stages[k].id) << ": " << r.stages[k].message;
  }
  const Manifest final_set = ReadManifest(setup_.work() / "manifests/final.jsonl");
  EXPECT_EQ(final_set.records.size(), 6u);
  EXPECT_EQ(ReadManifest(setup_.work() / "manifests/night.jsonl").records.size(),
            3u);
  EXPECT_EQ(ListImages(setup_.work() / "final").size(), 6u);
  EXPECT_EQ(ListImages(setup_.work() / "sr").size(), 6u);
  EXPECT_EQ(CountLines(setup_.work() / "reports/illumination.csv"), 7);

  // Detections come back in original-image coordinates.
  const auto fused = ParseDetections(
      setup_.work() / "fused/detections.json", DetectionFormat::kCocoResults,
      {.schema = &kSchema});
  // Two detectors agree on both boxes of every image.
  EXPECT_EQ(fused.size(), 12u);
  for (const Detection& d : fused) {
    EXPECT_LE(d.box.x2, 64);
    EXPECT_LE(d.box.y2, 48);
  }
  EXPECT_TRUE(fs::exists(setup_.work() / "fused/detections.json.provenance.json"));
  EXPECT_EQ(RunJson()["status"], "complete");
}

TEST_F(OrchestrateTest, FinalProvenanceNamesTheBranch) {
  Orchestrate(Setup());
  const Manifest f = ReadManifest(setup_.work() / "manifests/final.jsonl");
  int other = 0, daylike = 0;
  for (const ImageRecord& r : f.records) {
    other += r.provenance.back() == "other";
    daylike += r.provenance.back() == "daylike";
    EXPECT_EQ(r.provenance.front(), "raw");
  }
  EXPECT_EQ(other, 3);
  EXPECT_EQ(daylike, 3);
}

TEST_F(OrchestrateTest, RerunDoesNoWork) {
  const PipelineConfig config = Setup();
  Orchestrate(config);
  const int calls = CountLines(setup_.calls());
  const std::string fused = ReadFile(setup_.work() / "fused/detections.json");
  const RunRecord again = Orchestrate(config);
  EXPECT_EQ(CountLines(setup_.calls()), calls);
  EXPECT_EQ(again.CountStatus(StageStatus::kComplete), 7);
  EXPECT_EQ(ReadFile(setup_.work() / "fused/detections.json"), fused);
}

TEST_F(OrchestrateTest, ForceRerunsEverythingDeterministically) {
  const PipelineConfig config = Setup();
  Orchestrate(config);
  const std::string fused = ReadFile(setup_.work() / "fused/detections.json");
  const int calls = CountLines(setup_.calls());
  Orchestrate(config, {.force = true});
  EXPECT_EQ(CountLines(setup_.calls()), 2 * calls);
  EXPECT_EQ(ReadFile(setup_.work() / "fused/detections.json"), fused);
}

TEST_F(OrchestrateTest, ChangingFusionRerunsOnlyFuse) {
  Orchestrate(Setup());
  const int calls = CountLines(setup_.calls());
  setup_.fusion_iou = "0.7";
  std::ofstream(setup_.config()) << testing::DryRunConfigText(setup_);
  const RunRecord r = Orchestrate(LoadPipelineConfig(setup_.config()));
  EXPECT_EQ(CountLines(setup_.calls()), calls);
  EXPECT_EQ(r.status, "complete");
}

TEST_F(OrchestrateTest, DeletedOutputIsRebuilt) {
  Orchestrate(Setup());
  fs::remove(setup_.work() / "sr" / "camera0_N_0.png");
  const int sr_calls = CountLines(setup_.calls(), "super_resolution");
  Orchestrate(LoadPipelineConfig(setup_.config()));
  EXPECT_EQ(CountLines(setup_.calls(), "super_resolution"), 2 * sr_calls);
  EXPECT_EQ(CountLines(setup_.calls(), "enhance"), 1);
  EXPECT_TRUE(fs::exists(setup_.work() / "sr" / "camera0_N_0.png"));
}

TEST_F(OrchestrateTest, AllBrightLeavesNightToDayEmpty) {
  const RunRecord r = Orchestrate(Setup(0, 4));
  const StageRecord& n2d = r.stages[static_cast<int>(StageId::kNightToDay)];
  EXPECT_EQ(n2d.status, StageStatus::kComplete);
  EXPECT_EQ(n2d.records, 0);
  EXPECT_EQ(n2d.message, "empty input");
  EXPECT_EQ(CountLines(setup_.calls(), "night_to_day"), 0);
  EXPECT_EQ(ReadManifest(setup_.work() / "manifests/final.jsonl").records.size(),
            4u);
}

TEST_F(OrchestrateTest, SkippedSuperResolutionDetectsOnFinal) {
  setup_.super_resolution = false;
  const RunRecord r = Orchestrate(Setup());
  EXPECT_EQ(r.stages[static_cast<int>(StageId::kSuperResolution)].status,
            StageStatus::kSkipped);
  EXPECT_EQ(r.CountStatus(StageStatus::kComplete), 6);
  EXPECT_FALSE(fs::exists(setup_.work() / "sr"));
  const auto dets = ParseDetections(setup_.work() / "dets/det_a/detections.json",
                                    DetectionFormat::kCocoResults,
                                    {.schema = &kSchema});
  ASSERT_FALSE(dets.empty());
  EXPECT_NEAR(dets[0].box.x1, 6.4, 1e-9);  // factor 1: no remap
}

TEST_F(OrchestrateTest, SuperResolutionRemapsToOriginalCoordinates) {
  Orchestrate(Setup());
  const auto a = ParseDetections(setup_.work() / "dets/det_a/detections.json",
                                 DetectionFormat::kCocoResults,
                                 {.schema = &kSchema});
  // On the 256 px wide SR image the stub puts x1 at 25.6; /4 gives 6.4.
  ASSERT_FALSE(a.empty());
  EXPECT_NEAR(a[0].box.x1, 6.4, 1e-9);
  EXPECT_NEAR(a[0].box.x2, 25.6, 1e-9);
}

TEST_F(OrchestrateTest, FailureIsRecordedAndResumable) {
  setup_.night_to_day_command = "echo gsad crashed; exit 7 # {input_dir} {output_dir}";
  const PipelineConfig broken = Setup();
  const std::string msg = MessageOf([&] { Orchestrate(broken); });
  EXPECT_THAT(msg, HasSubstr("night_to_day"));
  EXPECT_THAT(msg, HasSubstr("gsad crashed"));
  const auto run = RunJson();
  EXPECT_EQ(run["status"], "failed");
  EXPECT_EQ(run["stages"][0]["status"], "complete");
  EXPECT_EQ(run["stages"][1]["status"], "complete");
  EXPECT_EQ(run["stages"][2]["status"], "failed");
  EXPECT_EQ(run["stages"][3]["status"], "pending");

  setup_.night_to_day_command.clear();
  std::ofstream(setup_.config()) << testing::DryRunConfigText(setup_);
  const RunRecord r = Orchestrate(LoadPipelineConfig(setup_.config()));
  EXPECT_EQ(r.CountStatus(StageStatus::kComplete), 7);
  EXPECT_EQ(CountLines(setup_.calls(), "enhance"), 1);
}

TEST_F(OrchestrateTest, EmptyInputDirectoryIsRejected) {
  const PipelineConfig config = Setup(0, 0);
  EXPECT_EQ(KindOf([&] { Orchestrate(config); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(RunJson()["status"], "failed");
}

}  // namespace
}  // namespace fisheye
