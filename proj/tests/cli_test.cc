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
#include "fisheye/cli.h"

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <regex>
#include <string>

#include <fmt/format.h>
#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "fisheye/formats.h"
#include "fisheye/illumination.h"
#include "fisheye/pipeline.h"
#include "fisheye/report.h"
#include "fisheye/process.h"
#include "json.hpp"
#include "pipeline_fixture.h"
#include "test_util.h"

namespace fisheye {
namespace {

namespace fs = std::filesystem;
using ::fisheye::testing::TempDir;
using ::fisheye::testing::WriteText;
using ::testing::HasSubstr;

struct CliResult {
  int code = -1;
  std::string out;
};

// Runs the installed binary with `args` (already shell-quoted where needed);
// stderr is discarded.
CliResult Cli(const std::string& args) {
  const std::string command =
      fmt::format("{} {} 2>/dev/null", ShellQuote(FISHEYE_CLI), args);
  CliResult r;
  FILE* pipe = popen(command.c_str(), "r");
  std::array<char, 4096> buf;
  size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string Q(const fs::path& p) { return ShellQuote(p.string()); }

constexpr char kCategories[] =
    R"([{"id":0,"name":"Bus"},{"id":1,"name":"Bike"},{"id":2,"name":"Car"},)"
    R"({"id":3,"name":"Pedestrian"},{"id":4,"name":"Truck"}])";

// Three 100x100 images with one or two objects each.
void WritePerfectFixture(const fs::path& dir) {
  WriteText(dir / "gt.json",
            std::string(R"({"images":[)") +
                R"({"id":1,"file_name":"a.png","width":100,"height":100},)"
                R"({"id":2,"file_name":"b.png","width":100,"height":100},)"
                R"({"id":3,"file_name":"c.png","width":100,"height":100}],)"
                R"("annotations":[)"
                R"({"id":1,"image_id":1,"category_id":0,"bbox":[10,10,40,40]},)"
                R"({"id":2,"image_id":1,"category_id":2,"bbox":[60,60,30,30]},)"
                R"({"id":3,"image_id":2,"category_id":3,"bbox":[5,5,20,50]},)"
                R"({"id":4,"image_id":3,"category_id":4,"bbox":[0,0,100,60]}],)"
                R"("categories":)" +
                kCategories + "}");
  WriteText(dir / "perfect.json",
            R"([{"image_id":1,"category_id":0,"bbox":[10,10,40,40],"score":0.9},)"
            R"({"image_id":1,"category_id":2,"bbox":[60,60,30,30],"score":0.8},)"
            R"({"image_id":2,"category_id":3,"bbox":[5,5,20,50],"score":0.7},)"
            R"({"image_id":3,"category_id":4,"bbox":[0,0,100,60],"score":0.6}])");
}

TEST(CliTest, EverySubcommandHasHelp) {
  for (const char* sub : {"manifest", "cluster", "fuse", "scale", "eval",
                          "report", "pipeline"}) {
    const CliResult r = Cli(fmt::format("{} --help", sub));
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_THAT(r.out, HasSubstr("--threads")) << sub;
  }
}

TEST(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(Cli("").code, kExitUsage);
  EXPECT_EQ(Cli("frobnicate").code, kExitUsage);
  EXPECT_EQ(Cli("report --bogus x").code, kExitUsage);
  EXPECT_EQ(Cli("manifest --images .").code, kExitUsage);  // no output
  EXPECT_EQ(Cli("manifest --images . --out x --stdout").code, kExitUsage);
  EXPECT_EQ(Cli("cluster --manifest m --t-night 5 --auto-threshold --stdout")
                .code,
            kExitUsage);
}

TEST(CliTest, ExitCodeTable) {
  EXPECT_EQ(ExitCodeFor(ErrorKind::kIo), 3);
  EXPECT_EQ(ExitCodeFor(ErrorKind::kParse), 3);
  EXPECT_EQ(ExitCodeFor(ErrorKind::kDomain), 4);
  EXPECT_EQ(ExitCodeFor(ErrorKind::kReferential), 4);
  EXPECT_EQ(ExitCodeFor(ErrorKind::kInvalidArgument), 4);
  EXPECT_EQ(ExitCodeFor(ErrorKind::kStage), 5);
}

TEST(CliTest, EvalPerfectDetector) {
  TempDir dir;
  WritePerfectFixture(dir.path());
  const CliResult r = Cli(fmt::format("eval --gt {} --dets {} --stdout",
                                      Q(dir / "gt.json"),
                                      Q(dir / "perfect.json")));
  ASSERT_EQ(r.code, 0);
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["map"], 1.0);
  EXPECT_EQ(report["f1"], 1.0);
  // Deterministic bytes on a second run.
  EXPECT_EQ(Cli(fmt::format("eval --gt {} --dets {} --stdout",
                            Q(dir / "gt.json"), Q(dir / "perfect.json")))
                .out,
            r.out);
}

TEST(CliTest, EvalWritesTableAndCsv) {
  TempDir dir;
  WritePerfectFixture(dir.path());
  EXPECT_EQ(Cli(fmt::format("eval --gt {} --dets {} --out {} --table {} --csv {}",
                            Q(dir / "gt.json"), Q(dir / "perfect.json"),
                            Q(dir / "r.json"), Q(dir / "r.txt"),
                            Q(dir / "r.csv")))
                .code,
            0);
  EXPECT_EQ(ReadReport(dir / "r.json").map, 1.0);
  EXPECT_THAT(ReadFile(dir / "r.txt"), HasSubstr("Pedestrian"));
  EXPECT_TRUE(fs::exists(dir / "r.csv"));
}

TEST(CliTest, FileAndDomainErrors) {
  TempDir dir;
  WritePerfectFixture(dir.path());
  WriteText(dir / "broken.json", "[{\"image_id\": 1,");
  EXPECT_EQ(Cli(fmt::format("eval --gt {} --dets {} --stdout",
                            Q(dir / "gt.json"), Q(dir / "broken.json")))
                .code,
            kExitFile);
  EXPECT_EQ(Cli(fmt::format("eval --gt {} --dets {} --stdout",
                            Q(dir / "gt.json"), Q(dir / "missing.json")))
                .code,
            kExitFile);
  WriteText(dir / "unknown.json",
            R"([{"image_id":9,"category_id":0,"bbox":[1,1,2,2],"score":0.5}])");
  EXPECT_EQ(Cli(fmt::format("eval --gt {} --dets {} --stdout",
                            Q(dir / "gt.json"), Q(dir / "unknown.json")))
                .code,
            kExitDomain);
  EXPECT_EQ(Cli(fmt::format("fuse --dets {} {} --weights 1 --stdout",
                            Q(dir / "perfect.json"), Q(dir / "perfect.json")))
                .code,
            kExitDomain);
}

TEST(CliTest, ClusterLuminanceFixture) {
  TempDir dir;
  Manifest m;
  m.header.stage = "raw";
  for (double l : {10.0, 40.0, 80.0, 200.0}) {
    ImageRecord r;
    r.image_id = fmt::format("img{}", l);
    r.path = r.image_id + ".png";
    r.dims = {8, 8};
    r.stats = IlluminationStats{l, l, l, l};
    m.records.push_back(r);
  }
  WriteManifest(m, dir / "m.jsonl");
  const CliResult r = Cli(fmt::format(
      "cluster --manifest {} --t-night 50 --stdout --night-out {} "
      "--scatter-csv {}",
      Q(dir / "m.jsonl"), Q(dir / "night.jsonl"), Q(dir / "s.csv")));
  ASSERT_EQ(r.code, 0);
  const Manifest out = ManifestFromText(r.out, "stdout");
  ASSERT_EQ(out.records.size(), 4u);
  EXPECT_EQ(out.records[0].cluster, Cluster::kNight);
  EXPECT_EQ(out.records[1].cluster, Cluster::kNight);
  EXPECT_EQ(out.records[2].cluster, Cluster::kOther);
  EXPECT_EQ(out.records[3].cluster, Cluster::kOther);
  EXPECT_EQ(out.header.threshold, 50.0);
  EXPECT_EQ(ReadManifest(dir / "night.jsonl").records.size(), 2u);
  EXPECT_EQ(testing::CountLines(dir / "s.csv"), 5);
  EXPECT_EQ(Cli(fmt::format("cluster --manifest {} --t-night 0 --stdout",
                            Q(dir / "m.jsonl")))
                .code,
            kExitDomain);
  EXPECT_EQ(Cli(fmt::format("cluster --manifest {} --auto-threshold --stdout",
                            Q(dir / "m.jsonl")))
                .code,
            0);
}

TEST(CliTest, ManifestFromImages) {
  TempDir dir;
  testing::WriteSyntheticImages(dir / "img", 1, 1);
  const CliResult r =
      Cli(fmt::format("manifest --images {} --stdout", Q(dir / "img")));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(ManifestFromText(r.out, "stdout").records.size(), 2u);
}

TEST(CliTest, ReportRendersFixtureRows) {
  const std::string ap = fmt::format("{}/reports/ap", FISHEYE_FIXTURE_DIR);
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(ap)) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::string files;
  for (const fs::path& p : paths) files += " " + Q(p);
  const CliResult r = Cli("report --metric map --stdout" + files);
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(std::regex_search(r.out, std::regex("Baseline +0\\.4029\n")));
  EXPECT_TRUE(std::regex_search(r.out, std::regex("Our-2 +0\\.489\n")));
}

TEST(CliTest, FuseWritesResultsAndProvenance) {
  TempDir dir;
  WriteText(dir / "a.json",
            R"([{"image_id":"x","category_id":0,"bbox":[10,10,10,10],"score":0.9}])");
  WriteText(dir / "b.json",
            R"([{"image_id":"x","category_id":0,"bbox":[11.6,10,10,10],"score":0.6}])");
  const CliResult r = Cli(fmt::format(
      "fuse --dets {} {} --weights 1 1 --iou-thr 0.55 --out {}",
      Q(dir / "a.json"), Q(dir / "b.json"), Q(dir / "f.json")));
  ASSERT_EQ(r.code, 0);
  const ClassSchema schema = ClassSchema::Default();
  const auto fused = ParseDetections(dir / "f.json",
                                     DetectionFormat::kCocoResults, {&schema});
  ASSERT_EQ(fused.size(), 1u);
  EXPECT_NEAR(fused[0].box.x1, (0.9 * 10 + 0.6 * 11.6) / 1.5, 1e-12);
  EXPECT_NEAR(fused[0].score, 0.75, 1e-12);
  const auto prov =
      nlohmann::json::parse(ReadFile(dir / "f.json.provenance.json"));
  EXPECT_EQ(prov["config"]["iou_threshold"], 0.55);
  EXPECT_EQ(prov["inputs"].size(), 2u);
}

TEST(CliTest, ScaleRoundTrip) {
  TempDir dir;
  WriteText(dir / "gt.json",
            std::string(R"({"images":[{"id":1,"file_name":"a.png","width":100,)") +
                R"("height":100}],"annotations":[],"categories":)" +
                kCategories + "}");
  WriteText(dir / "sr.json",
            R"([{"image_id":1,"category_id":0,"bbox":[40,80,80,80],"score":0.5}])");
  ASSERT_EQ(Cli(fmt::format("scale --dets {} --sr-factor 4 --gt {} --out {}",
                            Q(dir / "sr.json"), Q(dir / "gt.json"),
                            Q(dir / "orig.json")))
                .code,
            0);
  const ClassSchema schema = ClassSchema::Default();
  const auto orig = ParseDetections(dir / "orig.json",
                                    DetectionFormat::kCocoResults, {&schema});
  EXPECT_EQ(orig[0].box, (BoundingBox{10, 20, 30, 40}));
  const CliResult up = Cli(fmt::format("scale --dets {} --factor 4 --stdout",
                                       Q(dir / "orig.json")));
  ASSERT_EQ(up.code, 0);
  EXPECT_THAT(up.out, HasSubstr("[40, 80, 80, 80]"));
  EXPECT_EQ(Cli(fmt::format("scale --dets {} --sr-factor 4 --stdout",
                            Q(dir / "sr.json")))
                .code,
            kExitUsage);
}

TEST(CliTest, PipelineRunsAndReportsStageFailure) {
  TempDir dir;
  testing::DryRunSetup s{.root = dir.path()};
  testing::WriteDryRun(s);
  const CliResult ok =
      Cli(fmt::format("pipeline --config {} --stdout", Q(s.config())));
  ASSERT_EQ(ok.code, 0);
  EXPECT_EQ(RunRecordFromJson(ok.out, "stdout").CountStatus(StageStatus::kComplete),
            7);

  TempDir bad;
  testing::DryRunSetup b{.root = bad.path(),
                         .night_to_day_command =
                             "exit 9 # {input_dir} {output_dir}"};
  testing::WriteDryRun(b);
  EXPECT_EQ(Cli(fmt::format("pipeline --config {}", Q(b.config()))).code,
            kExitStage);
  WriteText(bad / "bad.toml", "work_dir = \n");
  EXPECT_EQ(Cli(fmt::format("pipeline --config {}", Q(bad / "bad.toml"))).code,
            kExitFile);
}

}  // namespace
}  // namespace fisheye
