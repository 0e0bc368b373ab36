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

#include <cmath>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "fisheye/formats.h"
#include "fisheye/fusion.h"
#include "fisheye/illumination.h"
#include "fisheye/image_io.h"
#include "fisheye/log.h"
#include "fisheye/metrics.h"
#include "fisheye/pipeline.h"
#include "fisheye/report.h"

namespace fisheye {

namespace fs = std::filesystem;

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
    case ErrorKind::kParse:
      return kExitFile;
    case ErrorKind::kDomain:
    case ErrorKind::kReferential:
    case ErrorKind::kInvalidArgument:
      return kExitDomain;
    case ErrorKind::kStage:
      return kExitStage;
  }
  return kExitInternal;
}

namespace {

// Where a subcommand's data goes: a file or standard output.
struct Sink {
  std::string out;
  bool to_stdout = false;

  void Add(CLI::App* app, std::string_view what) {
    auto* o = app->add_option("--out", out, fmt::format("Write {} here", what));
    auto* s = app->add_flag("--stdout", to_stdout,
                            fmt::format("Print {} on standard output", what));
    o->excludes(s);
  }
  bool Requested() const { return to_stdout || !out.empty(); }
  void Emit(std::string_view text) const {
    if (to_stdout) {
      std::cout << text;
      std::cout.flush();
    } else if (!out.empty()) {
      WriteFileAtomic(out, text);
    }
  }
};

void AddThreads(CLI::App* app, int* threads) {
  app->add_option("--threads", *threads,
                  "Worker threads (0 = all hardware threads)")
      ->check(CLI::NonNegativeNumber);
}

[[noreturn]] void Usage(std::string_view message) {
  throw CLI::ValidationError(std::string(message));
}

ImageTable TableFromManifest(const Manifest& m) {
  ImageTable table;
  for (const ImageRecord& r : m.records) {
    table.Add({r.image_id, fs::path(r.path).filename().string(), r.dims});
  }
  return table;
}

// Image table and class schema shared by the detection subcommands.
struct DetectionContext {
  std::string gt;
  std::string manifest;
  std::string schema;
  std::string format = "coco";

  void Add(CLI::App* app) {
    app->add_option("--gt", gt,
                    "Ground truth COCO file supplying images and classes");
    app->add_option("--manifest", manifest,
                    "Image manifest supplying image sizes");
    app->add_option("--schema", schema, "Class schema JSON");
    app->add_option("--format", format, "Detection input format")
        ->check(CLI::IsMember({"coco", "yolo"}));
  }

  void Load() {
    if (!gt.empty()) {
      GroundTruth g = ParseGroundTruth(gt);
      table = std::move(g.images);
      class_schema = std::move(g.schema);
    }
    if (!manifest.empty()) table = TableFromManifest(ReadManifest(manifest));
    if (!schema.empty()) class_schema = LoadClassSchema(schema);
  }

  const ImageTable* Images() const { return table.empty() ? nullptr : &table; }

  std::vector<Detection> Read(const std::string& path,
                              const std::string& tag) const {
    return ParseDetections(path, ParseDetectionFormat(format),
                           {&class_schema, Images(), tag});
  }

  ImageTable table;
  ClassSchema class_schema = ClassSchema::Default();
};

// ---------------------------------------------------------------------------

struct ManifestCmd {
  std::string images;
  std::string luminance = "mean";
  std::string stage = "raw";
  int threads = 0;
  Sink sink;

  void Setup(CLI::App* app) {
    app->add_option("--images", images, "Directory of images")->required();
    app->add_option("--luminance", luminance, "Luminance: mean or bt601")
        ->check(CLI::IsMember({"mean", "bt601"}));
    app->add_option("--stage", stage, "Stage name stored in the header");
    AddThreads(app, &threads);
    sink.Add(app, "the manifest");
  }

  void Run() {
    if (!sink.Requested()) Usage("give --out or --stdout");
    const Manifest m = BuildManifest(
        images, {ParseLuminanceMode(luminance), threads, stage, stage});
    LogInfo("{} images", m.records.size());
    sink.Emit(ManifestToText(m));
  }
};

struct ClusterCmd {
  std::string manifest;
  std::optional<double> t_night;
  bool auto_threshold = false;
  std::string scatter_csv, night_out, other_out;
  int threads = 0;
  Sink sink;

  void Setup(CLI::App* app) {
    app->add_option("--manifest", manifest, "Input manifest")->required();
    auto* t = app->add_option("--t-night", t_night,
                              "Night threshold on luminance, in (0, 255]");
    auto* a = app->add_flag("--auto-threshold", auto_threshold,
                            "Pick the threshold with Otsu's method");
    t->excludes(a);
    app->add_option("--scatter-csv", scatter_csv,
                    "Write per-image means and clusters as CSV");
    app->add_option("--night-out", night_out, "Write the night manifest");
    app->add_option("--other-out", other_out, "Write the other manifest");
    AddThreads(app, &threads);
    sink.Add(app, "the clustered manifest");
  }

  void Run() {
    if (!t_night && !auto_threshold) {
      Usage("give --t-night <value> or --auto-threshold");
    }
    if (!sink.Requested() && scatter_csv.empty() && night_out.empty() &&
        other_out.empty()) {
      Usage("nothing to write: give --out, --stdout, --night-out, "
            "--other-out or --scatter-csv");
    }
    Manifest in = ReadManifest(manifest);
    const NightThreshold t =
        t_night ? NightThreshold::Create(*t_night) : AutoThreshold(in.records);
    IlluminationPartition part = ClusterByIllumination(in.records, t);
    LogInfo("T_night {}: {} night, {} other", FormatDouble(t.value()),
            part.night.size(), part.other.size());
    auto with = [&](std::string stage, std::vector<ImageRecord> records) {
      Manifest m;
      m.header = in.header;
      m.header.stage = std::move(stage);
      m.header.threshold = t.value();
      m.records = std::move(records);
      return m;
    };
    std::vector<ImageRecord> all = in.records;
    size_t n = 0, o = 0;
    for (ImageRecord& r : all) {
      // Both sides keep input order, so walking them in step restores it.
      if (n < part.night.size() && part.night[n].image_id == r.image_id) {
        r = part.night[n++];
      } else {
        r = part.other[o++];
      }
    }
    if (!scatter_csv.empty()) ExportScatter(all, scatter_csv);
    if (!night_out.empty()) WriteManifest(with("night", part.night), night_out);
    if (!other_out.empty()) WriteManifest(with("other", part.other), other_out);
    sink.Emit(ManifestToText(with("clustered", std::move(all))));
  }
};

struct FuseCmd {
  std::vector<std::string> dets;
  std::vector<double> weights;
  double iou_thr = 0.55;
  double skip_thr = 0.0;
  std::string rescale = "none";
  std::string score_mode = "mean";
  std::string method = "wbf";
  int threads = 0;
  DetectionContext ctx;
  Sink sink;

  void Setup(CLI::App* app) {
    app->add_option("--dets", dets, "Detection files, one per model")
        ->required();
    app->add_option("--weights", weights, "Model weights, one per file");
    app->add_option("--iou-thr", iou_thr, "Cluster IoU threshold");
    app->add_option("--skip-thr", skip_thr,
                    "Drop boxes scoring below this before fusing");
    app->add_option("--rescale", rescale,
                    "Score rescale: none or by-model-count");
    app->add_option("--score-mode", score_mode,
                    "Fused score: mean or weighted-mean");
    app->add_option("--method", method, "wbf or nms")
        ->check(CLI::IsMember({"wbf", "nms"}));
    ctx.Add(app);
    AddThreads(app, &threads);
    sink.Add(app, "fused COCO results");
  }

  void Run() {
    if (!sink.Requested()) Usage("give --out or --stdout");
    FusionConfig config;
    config.iou_threshold = iou_thr;
    config.skip_box_threshold = skip_thr;
    config.model_weights = weights;
    config.rescale = ParseScoreRescale(rescale);
    config.score_mode = ParseScoreMode(score_mode);
    config.Validate(dets.size());
    ctx.Load();
    std::vector<std::vector<Detection>> per_model;
    std::vector<FusionSource> sources;
    for (size_t i = 0; i < dets.size(); ++i) {
      const std::string tag = fs::path(dets[i]).stem().string();
      per_model.push_back(ctx.Read(dets[i], tag));
      sources.push_back({tag, dets[i], config.WeightOf(i)});
    }
    const std::vector<Detection> fused =
        method == "wbf" ? FuseDataset(per_model, config, threads)
                        : NmsDataset(per_model, iou_thr, threads);
    LogInfo("{} fused detections", fused.size());
    sink.Emit(DetectionsToCocoJson(fused));
    if (!sink.out.empty() && method == "wbf") {
      WriteFileAtomic(sink.out + ".provenance.json",
                      FusionProvenanceJson(config, sources));
    }
  }
};

struct ScaleCmd {
  std::string dets;
  std::optional<double> factor;
  std::optional<double> sr_factor;
  int threads = 0;  // accepted for uniformity; scaling is a single pass
  DetectionContext ctx;
  Sink sink;

  void Setup(CLI::App* app) {
    app->add_option("--dets", dets, "Detection file")->required();
    auto* f = app->add_option("--factor", factor, "Multiply every box");
    auto* s = app->add_option(
        "--sr-factor", sr_factor,
        "Divide every box by the SR factor, then clip to the original image "
        "(needs --gt or --manifest)");
    f->excludes(s);
    ctx.Add(app);
    AddThreads(app, &threads);
    sink.Add(app, "scaled COCO results");
  }

  void Run() {
    if (!factor && !sr_factor) Usage("give --factor or --sr-factor");
    if (!sink.Requested()) Usage("give --out or --stdout");
    ctx.Load();
    std::vector<Detection> in = ctx.Read(dets, "");
    std::vector<Detection> out;
    if (sr_factor) {
      if (ctx.Images() == nullptr) {
        Usage("--sr-factor needs --gt or --manifest for the original sizes");
      }
      out = RemapSrDetections(in, *sr_factor, ctx.table);
    } else {
      if (!(*factor > 0) || !std::isfinite(*factor)) {
        Fail(ErrorKind::kInvalidArgument,
             fmt::format("scale factor {} must be positive", *factor));
      }
      for (Detection& d : in) d.box = ScaleBox(d.box, *factor);
      out = std::move(in);
    }
    sink.Emit(DetectionsToCocoJson(out));
  }
};

struct EvalCmd {
  std::string gt, dets, format = "coco";
  std::string iou_grid = "0.5:0.95:0.05";
  double f1_iou = 0.5;
  double conf_thr = 0.0;
  std::optional<int> max_dets;
  std::string interpolation = "coco101";
  std::string label;
  std::string table, csv;
  int threads = 0;
  Sink sink;

  void Setup(CLI::App* app) {
    app->add_option("--gt", gt, "Ground truth COCO file")->required();
    app->add_option("--dets", dets, "Detections to score")->required();
    app->add_option("--format", format, "Detection format")
        ->check(CLI::IsMember({"coco", "yolo"}));
    app->add_option("--iou-grid", iou_grid,
                    "IoU thresholds: start:stop:step or a comma list");
    app->add_option("--f1-iou", f1_iou, "IoU threshold for P/R/F1");
    app->add_option("--conf-thr", conf_thr,
                    "Minimum score counted by P/R/F1");
    app->add_option("--max-dets", max_dets, "Keep the top K per image");
    app->add_option("--interpolation", interpolation, "coco101 or trapezoid");
    app->add_option("--label", label, "Report label");
    app->add_option("--table", table, "Also write the text table here");
    app->add_option("--csv", csv, "Also write the AP matrix CSV here");
    AddThreads(app, &threads);
    sink.Add(app, "the JSON report");
  }

  void Run() {
    if (!sink.Requested() && table.empty() && csv.empty()) {
      Usage("give --out, --stdout, --table or --csv");
    }
    EvalConfig config;
    config.grid = IouGrid::Parse(iou_grid);
    config.f1_iou = f1_iou;
    config.confidence_threshold = conf_thr;
    config.max_detections_per_image = max_dets;
    config.interpolation = ParseApInterpolation(interpolation);
    config.label = label.empty() ? fs::path(dets).stem().string() : label;
    config.threads = threads;
    const GroundTruth truth = ParseGroundTruth(gt);
    const std::vector<Detection> detections = ParseDetections(
        dets, ParseDetectionFormat(format), {&truth.schema, &truth.images, ""});
    const EvalReport report = Evaluate(detections, truth, config);
    LogInfo("mAP {} F1 {}",
            report.map ? FormatMetric(*report.map) : std::string("n/a"),
            FormatMetric(report.f1));
    if (!table.empty()) WriteFileAtomic(table, RenderReportTable(report));
    if (!csv.empty()) WriteFileAtomic(csv, RenderApMatrixCsv(report));
    sink.Emit(ReportToJson(report));
  }
};

struct ReportCmd {
  std::vector<std::string> reports;
  std::string metric = "both";
  int threads = 0;
  Sink sink;

  void Setup(CLI::App* app) {
    app->add_option("reports", reports, "Stored evaluation reports (JSON)")
        ->required();
    app->add_option("--metric", metric, "map, f1 or both")
        ->check(CLI::IsMember({"map", "f1", "both"}));
    AddThreads(app, &threads);
    sink.Add(app, "the comparison table");
  }

  void Run() {
    if (!sink.Requested()) Usage("give --out or --stdout");
    std::vector<EvalReport> loaded;
    for (const std::string& path : reports) loaded.push_back(ReadReport(path));
    const ComparisonMetric m = metric == "map"  ? ComparisonMetric::kMap
                               : metric == "f1" ? ComparisonMetric::kF1
                                                : ComparisonMetric::kBoth;
    sink.Emit(RenderComparisonTable(loaded, m));
  }
};

struct PipelineCmd {
  std::string config;
  bool force = false;
  std::optional<int> threads;
  Sink sink;

  void Setup(CLI::App* app) {
    app->add_option("--config", config, "Pipeline config (TOML)")->required();
    app->add_flag("--force", force, "Re-run stages whose outputs are intact");
    app->add_option("--threads", threads,
                    "Worker threads for in-process work (overrides config)")
        ->check(CLI::NonNegativeNumber);
    sink.Add(app, "the run record");
  }

  void Run() {
    PipelineConfig c = LoadPipelineConfig(config);
    if (threads) c.threads = *threads;
    const RunRecord r = Orchestrate(c, {.force = force});
    for (const StageRecord& s : r.stages) {
      LogInfo("{:<17} {:<9} {:>7} records  {:.2f} s  {}", StageName(s.id),
              StageStatusName(s.status), s.records, s.seconds, s.message);
    }
    sink.Emit(RunRecordToJson(r));
  }
};

}  // namespace

int RunCli(int argc, char** argv) {
  CLI::App app("Low-light fisheye detection toolkit");
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  ManifestCmd manifest;
  ClusterCmd cluster;
  FuseCmd fuse;
  ScaleCmd scale;
  EvalCmd eval;
  ReportCmd report;
  PipelineCmd pipeline;
  std::function<void()> run;
  auto add = [&](auto& cmd, const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.Setup(sub);
    sub->callback([&cmd, &run] { run = [&cmd] { cmd.Run(); }; });
  };
  add(manifest, "manifest", "Build an image manifest from a directory");
  add(cluster, "cluster", "Split a manifest into night and other");
  add(fuse, "fuse", "Fuse detection files from several models");
  add(scale, "scale", "Rescale detection coordinates");
  add(eval, "eval", "Compute mAP and F1 against ground truth");
  add(report, "report", "Render comparison tables from stored reports");
  add(pipeline, "pipeline", "Run the full procedure from a config file");

  try {
    app.parse(argc, argv);
    SetLogLevel(verbose ? LogLevel::kDebug
                        : quiet ? LogLevel::kWarning : LogLevel::kInfo);
    run();
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const Error& e) {
    LogError("{}: {}", ErrorKindName(e.kind()), e.what());
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    LogError("internal error: {}", e.what());
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace fisheye
