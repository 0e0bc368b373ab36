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
#ifndef FISHEYE_REPORT_H_
#define FISHEYE_REPORT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fisheye {

// One row of the AP matrix. A class without (non-crowd) ground truth has
// every cell undefined and is left out of the mAP mean.
struct ClassApRow {
  int class_id = 0;
  std::string name;
  std::int64_t gt_count = 0;
  std::vector<std::optional<double>> ap_per_threshold;
  std::optional<double> ap;  // mean over the IoU grid
};

struct EvalSettings {
  std::vector<double> iou_grid;
  double f1_iou = 0.5;
  double confidence_threshold = 0.0;
  std::optional<int> max_detections_per_image;
  std::string interpolation = "coco101";
};

struct EvalReport {
  std::string label;
  std::vector<ClassApRow> classes;
  std::optional<double> map;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::int64_t false_negatives = 0;
  EvalSettings settings;
};

// Arithmetic mean in index order. Every mean in a report goes through here,
// so a recomputation from the stored cells reproduces it bit for bit.
double MeanOf(std::span<const double> values);

// Checks the stored invariants: mAP is the mean of the defined class APs and
// F1 agrees with P and R (both within 1e-12). Throws kDomain otherwise.
void ValidateReport(const EvalReport& report);

std::string ReportToJson(const EvalReport& report);
EvalReport ReportFromJson(std::string_view text, std::string_view source);

// Writes the JSON form (full precision) to `path`, plus the aligned text table
// and the AP matrix CSV when their paths are given.
void WriteReport(const EvalReport& report, const std::filesystem::path& path,
                 const std::optional<std::filesystem::path>& table_path = {},
                 const std::optional<std::filesystem::path>& csv_path = {});
EvalReport ReadReport(const std::filesystem::path& path);

// Rounds to 4 decimals and drops trailing zeros: 0.4029, 0.489, 0.33, 1.0.
std::string FormatMetric(double value);

// Per-class table, thresholds as columns, then the summary lines.
std::string RenderReportTable(const EvalReport& report);
std::string RenderApMatrixCsv(const EvalReport& report);

enum class ComparisonMetric { kMap, kF1, kBoth };

// Leaderboard-style comparison, one row per report in the given order.
std::string RenderComparisonTable(std::span<const EvalReport> reports,
                                  ComparisonMetric metric);

}  // namespace fisheye

#endif  // FISHEYE_REPORT_H_
