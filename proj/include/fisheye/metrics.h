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
#ifndef FISHEYE_METRICS_H_
#define FISHEYE_METRICS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fisheye/formats.h"
#include "fisheye/report.h"

namespace fisheye {

// Ordered IoU thresholds for AP averaging.
class IouGrid {
 public:
  // 0.50, 0.55, ..., 0.95.
  static IouGrid Coco();
  // Strictly increasing values in (0, 1]; throws kInvalidArgument otherwise.
  static IouGrid Create(std::vector<double> thresholds);
  // "start:stop:step" (inclusive stop) or a comma-separated list.
  static IouGrid Parse(std::string_view spec);

  const std::vector<double>& thresholds() const { return thresholds_; }
  size_t size() const { return thresholds_.size(); }

 private:
  explicit IouGrid(std::vector<double> t) : thresholds_(std::move(t)) {}
  std::vector<double> thresholds_;
};

enum class MatchStatus {
  kTruePositive,
  kFalsePositive,
  kIgnored,  // matched a crowd region: neither TP nor FP
};

struct MatchedDetection {
  size_t detection_index = 0;  // into the input span
  std::optional<size_t> annotation_index;
  double iou = 0;
  MatchStatus status = MatchStatus::kFalsePositive;
};

struct MatchResult {
  // Descending score; ties keep input order.
  std::vector<MatchedDetection> matches;
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::int64_t false_negatives = 0;
  std::int64_t num_positives = 0;  // non-crowd annotations
};

// COCO-style greedy matching for a single class. Per image, each detection
// (best score first) takes the still-unmatched annotation with the highest
// IoU, provided IoU >= iou_threshold. Non-crowd annotations are preferred
// over crowd ones; crowd regions may absorb any number of detections and
// use intersection over detection area. Throws kInvalidArgument when the
// inputs span more than one class.
MatchResult MatchGreedy(std::span<const Detection> detections,
                        std::span<const Annotation> annotations,
                        double iou_threshold,
                        std::optional<int> max_per_image = std::nullopt);

struct PrPoint {
  double recall = 0;
  double precision = 0;
};

struct PrCurve {
  std::vector<PrPoint> points;        // one per TP/FP detection, by rank
  std::vector<double> interpolated;   // 101 samples at recall i / 100
};

PrCurve BuildPrCurve(const MatchResult& match);

enum class ApInterpolation {
  kCoco101,    // mean of the 101 interpolated samples
  kTrapezoid,  // trapezoidal area under the precision envelope
};

ApInterpolation ParseApInterpolation(std::string_view name);
std::string_view ApInterpolationName(ApInterpolation interpolation);

double ApFromCurve(const PrCurve& curve, ApInterpolation interpolation);

// AP of one class at one threshold, or nullopt when the class has no
// non-crowd annotation.
std::optional<double> AveragePrecision(
    std::span<const Detection> detections,
    std::span<const Annotation> annotations, int class_id, double iou_threshold,
    ApInterpolation interpolation = ApInterpolation::kCoco101);

struct F1Result {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::int64_t false_negatives = 0;
};

// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); 0 for empty denominators.
F1Result F1FromCounts(std::int64_t tp, std::int64_t fp, std::int64_t fn);

struct EvalConfig {
  IouGrid grid = IouGrid::Coco();
  double f1_iou = 0.5;
  double confidence_threshold = 0.0;
  std::optional<int> max_detections_per_image;
  ApInterpolation interpolation = ApInterpolation::kCoco101;
  std::string label;
  int threads = 0;
};

// Micro-averaged over classes: detections with score >= confidence_threshold
// are matched at iou_threshold and the counts summed before dividing.
F1Result F1Score(std::span<const Detection> detections,
                 std::span<const Annotation> annotations, double iou_threshold,
                 double confidence_threshold,
                 std::optional<int> max_per_image = std::nullopt);

struct MeanApResult {
  std::optional<double> map;
  std::vector<ClassApRow> classes;
};

// Per class: AP at every grid threshold, AP_c = mean over the grid.
// mAP = mean of AP_c over classes with a defined AP. Throws
// kInvalidArgument when there is no annotation at all.
MeanApResult MeanAp(std::span<const Detection> detections,
                    std::span<const Annotation> annotations,
                    const ClassSchema& schema, const EvalConfig& config);

// Full evaluation into a report. Detections must reference known images and
// classes (kReferential otherwise).
EvalReport Evaluate(std::span<const Detection> detections,
                    const GroundTruth& ground_truth, const EvalConfig& config);

}  // namespace fisheye

#endif  // FISHEYE_METRICS_H_
