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
#ifndef FISHEYE_FUSION_H_
#define FISHEYE_FUSION_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fisheye/formats.h"

namespace fisheye {

enum class ScoreMode {
  kMean,          // plain mean of member scores
  kWeightedMean,  // member scores averaged with their model weights
};

enum class ScoreRescale {
  kNone,
  kByModelCount,  // fused score *= min(n, N) / N
};

ScoreMode ParseScoreMode(std::string_view name);
std::string_view ScoreModeName(ScoreMode mode);
ScoreRescale ParseScoreRescale(std::string_view name);
std::string_view ScoreRescaleName(ScoreRescale rescale);

struct FusionConfig {
  double iou_threshold = 0.55;
  // Empty means weight 1 for every model.
  std::vector<double> model_weights;
  double skip_box_threshold = 0.0;
  ScoreMode score_mode = ScoreMode::kMean;
  ScoreRescale rescale = ScoreRescale::kNone;

  // Throws kInvalidArgument on out-of-range values or a weight list whose
  // length differs from `num_models`.
  void Validate(size_t num_models) const;
  double WeightOf(size_t model_index) const;
};

struct FusedMember {
  Detection detection;
  size_t model_index = 0;
  double weighted_score = 0;  // score * model weight
};

struct FusedCluster {
  int class_id = 0;
  std::vector<FusedMember> members;
  BoundingBox box;
  double score = 0;
};

// Weighted Box Fusion for one image. Per class, boxes are visited by weighted
// score (ties: model index, then input position); each joins the first
// cluster whose running fused box has IoU > iou_threshold with it, or opens
// a new cluster. Fused coordinates are the weighted-score average of the
// members. Clusters come back ordered by fused score, descending.
std::vector<FusedCluster> FuseClusters(
    std::span<const std::vector<Detection>> per_model, const FusionConfig& config);

// FuseClusters flattened to detections tagged "wbf".
std::vector<Detection> WeightedBoxFusion(
    std::span<const std::vector<Detection>> per_model, const FusionConfig& config);

// Dataset-level driver: splits every model's list by image, fuses images in
// parallel and concatenates the results in image-id order.
std::vector<Detection> FuseDataset(
    std::span<const std::vector<Detection>> per_model, const FusionConfig& config,
    int threads = 0);

// Greedy per-class NMS for one image: keep the best remaining box, drop
// same-class boxes with IoU > iou_threshold against it, repeat. Output is in
// descending score order.
std::vector<Detection> Nms(std::span<const Detection> detections,
                           double iou_threshold);

// NMS over the union of all models' detections, image by image.
std::vector<Detection> NmsDataset(
    std::span<const std::vector<Detection>> per_model, double iou_threshold,
    int threads = 0);

}  // namespace fisheye

#endif  // FISHEYE_FUSION_H_
