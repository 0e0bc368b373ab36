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
#include "fisheye/fusion.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "fisheye/error.h"
#include "fisheye/parallel.h"

namespace fisheye {

namespace {

constexpr char kFusedTag[] = "wbf";

struct Candidate {
  const Detection* det;
  size_t model;
  size_t position;
  double weighted_score;
};

// Running sums for one cluster; the fused box is always sums / total.
struct Accumulator {
  std::vector<FusedMember> members;
  double total = 0;
  double sx1 = 0, sy1 = 0, sx2 = 0, sy2 = 0;
  BoundingBox box;

  void Add(const Candidate& c) {
    members.push_back({*c.det, c.model, c.weighted_score});
    const BoundingBox& b = c.det->box;
    total += c.weighted_score;
    sx1 += c.weighted_score * b.x1;
    sy1 += c.weighted_score * b.y1;
    sx2 += c.weighted_score * b.x2;
    sy2 += c.weighted_score * b.y2;
    if (members.size() == 1) {
      // s * x / s can be off by an ulp; a lone box is its own average.
      box = b;
    } else if (total > 0) {
      box = {sx1 / total, sy1 / total, sx2 / total, sy2 / total};
    } else {
      // Every member so far scored zero: fall back to the plain average.
      BoundingBox sum;
      for (const FusedMember& m : members) {
        sum.x1 += m.detection.box.x1;
        sum.y1 += m.detection.box.y1;
        sum.x2 += m.detection.box.x2;
        sum.y2 += m.detection.box.y2;
      }
      const double n = static_cast<double>(members.size());
      box = {sum.x1 / n, sum.y1 / n, sum.x2 / n, sum.y2 / n};
    }
  }
};

void CheckSingleImage(std::span<const std::vector<Detection>> per_model) {
  const std::string* image = nullptr;
  for (const auto& dets : per_model) {
    for (const Detection& d : dets) {
      if (image == nullptr) {
        image = &d.image_id;
      } else if (d.image_id != *image) {
        Fail(ErrorKind::kInvalidArgument,
             fmt::format("fusion input mixes images '{}' and '{}'; use the "
                         "dataset driver",
                         *image, d.image_id));
      }
    }
  }
}

double FusedScore(const std::vector<FusedMember>& members,
                  const FusionConfig& config, size_t num_models) {
  double score = 0;
  if (config.score_mode == ScoreMode::kMean) {
    for (const FusedMember& m : members) score += m.detection.score;
    score /= static_cast<double>(members.size());
  } else {
    double weight_sum = 0;
    for (const FusedMember& m : members) {
      score += m.weighted_score;
      weight_sum += config.WeightOf(m.model_index);
    }
    score /= weight_sum;
  }
  if (config.rescale == ScoreRescale::kByModelCount) {
    const double n = static_cast<double>(std::min(members.size(), num_models));
    score *= n / static_cast<double>(num_models);
  }
  return score;
}

// Splits every model's list by image id. Returns image ids in sorted order.
std::vector<std::string> GroupByImage(
    std::span<const std::vector<Detection>> per_model,
    std::unordered_map<std::string, std::vector<std::vector<Detection>>>* out) {
  for (size_t m = 0; m < per_model.size(); ++m) {
    for (const Detection& d : per_model[m]) {
      auto& slot = (*out)[d.image_id];
      if (slot.empty()) slot.resize(per_model.size());
      slot[m].push_back(d);
    }
  }
  std::vector<std::string> ids;
  ids.reserve(out->size());
  for (const auto& [id, _] : *out) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

ScoreMode ParseScoreMode(std::string_view name) {
  if (name == "mean" || name == "avg") return ScoreMode::kMean;
  if (name == "weighted-mean") return ScoreMode::kWeightedMean;
  Fail(ErrorKind::kInvalidArgument,
       fmt::format("unknown score mode '{}' (expected mean or weighted-mean)",
                   name));
}

std::string_view ScoreModeName(ScoreMode mode) {
  return mode == ScoreMode::kMean ? "mean" : "weighted-mean";
}

ScoreRescale ParseScoreRescale(std::string_view name) {
  if (name == "none") return ScoreRescale::kNone;
  if (name == "by-model-count" || name == "model-count") {
    return ScoreRescale::kByModelCount;
  }
  Fail(ErrorKind::kInvalidArgument,
       fmt::format("unknown rescale '{}' (expected none or by-model-count)",
                   name));
}

std::string_view ScoreRescaleName(ScoreRescale rescale) {
  return rescale == ScoreRescale::kNone ? "none" : "by-model-count";
}

void FusionConfig::Validate(size_t num_models) const {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("fusion IoU threshold {} outside (0, 1]", iou_threshold));
  }
  if (!(skip_box_threshold >= 0.0 && skip_box_threshold < 1.0)) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("skip-box threshold {} outside [0, 1)",
                     skip_box_threshold));
  }
  if (!model_weights.empty() && model_weights.size() != num_models) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("{} model weights given for {} models",
                     model_weights.size(), num_models));
  }
  for (double w : model_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("model weight {} must be positive", w));
    }
  }
}

double FusionConfig::WeightOf(size_t model_index) const {
  return model_weights.empty() ? 1.0 : model_weights[model_index];
}

std::vector<FusedCluster> FuseClusters(
    std::span<const std::vector<Detection>> per_model,
    const FusionConfig& config) {
  config.Validate(per_model.size());
  CheckSingleImage(per_model);

  std::map<int, std::vector<Candidate>> by_class;
  for (size_t m = 0; m < per_model.size(); ++m) {
    const double weight = config.WeightOf(m);
    for (size_t i = 0; i < per_model[m].size(); ++i) {
      const Detection& d = per_model[m][i];
      if (d.score < config.skip_box_threshold) continue;
      by_class[d.class_id].push_back({&d, m, i, d.score * weight});
    }
  }

  std::vector<FusedCluster> out;
  for (auto& [class_id, candidates] : by_class) {
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) {
                if (a.weighted_score != b.weighted_score) {
                  return a.weighted_score > b.weighted_score;
                }
                if (a.model != b.model) return a.model < b.model;
                return a.position < b.position;
              });
    std::vector<Accumulator> clusters;
    for (const Candidate& c : candidates) {
      auto it = std::find_if(clusters.begin(), clusters.end(),
                             [&](const Accumulator& acc) {
                               return Iou(acc.box, c.det->box) >
                                      config.iou_threshold;
                             });
      if (it == clusters.end()) {
        clusters.emplace_back();
        it = std::prev(clusters.end());
      }
      it->Add(c);
    }
    for (Accumulator& acc : clusters) {
      FusedCluster fc;
      fc.class_id = class_id;
      fc.box = acc.box;
      fc.score = FusedScore(acc.members, config, per_model.size());
      fc.members = std::move(acc.members);
      out.push_back(std::move(fc));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FusedCluster& a, const FusedCluster& b) {
                     return a.score > b.score;
                   });
  return out;
}

std::vector<Detection> WeightedBoxFusion(
    std::span<const std::vector<Detection>> per_model,
    const FusionConfig& config) {
  std::vector<Detection> out;
  for (FusedCluster& c : FuseClusters(per_model, config)) {
    out.push_back({c.members.front().detection.image_id, c.class_id, c.box,
                   c.score, kFusedTag});
  }
  return out;
}

std::vector<Detection> FuseDataset(
    std::span<const std::vector<Detection>> per_model,
    const FusionConfig& config, int threads) {
  config.Validate(per_model.size());
  std::unordered_map<std::string, std::vector<std::vector<Detection>>> groups;
  const std::vector<std::string> ids = GroupByImage(per_model, &groups);
  std::vector<std::vector<Detection>> fused(ids.size());
  ParallelFor(ids.size(), threads, [&](size_t i) {
    fused[i] = WeightedBoxFusion(groups.at(ids[i]), config);
  });
  std::vector<Detection> out;
  for (auto& f : fused) {
    std::move(f.begin(), f.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<Detection> Nms(std::span<const Detection> detections,
                           double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("NMS IoU threshold {} outside (0, 1]", iou_threshold));
  }
  for (const Detection& d : detections) {
    if (d.image_id != detections.front().image_id) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("NMS input mixes images '{}' and '{}'",
                       detections.front().image_id, d.image_id));
    }
  }
  std::vector<size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return detections[a].score > detections[b].score;
  });
  std::vector<bool> suppressed(detections.size(), false);
  std::vector<Detection> kept;
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(detections[i]);
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      const size_t j = order[oj];
      if (suppressed[j] || detections[j].class_id != detections[i].class_id) {
        continue;
      }
      if (Iou(detections[i].box, detections[j].box) > iou_threshold) {
        suppressed[j] = true;
      }
    }
  }
  return kept;
}

std::vector<Detection> NmsDataset(
    std::span<const std::vector<Detection>> per_model, double iou_threshold,
    int threads) {
  std::unordered_map<std::string, std::vector<std::vector<Detection>>> groups;
  const std::vector<std::string> ids = GroupByImage(per_model, &groups);
  std::vector<std::vector<Detection>> kept(ids.size());
  ParallelFor(ids.size(), threads, [&](size_t i) {
    std::vector<Detection> all;
    for (auto& dets : groups.at(ids[i])) {
      all.insert(all.end(), dets.begin(), dets.end());
    }
    kept[i] = Nms(all, iou_threshold);
  });
  std::vector<Detection> out;
  for (auto& k : kept) std::move(k.begin(), k.end(), std::back_inserter(out));
  return out;
}

}  // namespace fisheye
