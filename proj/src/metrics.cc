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
#include "fisheye/metrics.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "fisheye/error.h"
#include "fisheye/parallel.h"

namespace fisheye {

namespace {

constexpr int kRecallSamples = 101;

// Detections and annotations of one class on one image.
struct ImageGroup {
  std::vector<size_t> dets;  // descending score, truncated to the per-image cap
  std::vector<size_t> rank;  // position of dets[k] in ClassIndex::ranked
  std::vector<size_t> gts;   // non-crowd first, then crowd; input order within
  std::vector<double> ious;  // dets.size() x gts.size(), row-major
};

// Everything about one class that does not depend on the IoU threshold.
struct ClassIndex {
  std::vector<ImageGroup> groups;
  std::vector<size_t> ranked;  // kept detections: score desc, input order
  std::int64_t num_positives = 0;
};

double ParseDouble(std::string_view token, std::string_view what) {
  double v = 0;
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("'{}' in {} is not a number", token, what));
  }
  return v;
}

ClassIndex BuildClassIndex(std::span<const Detection> dets,
                           std::span<const size_t> det_ids,
                           std::span<const Annotation> anns,
                           std::span<const size_t> ann_ids,
                           std::optional<int> max_per_image) {
  ClassIndex index;
  std::unordered_map<std::string_view, size_t> group_of;
  auto group_for = [&](const std::string& image_id) -> ImageGroup& {
    auto [it, inserted] = group_of.emplace(image_id, index.groups.size());
    if (inserted) index.groups.emplace_back();
    return index.groups[it->second];
  };
  for (size_t a : ann_ids) {
    group_for(anns[a].image_id).gts.push_back(a);
    if (!anns[a].crowd) ++index.num_positives;
  }
  for (size_t d : det_ids) group_for(dets[d].image_id).dets.push_back(d);

  for (ImageGroup& g : index.groups) {
    std::stable_sort(g.dets.begin(), g.dets.end(), [&](size_t a, size_t b) {
      return dets[a].score > dets[b].score;
    });
    if (max_per_image && g.dets.size() > static_cast<size_t>(*max_per_image)) {
      g.dets.resize(static_cast<size_t>(*max_per_image));
    }
    std::stable_partition(g.gts.begin(), g.gts.end(),
                          [&](size_t a) { return !anns[a].crowd; });
    g.ious.resize(g.dets.size() * g.gts.size());
    for (size_t i = 0; i < g.dets.size(); ++i) {
      const BoundingBox& db = dets[g.dets[i]].box;
      for (size_t j = 0; j < g.gts.size(); ++j) {
        const Annotation& a = anns[g.gts[j]];
        g.ious[i * g.gts.size() + j] =
            a.crowd ? IntersectionOverFirst(db, a.box) : Iou(db, a.box);
      }
    }
    index.ranked.insert(index.ranked.end(), g.dets.begin(), g.dets.end());
  }
  std::sort(index.ranked.begin(), index.ranked.end(), [&](size_t a, size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  std::unordered_map<size_t, size_t> position;
  position.reserve(index.ranked.size());
  for (size_t r = 0; r < index.ranked.size(); ++r) position[index.ranked[r]] = r;
  for (ImageGroup& g : index.groups) {
    g.rank.resize(g.dets.size());
    for (size_t i = 0; i < g.dets.size(); ++i) g.rank[i] = position[g.dets[i]];
  }
  return index;
}

MatchResult MatchClass(const ClassIndex& index,
                       std::span<const Annotation> anns, double threshold) {
  MatchResult result;
  result.matches.resize(index.ranked.size());
  result.num_positives = index.num_positives;
  std::int64_t matched_positives = 0;
  std::vector<char> taken;
  for (const ImageGroup& g : index.groups) {
    const size_t ng = g.gts.size();
    taken.assign(ng, 0);
    for (size_t i = 0; i < g.dets.size(); ++i) {
      // Same acceptance rule as pycocotools: a candidate must reach the
      // running best, so IoU >= threshold qualifies and later equal-IoU
      // annotations win ties.
      double best = std::min(threshold, 1.0 - 1e-10);
      std::optional<size_t> m;
      for (size_t j = 0; j < ng; ++j) {
        const bool crowd = anns[g.gts[j]].crowd;
        if (taken[j] && !crowd) continue;
        if (m && !anns[g.gts[*m]].crowd && crowd) break;
        const double iou = g.ious[i * ng + j];
        if (iou < best) continue;
        best = iou;
        m = j;
      }
      MatchedDetection& md = result.matches[g.rank[i]];
      md.detection_index = g.dets[i];
      if (!m) {
        md.status = MatchStatus::kFalsePositive;
        ++result.false_positives;
        continue;
      }
      md.annotation_index = g.gts[*m];
      md.iou = best;
      taken[*m] = 1;
      if (anns[g.gts[*m]].crowd) {
        md.status = MatchStatus::kIgnored;
      } else {
        md.status = MatchStatus::kTruePositive;
        ++result.true_positives;
        ++matched_positives;
      }
    }
  }
  result.false_negatives = result.num_positives - matched_positives;
  return result;
}

std::vector<size_t> AllIndices(size_t n) {
  std::vector<size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

IouGrid IouGrid::Coco() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return IouGrid(std::move(t));
}

IouGrid IouGrid::Create(std::vector<double> thresholds) {
  if (thresholds.empty()) {
    Fail(ErrorKind::kInvalidArgument, "IoU grid is empty");
  }
  for (size_t i = 0; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("IoU threshold {} outside (0, 1]", t));
    }
    if (i > 0 && !(t > thresholds[i - 1])) {
      Fail(ErrorKind::kInvalidArgument,
           "IoU thresholds must be strictly increasing");
    }
  }
  return IouGrid(std::move(thresholds));
}

IouGrid IouGrid::Parse(std::string_view spec) {
  std::vector<std::string_view> parts;
  const char sep = spec.find(':') != std::string_view::npos ? ':' : ',';
  size_t pos = 0;
  while (true) {
    const size_t next = spec.find(sep, pos);
    parts.push_back(spec.substr(pos, next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  std::vector<double> t;
  if (sep == ':') {
    if (parts.size() != 3) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("IoU grid '{}' must be start:stop:step", spec));
    }
    const double start = ParseDouble(parts[0], "IoU grid");
    const double stop = ParseDouble(parts[1], "IoU grid");
    const double step = ParseDouble(parts[2], "IoU grid");
    if (!(step > 0) || stop < start) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("IoU grid '{}' is empty or has a bad step", spec));
    }
    const long n = std::lround((stop - start) / step) + 1;
    for (long i = 0; i < n; ++i) {
      // Rounding to 10 places turns 0.5 + 3 * 0.05 into the double nearest
      // 0.65, matching the literal a user would type.
      t.push_back(std::round((start + i * step) * 1e10) / 1e10);
    }
  } else {
    for (std::string_view p : parts) t.push_back(ParseDouble(p, "IoU grid"));
  }
  return Create(std::move(t));
}

MatchResult MatchGreedy(std::span<const Detection> detections,
                        std::span<const Annotation> annotations,
                        double iou_threshold, std::optional<int> max_per_image) {
  std::optional<int> cls;
  auto check = [&](int c) {
    if (cls && *cls != c) {
      Fail(ErrorKind::kInvalidArgument,
           fmt::format("matching input mixes classes {} and {}", *cls, c));
    }
    cls = c;
  };
  for (const Detection& d : detections) check(d.class_id);
  for (const Annotation& a : annotations) check(a.class_id);
  const std::vector<size_t> det_ids = AllIndices(detections.size());
  const std::vector<size_t> ann_ids = AllIndices(annotations.size());
  const ClassIndex index = BuildClassIndex(detections, det_ids, annotations,
                                           ann_ids, max_per_image);
  return MatchClass(index, annotations, iou_threshold);
}

PrCurve BuildPrCurve(const MatchResult& match) {
  PrCurve curve;
  curve.interpolated.assign(kRecallSamples, 0.0);
  if (match.num_positives == 0) return curve;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  const double npos = static_cast<double>(match.num_positives);
  for (const MatchedDetection& m : match.matches) {
    if (m.status == MatchStatus::kIgnored) continue;
    if (m.status == MatchStatus::kTruePositive) {
      ++tp;
    } else {
      ++fp;
    }
    curve.points.push_back({static_cast<double>(tp) / npos,
                            static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  // Precision envelope: best precision at any recall at or beyond this rank.
  std::vector<double> envelope(curve.points.size());
  double running = 0;
  for (size_t i = curve.points.size(); i-- > 0;) {
    running = std::max(running, curve.points[i].precision);
    envelope[i] = running;
  }
  size_t k = 0;
  for (int s = 0; s < kRecallSamples; ++s) {
    const double r = s / 100.0;
    while (k < curve.points.size() && curve.points[k].recall < r) ++k;
    curve.interpolated[s] = k < curve.points.size() ? envelope[k] : 0.0;
  }
  return curve;
}

ApInterpolation ParseApInterpolation(std::string_view name) {
  if (name == "coco101") return ApInterpolation::kCoco101;
  if (name == "trapezoid") return ApInterpolation::kTrapezoid;
  Fail(ErrorKind::kInvalidArgument,
       fmt::format("unknown AP interpolation '{}' (expected coco101 or "
                   "trapezoid)",
                   name));
}

std::string_view ApInterpolationName(ApInterpolation interpolation) {
  return interpolation == ApInterpolation::kCoco101 ? "coco101" : "trapezoid";
}

double ApFromCurve(const PrCurve& curve, ApInterpolation interpolation) {
  if (interpolation == ApInterpolation::kCoco101) {
    return MeanOf(curve.interpolated);
  }
  // Piecewise-linear area under the envelope, starting at recall 0 with the
  // first envelope value.
  double area = 0;
  double prev_r = 0;
  double prev_p = -1;
  double running = 0;
  std::vector<double> envelope(curve.points.size());
  for (size_t i = curve.points.size(); i-- > 0;) {
    running = std::max(running, curve.points[i].precision);
    envelope[i] = running;
  }
  for (size_t i = 0; i < curve.points.size(); ++i) {
    if (prev_p < 0) prev_p = envelope[i];
    area += (curve.points[i].recall - prev_r) * (envelope[i] + prev_p) / 2;
    prev_r = curve.points[i].recall;
    prev_p = envelope[i];
  }
  return area;
}

std::optional<double> AveragePrecision(std::span<const Detection> detections,
                                       std::span<const Annotation> annotations,
                                       int class_id, double iou_threshold,
                                       ApInterpolation interpolation) {
  std::vector<size_t> det_ids;
  std::vector<size_t> ann_ids;
  for (size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].class_id == class_id) det_ids.push_back(i);
  }
  for (size_t i = 0; i < annotations.size(); ++i) {
    if (annotations[i].class_id == class_id) ann_ids.push_back(i);
  }
  const ClassIndex index =
      BuildClassIndex(detections, det_ids, annotations, ann_ids, std::nullopt);
  if (index.num_positives == 0) return std::nullopt;
  return ApFromCurve(BuildPrCurve(MatchClass(index, annotations, iou_threshold)),
                     interpolation);
}

F1Result F1FromCounts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  F1Result r;
  r.true_positives = tp;
  r.false_positives = fp;
  r.false_negatives = fn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0
             ? 2 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

F1Result F1Score(std::span<const Detection> detections,
                 std::span<const Annotation> annotations, double iou_threshold,
                 double confidence_threshold, std::optional<int> max_per_image) {
  std::map<int, std::pair<std::vector<size_t>, std::vector<size_t>>> by_class;
  for (size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].score >= confidence_threshold) {
      by_class[detections[i].class_id].first.push_back(i);
    }
  }
  for (size_t i = 0; i < annotations.size(); ++i) {
    by_class[annotations[i].class_id].second.push_back(i);
  }
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& [cls, ids] : by_class) {
    const ClassIndex index = BuildClassIndex(detections, ids.first, annotations,
                                             ids.second, max_per_image);
    const MatchResult m = MatchClass(index, annotations, iou_threshold);
    tp += m.true_positives;
    fp += m.false_positives;
    fn += m.false_negatives;
  }
  return F1FromCounts(tp, fp, fn);
}

MeanApResult MeanAp(std::span<const Detection> detections,
                    std::span<const Annotation> annotations,
                    const ClassSchema& schema, const EvalConfig& config) {
  if (annotations.empty()) {
    Fail(ErrorKind::kInvalidArgument,
         "ground truth has no annotations; nothing to evaluate");
  }
  const size_t nc = schema.size();
  std::vector<std::vector<size_t>> det_ids(nc);
  std::vector<std::vector<size_t>> ann_ids(nc);
  for (size_t i = 0; i < detections.size(); ++i) {
    det_ids[schema.IndexOf(detections[i].class_id)].push_back(i);
  }
  for (size_t i = 0; i < annotations.size(); ++i) {
    ann_ids[schema.IndexOf(annotations[i].class_id)].push_back(i);
  }

  std::vector<ClassIndex> indexes(nc);
  ParallelFor(nc, config.threads, [&](size_t c) {
    indexes[c] = BuildClassIndex(detections, det_ids[c], annotations, ann_ids[c],
                                 config.max_detections_per_image);
  });

  const std::vector<double>& grid = config.grid.thresholds();
  const size_t nt = grid.size();
  std::vector<std::optional<double>> cells(nc * nt);
  ParallelFor(nc * nt, config.threads, [&](size_t task) {
    const size_t c = task / nt;
    const size_t t = task % nt;
    if (indexes[c].num_positives == 0) return;
    cells[task] = ApFromCurve(
        BuildPrCurve(MatchClass(indexes[c], annotations, grid[t])),
        config.interpolation);
  });

  MeanApResult result;
  std::vector<double> defined;
  for (size_t c = 0; c < nc; ++c) {
    ClassApRow row;
    row.class_id = schema.classes()[c].id;
    row.name = schema.classes()[c].name;
    row.gt_count = indexes[c].num_positives;
    std::vector<double> values;
    for (size_t t = 0; t < nt; ++t) {
      row.ap_per_threshold.push_back(cells[c * nt + t]);
      if (cells[c * nt + t]) values.push_back(*cells[c * nt + t]);
    }
    if (!values.empty()) {
      row.ap = MeanOf(values);
      defined.push_back(*row.ap);
    }
    result.classes.push_back(std::move(row));
  }
  if (!defined.empty()) result.map = MeanOf(defined);
  return result;
}

EvalReport Evaluate(std::span<const Detection> detections,
                    const GroundTruth& gt, const EvalConfig& config) {
  if (!(config.f1_iou > 0.0 && config.f1_iou <= 1.0)) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("F1 IoU threshold {} outside (0, 1]", config.f1_iou));
  }
  if (!(config.confidence_threshold >= 0.0 &&
        config.confidence_threshold <= 1.0)) {
    Fail(ErrorKind::kInvalidArgument,
         fmt::format("confidence threshold {} outside [0, 1]",
                     config.confidence_threshold));
  }
  if (config.max_detections_per_image && *config.max_detections_per_image <= 0) {
    Fail(ErrorKind::kInvalidArgument, "per-image detection cap must be positive");
  }
  for (const Detection& d : detections) {
    if (gt.images.Find(d.image_id) == nullptr) {
      Fail(ErrorKind::kReferential,
           fmt::format("detection references image '{}' absent from the "
                       "ground truth",
                       d.image_id));
    }
    if (!gt.schema.Contains(d.class_id)) {
      Fail(ErrorKind::kReferential,
           fmt::format("detection has class id {} absent from the schema",
                       d.class_id));
    }
  }
  MeanApResult ap = MeanAp(detections, gt.annotations, gt.schema, config);
  const F1Result f1 =
      F1Score(detections, gt.annotations, config.f1_iou,
              config.confidence_threshold, config.max_detections_per_image);

  EvalReport report;
  report.label = config.label;
  report.classes = std::move(ap.classes);
  report.map = ap.map;
  report.precision = f1.precision;
  report.recall = f1.recall;
  report.f1 = f1.f1;
  report.true_positives = f1.true_positives;
  report.false_positives = f1.false_positives;
  report.false_negatives = f1.false_negatives;
  report.settings.iou_grid = config.grid.thresholds();
  report.settings.f1_iou = config.f1_iou;
  report.settings.confidence_threshold = config.confidence_threshold;
  report.settings.max_detections_per_image = config.max_detections_per_image;
  report.settings.interpolation =
      std::string(ApInterpolationName(config.interpolation));
  return report;
}

}  // namespace fisheye
