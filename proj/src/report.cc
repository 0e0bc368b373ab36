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
#include "fisheye/report.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fisheye/error.h"
#include "fisheye/formats.h"
#include "json.hpp"

namespace fisheye {

namespace {

using ojson = nlohmann::ordered_json;

constexpr double kConsistencyTolerance = 1e-12;

ojson OptionalNumber(const std::optional<double>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

std::optional<double> ReadOptional(const ojson& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::string Cell(const std::optional<double>& v) {
  return v ? FormatMetric(*v) : std::string("undefined");
}

std::string PadRight(std::string s, size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

// Renders rows as left-aligned columns separated by two spaces.
std::string AlignColumns(const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (size_t i = 0; i < row.size(); ++i) {
      widths[i] = std::max(widths[i], row[i].size());
    }
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (size_t i = 0; i < row.size(); ++i) {
      line += i + 1 == row.size() ? row[i] : PadRight(row[i], widths[i] + 2);
    }
    out += line + "\n";
  }
  return out;
}

double F1FromPR(double p, double r) {
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

}  // namespace

double MeanOf(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

void ValidateReport(const EvalReport& report) {
  std::vector<double> defined;
  for (const ClassApRow& row : report.classes) {
    if (row.ap) {
      std::vector<double> cells;
      for (const auto& c : row.ap_per_threshold) {
        if (c) cells.push_back(*c);
      }
      if (!cells.empty() &&
          std::abs(MeanOf(cells) - *row.ap) > kConsistencyTolerance) {
        Fail(ErrorKind::kDomain,
             fmt::format("class '{}' AP {} is not the mean of its cells",
                         row.name, *row.ap));
      }
      defined.push_back(*row.ap);
    }
  }
  if (defined.empty() != !report.map.has_value()) {
    Fail(ErrorKind::kDomain,
         "mAP must be present exactly when some class AP is defined");
  }
  if (report.map &&
      std::abs(MeanOf(defined) - *report.map) > kConsistencyTolerance) {
    Fail(ErrorKind::kDomain,
         fmt::format("mAP {} is not the mean of the class APs", *report.map));
  }
  if (std::abs(F1FromPR(report.precision, report.recall) - report.f1) >
      kConsistencyTolerance) {
    Fail(ErrorKind::kDomain,
         fmt::format("F1 {} disagrees with P {} and R {}", report.f1,
                     report.precision, report.recall));
  }
}

std::string ReportToJson(const EvalReport& r) {
  ojson classes = ojson::array();
  for (const ClassApRow& row : r.classes) {
    ojson cells = ojson::array();
    for (const auto& c : row.ap_per_threshold) cells.push_back(OptionalNumber(c));
    classes.push_back({{"id", row.class_id},
                       {"name", row.name},
                       {"gt_count", row.gt_count},
                       {"ap", OptionalNumber(row.ap)},
                       {"ap_per_threshold", cells}});
  }
  ojson settings = {
      {"iou_grid", r.settings.iou_grid},
      {"f1_iou", r.settings.f1_iou},
      {"confidence_threshold", r.settings.confidence_threshold},
      {"max_detections_per_image",
       r.settings.max_detections_per_image
           ? ojson(*r.settings.max_detections_per_image)
           : ojson(nullptr)},
      {"interpolation", r.settings.interpolation}};
  ojson doc = {{"label", r.label},
               {"map", OptionalNumber(r.map)},
               {"precision", r.precision},
               {"recall", r.recall},
               {"f1", r.f1},
               {"counts",
                {{"tp", r.true_positives},
                 {"fp", r.false_positives},
                 {"fn", r.false_negatives}}},
               {"classes", classes},
               {"settings", settings}};
  return doc.dump(2) + "\n";
}

EvalReport ReportFromJson(std::string_view text, std::string_view source) {
  EvalReport r;
  try {
    const ojson doc = ojson::parse(text);
    r.label = doc.value("label", std::string());
    r.map = ReadOptional(doc.at("map"));
    r.precision = doc.at("precision").get<double>();
    r.recall = doc.at("recall").get<double>();
    r.f1 = doc.at("f1").get<double>();
    const ojson& counts = doc.at("counts");
    r.true_positives = counts.at("tp").get<std::int64_t>();
    r.false_positives = counts.at("fp").get<std::int64_t>();
    r.false_negatives = counts.at("fn").get<std::int64_t>();
    for (const ojson& c : doc.at("classes")) {
      ClassApRow row;
      row.class_id = c.at("id").get<int>();
      row.name = c.at("name").get<std::string>();
      row.gt_count = c.value("gt_count", std::int64_t{0});
      row.ap = ReadOptional(c.at("ap"));
      for (const ojson& cell : c.at("ap_per_threshold")) {
        row.ap_per_threshold.push_back(ReadOptional(cell));
      }
      r.classes.push_back(std::move(row));
    }
    const ojson& s = doc.at("settings");
    r.settings.iou_grid = s.at("iou_grid").get<std::vector<double>>();
    r.settings.f1_iou = s.at("f1_iou").get<double>();
    r.settings.confidence_threshold = s.at("confidence_threshold").get<double>();
    if (!s.at("max_detections_per_image").is_null()) {
      r.settings.max_detections_per_image =
          s["max_detections_per_image"].get<int>();
    }
    r.settings.interpolation = s.value("interpolation", std::string("coco101"));
  } catch (const ojson::parse_error& e) {
    Fail(ErrorKind::kParse,
         fmt::format("{}: malformed JSON at byte {}", source, e.byte));
  } catch (const ojson::exception& e) {
    Fail(ErrorKind::kParse, fmt::format("{}: {}", source, e.what()));
  }
  try {
    ValidateReport(r);
  } catch (const Error& e) {
    Fail(e.kind(), fmt::format("{}: {}", source, e.what()));
  }
  return r;
}

void WriteReport(const EvalReport& report, const std::filesystem::path& path,
                 const std::optional<std::filesystem::path>& table_path,
                 const std::optional<std::filesystem::path>& csv_path) {
  WriteFileAtomic(path, ReportToJson(report));
  if (table_path) WriteFileAtomic(*table_path, RenderReportTable(report));
  if (csv_path) WriteFileAtomic(*csv_path, RenderApMatrixCsv(report));
}

EvalReport ReadReport(const std::filesystem::path& path) {
  return ReportFromJson(ReadFile(path), path.string());
}

std::string FormatMetric(double value) {
  std::string s = fmt::format("{:.4f}", value);
  if (s == "-0.0000") s = "0.0000";
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') {
    s.pop_back();
  }
  return s;
}

std::string RenderReportTable(const EvalReport& r) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Class", "GT"};
  for (double t : r.settings.iou_grid) header.push_back(fmt::format("AP@{:.2f}", t));
  header.push_back("AP");
  rows.push_back(std::move(header));
  for (const ClassApRow& row : r.classes) {
    std::vector<std::string> line{row.name, std::to_string(row.gt_count)};
    for (const auto& c : row.ap_per_threshold) line.push_back(Cell(c));
    line.push_back(Cell(row.ap));
    rows.push_back(std::move(line));
  }
  std::string out;
  if (!r.label.empty()) out += fmt::format("Evaluation: {}\n", r.label);
  out += AlignColumns(rows);
  std::string grid = "custom grid";
  if (!r.settings.iou_grid.empty()) {
    grid = fmt::format("IoU {:.2f}:{:.2f}", r.settings.iou_grid.front(),
                       r.settings.iou_grid.back());
  }
  out += fmt::format("mAP ({}): {}\n", grid, Cell(r.map));
  out += fmt::format(
      "F1 (IoU {}, conf >= {}): P {}  R {}  F1 {}  (TP {}, FP {}, FN {})\n",
      FormatMetric(r.settings.f1_iou),
      FormatMetric(r.settings.confidence_threshold), FormatMetric(r.precision),
      FormatMetric(r.recall), FormatMetric(r.f1), r.true_positives,
      r.false_positives, r.false_negatives);
  return out;
}

std::string RenderApMatrixCsv(const EvalReport& r) {
  std::string out = "class_id,class";
  for (double t : r.settings.iou_grid) out += "," + FormatDouble(t);
  out += ",ap\n";
  for (const ClassApRow& row : r.classes) {
    out += fmt::format("{},{}", row.class_id, row.name);
    for (const auto& c : row.ap_per_threshold) {
      out += "," + (c ? FormatDouble(*c) : std::string());
    }
    out += "," + (row.ap ? FormatDouble(*row.ap) : std::string()) + "\n";
  }
  return out;
}

std::string RenderComparisonTable(std::span<const EvalReport> reports,
                                  ComparisonMetric metric) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"ID", "Method"};
  if (metric != ComparisonMetric::kF1) header.push_back("AP_0.5-0.95");
  if (metric != ComparisonMetric::kMap) header.push_back("F1");
  rows.push_back(std::move(header));
  for (size_t i = 0; i < reports.size(); ++i) {
    const EvalReport& r = reports[i];
    std::vector<std::string> line{std::to_string(i + 1),
                                  r.label.empty() ? "-" : r.label};
    if (metric != ComparisonMetric::kF1) {
      line.push_back(r.map ? FormatMetric(*r.map) : "-");
    }
    if (metric != ComparisonMetric::kMap) line.push_back(FormatMetric(r.f1));
    rows.push_back(std::move(line));
  }
  return AlignColumns(rows);
}

}  // namespace fisheye
