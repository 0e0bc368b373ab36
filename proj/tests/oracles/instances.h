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
#ifndef FISHEYE_TESTS_ORACLES_INSTANCES_H_
#define FISHEYE_TESTS_ORACLES_INSTANCES_H_

// Random instance generators and oracle comparisons shared by the unit and
// acceptance suites.

#include <random>
#include <string>
#include <vector>

#include "fisheye/formats.h"
#include "fisheye/fusion.h"

namespace fisheye::oracle {

struct WbfInstance {
  std::vector<std::vector<Detection>> per_model;
  FusionConfig config;
};

// 1-3 models, up to 12 boxes each over 3 classes, jittered around a few
// anchors so that clusters actually form. Scores are U[0.05, 1].
WbfInstance RandomWbfInstance(std::mt19937_64& rng);

// Runs FuseClusters and BruteForceWbf and matches clusters by membership.
// Returns an empty string when every cluster agrees within `tolerance`,
// else a description of the first difference.
std::string CompareWbfWithOracle(const WbfInstance& instance,
                                 double tolerance);

struct ApInstance {
  std::vector<Detection> detections;
  std::vector<Annotation> annotations;  // non-crowd, one class
};

// Up to 4 images, 8 detections and 4 annotations of class 0. Coordinates
// sit on a coarse grid and scores repeat, so IoU and score ties occur.
ApInstance RandomApInstance(std::mt19937_64& rng);

}  // namespace fisheye::oracle

#endif  // FISHEYE_TESTS_ORACLES_INSTANCES_H_
