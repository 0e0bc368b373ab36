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
#ifndef FISHEYE_CLI_H_
#define FISHEYE_CLI_H_

#include "fisheye/error.h"

namespace fisheye {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFile = 3;
inline constexpr int kExitDomain = 4;
inline constexpr int kExitStage = 5;

int ExitCodeFor(ErrorKind kind);

// Entry point of the `fisheye` tool. Data goes to files, or to stdout with
// --stdout; logs go to stderr.
int RunCli(int argc, char** argv);

}  // namespace fisheye

#endif  // FISHEYE_CLI_H_
