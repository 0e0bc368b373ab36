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
#ifndef FISHEYE_PROCESS_H_
#define FISHEYE_PROCESS_H_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace fisheye {

struct ProcessResult {
  int exit_code = 0;  // 128 + signal when killed by a signal
  bool timed_out = false;
  double seconds = 0;
};

// Runs `command` through /bin/sh -c in its own process group, with stdin
// from /dev/null and stdout/stderr appended to `log_path`. On timeout the
// whole group is killed. The environment is passed through unchanged.
ProcessResult RunShellCommand(const std::string& command,
                              const std::filesystem::path& log_path,
                              std::optional<double> timeout_seconds);

// Single-quotes `text` for /bin/sh.
std::string ShellQuote(std::string_view text);

// Last `lines` lines of a text file, or "" if it cannot be read.
std::string TailOfFile(const std::filesystem::path& path, int lines);

}  // namespace fisheye

#endif  // FISHEYE_PROCESS_H_
