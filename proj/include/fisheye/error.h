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
#ifndef FISHEYE_ERROR_H_
#define FISHEYE_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace fisheye {

// Failure categories. The CLI maps each one onto a distinct exit code.
enum class ErrorKind {
  kInvalidArgument,
  kParse,        // malformed file content; message carries file + offset/line
  kDomain,       // well-formed value outside its legal range
  kReferential,  // reference to an unknown image, class or record
  kIo,
  kStage,  // external adapter or pipeline stage failure
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace fisheye

#endif  // FISHEYE_ERROR_H_
