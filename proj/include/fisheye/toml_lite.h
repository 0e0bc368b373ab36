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
#ifndef FISHEYE_TOML_LITE_H_
#define FISHEYE_TOML_LITE_H_

#include <string_view>

#include "json.hpp"

namespace fisheye {

// Reads the TOML subset used by pipeline configs into a JSON object:
// `key = value` pairs, [table] and [[array-of-tables]] headers, '#'
// comments, basic and literal strings, integers, floats, booleans and
// single-line arrays of those. Dotted keys, inline tables, multi-line
// strings and dates are rejected. Errors are kParse with "source:line".
nlohmann::json ParseTomlLite(std::string_view text, std::string_view source);

}  // namespace fisheye

#endif  // FISHEYE_TOML_LITE_H_
