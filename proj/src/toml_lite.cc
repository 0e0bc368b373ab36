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
#include "fisheye/toml_lite.h"

#include <cctype>
#include <charconv>
#include <string>

#include <fmt/format.h>

#include "fisheye/error.h"

namespace fisheye {

namespace {

using json = nlohmann::json;

class LineParser {
 public:
  LineParser(std::string_view line, std::string_view source, int line_no)
      : s_(line), source_(source), line_no_(line_no) {}

  [[noreturn]] void Error(std::string_view what) const {
    Fail(ErrorKind::kParse,
         fmt::format("{}:{}: {}", source_, line_no_, what));
  }

  void SkipSpace() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  // True when only whitespace or a comment remains.
  bool AtEnd() {
    SkipSpace();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  bool Consume(char c) {
    SkipSpace();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string Key() {
    SkipSpace();
    if (pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\'')) {
      return String();
    }
    const size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
            s_[pos_] == '_' || s_[pos_] == '-')) {
      ++pos_;
    }
    if (pos_ == start) Error("expected a key");
    if (pos_ < s_.size() && s_[pos_] == '.') Error("dotted keys are not supported");
    return std::string(s_.substr(start, pos_ - start));
  }

  json Value() {
    SkipSpace();
    if (pos_ >= s_.size()) Error("missing value");
    const char c = s_[pos_];
    if (c == '"' || c == '\'') return String();
    if (c == '[') return Array();
    if (c == '{') Error("inline tables are not supported");
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return Number();
  }

 private:
  std::string String() {
    const char quote = s_[pos_++];
    if (s_.substr(pos_, 2) == std::string(2, quote)) {
      Error("multi-line strings are not supported");
    }
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != quote) {
      char c = s_[pos_++];
      if (quote == '"' && c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case 'r': c = '\r'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default:
            Error(fmt::format("unsupported escape '\\{}'", e));
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) Error("unterminated string");
    ++pos_;
    return out;
  }

  json Array() {
    ++pos_;
    json arr = json::array();
    if (Consume(']')) return arr;
    while (true) {
      arr.push_back(Value());
      if (Consume(']')) return arr;
      if (!Consume(',')) Error("expected ',' or ']' in array");
      if (Consume(']')) return arr;  // trailing comma
    }
  }

  json Number() {
    const size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
            s_[pos_] == '+' || s_[pos_] == '-' || s_[pos_] == '.' ||
            s_[pos_] == '_')) {
      ++pos_;
    }
    std::string token;
    for (char c : s_.substr(start, pos_ - start)) {
      if (c != '_') token.push_back(c);
    }
    if (token.empty()) Error("expected a value");
    const char* first = token.data() + (token[0] == '+' ? 1 : 0);
    const char* last = token.data() + token.size();
    const bool is_float = token.find_first_of(".eE") != std::string::npos ||
                          token == "inf" || token == "nan";
    if (!is_float) {
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec == std::errc() && ptr == last) return v;
    } else {
      double v = 0;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec == std::errc() && ptr == last) return v;
    }
    Error(fmt::format("invalid value '{}'", token));
  }

  std::string_view s_;
  std::string_view source_;
  int line_no_;
  size_t pos_ = 0;
};

}  // namespace

json ParseTomlLite(std::string_view text, std::string_view source) {
  json root = json::object();
  json* table = &root;
  int line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = end + 1;
    ++line_no;

    LineParser p(line, source, line_no);
    if (p.AtEnd()) continue;
    if (p.Consume('[')) {
      const bool array_table = p.Consume('[');
      const std::string name = p.Key();
      if (!p.Consume(']') || (array_table && !p.Consume(']'))) {
        p.Error("malformed table header");
      }
      if (!p.AtEnd()) p.Error("trailing characters after table header");
      if (array_table) {
        json& arr = root[name];
        if (arr.is_null()) arr = json::array();
        if (!arr.is_array()) p.Error(fmt::format("'{}' is not an array of tables", name));
        arr.push_back(json::object());
        table = &arr.back();
      } else {
        if (root.contains(name)) p.Error(fmt::format("table '{}' defined twice", name));
        root[name] = json::object();
        table = &root[name];
      }
      continue;
    }
    const std::string key = p.Key();
    if (!p.Consume('=')) p.Error("expected '=' after key");
    json value = p.Value();
    if (!p.AtEnd()) p.Error("trailing characters after value");
    if (table->contains(key)) p.Error(fmt::format("key '{}' defined twice", key));
    (*table)[key] = std::move(value);
  }
  return root;
}

}  // namespace fisheye
