// Copyright 2026 The nrrdd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nrrdd {

/// Error categories. The numeric values are shared with the C API status codes.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kConfig = 2,
  kMissingArtifact = 3,
  kIo = 4,
  kCorrupt = 5,
  kVersionMismatch = 6,
  kModeMismatch = 7,
  kShapeMismatch = 8,
  kUnsupported = 9,
  kInternal = 10,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

struct ImageShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  bool operator==(const ImageShape&) const = default;
};

/// Axis-aligned pixel rectangle, (top, left, height, width).
struct Box {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  int area() const { return height * width; }
  bool empty() const { return height <= 0 || width <= 0; }
  bool contains(int y, int x) const {
    return y >= top && y < top + height && x >= left && x < left + width;
  }
  bool inside(int h, int w) const {
    return top >= 0 && left >= 0 && top + height <= h && left + width <= w;
  }
  bool operator==(const Box&) const = default;
};

}  // namespace nrrdd
