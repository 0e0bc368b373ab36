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
#ifndef FISHEYE_PARALLEL_H_
#define FISHEYE_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace fisheye {

// 0 means "all hardware threads". Never returns less than 1.
int ResolveThreads(int requested);

// Calls fn(i) for i in [0, n) on up to `threads` workers. Indices are handed
// out dynamically. The first exception thrown by any call is rethrown after
// all workers stop.
void ParallelFor(std::size_t n, int threads,
                 const std::function<void(std::size_t)>& fn);

}  // namespace fisheye

#endif  // FISHEYE_PARALLEL_H_
