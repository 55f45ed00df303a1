// Copyright 2026 The cbamvgg Authors. All Rights Reserved.
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

namespace cbamvgg {

// Image preprocessing applied before an image enters the network. Stored in
// checkpoints so evaluation and explanation reproduce training's inputs.
struct PreprocessOptions {
  bool clahe = true;
  double clip_limit = 2.0;
  std::size_t tiles = 8;
};

}  // namespace cbamvgg
