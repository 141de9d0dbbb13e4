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

#include "nrrdd/imageops.hpp"
#include "nrrdd/model.hpp"

namespace nrrdd {

/// Class activation map. Raw maps live at feature resolution; finalized maps
/// are upsampled to the image size and min-max normalised to [0, 1].
struct CamMap {
  Plane values;
  int class_id = 0;
  bool normalized = false;
};

/// Per-pixel update weight for refinement; zero on critical pixels.
struct MaskMap {
  Plane values;
  double epsilon = 0.0;
};

/// Raw map from precomputed final feature maps (image `i` of `features`)
/// and a K x F classifier weight matrix.
CamMap cam_from_features(const Tensor& features, int i, const Tensor& classifier_w,
                         int class_id);

/// Raw map for image 0 of `image`.
CamMap compute_cam(const ModelSnapshot& model, const Tensor& image, int class_id);

/// Upsamples with aligned corners, then min-max normalises. A constant raw
/// map becomes all zeros.
CamMap finalize_cam(const CamMap& raw, int target_h, int target_w);

/// max(0, epsilon - cam) per pixel.
MaskMap non_critical_mask(const CamMap& cam, double epsilon);

/// compute_cam + finalize_cam at the model's input size, for every image of
/// a batch, using one forward pass.
std::vector<CamMap> batch_cams(const ModelSnapshot& model, const Tensor& images,
                               std::span<const int> class_ids);

}  // namespace nrrdd
