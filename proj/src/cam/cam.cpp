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

#include "nrrdd/cam.hpp"

#include <algorithm>

namespace nrrdd {

CamMap cam_from_features(const Tensor& features, int i, const Tensor& classifier_w,
                         int class_id) {
  require(class_id >= 0 && class_id < classifier_w.n(), ErrorCode::kInvalidArgument,
          "class " + std::to_string(class_id) + " out of range");
  require(classifier_w.c() == features.c(), ErrorCode::kShapeMismatch,
          "classifier width does not match feature channels");
  CamMap cam;
  cam.class_id = class_id;
  cam.values = Plane(features.h(), features.w());
  for (int k = 0; k < features.c(); ++k) {
    const double w = classifier_w.at(class_id, k, 0, 0);
    for (int y = 0; y < features.h(); ++y)
      for (int x = 0; x < features.w(); ++x) cam.values.at(y, x) += w * features.at(i, k, y, x);
  }
  return cam;
}

CamMap compute_cam(const ModelSnapshot& model, const Tensor& image, int class_id) {
  require(class_id >= 0 && class_id < model.num_classes(), ErrorCode::kInvalidArgument,
          "class " + std::to_string(class_id) + " out of range");
  const ForwardTrace t = forward(model, image.n() == 1 ? image : image.image(0));
  return cam_from_features(t.features, 0, model.classifier_w(), class_id);
}

CamMap finalize_cam(const CamMap& raw, int target_h, int target_w) {
  require(raw.values.height > 0 && raw.values.width > 0, ErrorCode::kInvalidArgument,
          "empty raw CAM");
  require(target_h >= raw.values.height && target_w >= raw.values.width,
          ErrorCode::kInvalidArgument, "CAM target size smaller than the raw map");
  CamMap out;
  out.class_id = raw.class_id;
  out.normalized = true;
  const auto [lo_it, hi_it] = std::minmax_element(raw.values.values.begin(), raw.values.values.end());
  if (*lo_it == *hi_it) {
    out.values = Plane(target_h, target_w, 0.0);
    return out;
  }
  out.values = resize_align_corners(raw.values, target_h, target_w);
  auto& v = out.values.values;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double mn = *lo, range = *hi - *lo;
  for (double& x : v) x = std::clamp((x - mn) / range, 0.0, 1.0);
  return out;
}

MaskMap non_critical_mask(const CamMap& cam, double epsilon) {
  require(cam.normalized, ErrorCode::kInvalidArgument, "mask needs a normalised CAM");
  require(epsilon > 0.0 && epsilon < 1.0, ErrorCode::kInvalidArgument,
          "epsilon must lie in (0, 1)");
  MaskMap m;
  m.epsilon = epsilon;
  m.values = Plane(cam.values.height, cam.values.width);
  for (std::size_t i = 0; i < cam.values.size(); ++i) {
    const double c = cam.values.values[i];
    m.values.values[i] = c >= epsilon ? 0.0 : epsilon - c;
  }
  return m;
}

std::vector<CamMap> batch_cams(const ModelSnapshot& model, const Tensor& images,
                               std::span<const int> class_ids) {
  require(class_ids.size() == static_cast<std::size_t>(images.n()), ErrorCode::kShapeMismatch,
          "one class id per image required");
  std::vector<CamMap> out;
  out.reserve(images.n());
  constexpr int kChunk = 100;
  for (int start = 0; start < images.n(); start += kChunk) {
    const int n = std::min(kChunk, images.n() - start);
    Tensor chunk(n, images.image_shape());
    for (int i = 0; i < n; ++i) chunk.set_image(i, images.image(start + i));
    const ForwardTrace t = forward(model, chunk);
    for (int i = 0; i < n; ++i)
      out.push_back(finalize_cam(
          cam_from_features(t.features, i, model.classifier_w(), class_ids[start + i]),
          images.h(), images.w()));
  }
  return out;
}

}  // namespace nrrdd
