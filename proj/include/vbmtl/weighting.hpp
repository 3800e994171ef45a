// vbmtl/weighting.hpp

// Copyright 2026 The vbmtl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "vbmtl/common.hpp"

#include <map>
#include <span>

namespace vbmtl {

enum class SampleWeighting { kNone, kInverseCountryIntraBatch };

inline std::string ToString(SampleWeighting m) {
  return m == SampleWeighting::kNone ? "none" : "inverse_country";
}

inline SampleWeighting ParseSampleWeighting(std::string_view s) {
  if (s == "none") return SampleWeighting::kNone;
  if (s == "inverse_country") return SampleWeighting::kInverseCountryIntraBatch;
  throw ConfigError(StrCat("unknown sample weighting '", s, "'"));
}

/// Per-sample weights for one batch. Under kInverseCountryIntraBatch,
/// u_b = B / (G * n_{c_b}) with G distinct countries in the batch, so the
/// weights sum to B (mean 1).
inline Vector ComputeSampleWeights(std::span<const int> batch_countries,
                                   SampleWeighting mode) {
  const auto batch = static_cast<Eigen::Index>(batch_countries.size());
  Vector u = Vector::Ones(batch);
  if (mode == SampleWeighting::kNone || batch == 0) return u;
  std::map<int, long long> counts;
  for (int c : batch_countries) ++counts[c];
  const double groups = static_cast<double>(counts.size());
  for (Eigen::Index b = 0; b < batch; ++b)
    u(b) = static_cast<double>(batch) /
           (groups * static_cast<double>(counts[batch_countries[b]]));
  return u;
}

}  // namespace vbmtl
