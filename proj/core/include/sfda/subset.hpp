// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

namespace sfda {

// Target-domain partition by detection variance of the source model.
enum class Subset {
  kSourceSimilar,
  kSourceDissimilar,
};

constexpr std::string_view to_string(Subset s) {
  return s == Subset::kSourceSimilar ? "similar" : "dissimilar";
}

}  // namespace sfda
