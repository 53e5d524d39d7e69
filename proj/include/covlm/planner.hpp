#pragma once

#include <string>

namespace covlm {

/// Output spatial size of a strided convolution along one dimension.
inline int conv_out(int n, int k, int s, int p) {
  return (n + 2 * p - k) / s + 1;
}

/// Number of visual tokens for input resolution H (square), patch size P and
/// projector stride S. Throws if H is not divisible by P.
int visual_token_count(int H, int P, int S, int k = 3, int p = 1);

struct ResolutionPlan {
  int resolution = 0;  // px
  int grid = 0;        // patches per side
  int tokens = 0;      // visual tokens after the projector
  int context_limit = 0;
  int answer_budget = 0;
  int reserve = 0;

  std::string to_json() const;
};

/// Finds the maximum attainable visual token count within
/// context_limit - answer_budget - reserve, and the smallest resolution
/// (multiple of P) attaining it. Throws std::runtime_error when the budget
/// admits no tokens.
ResolutionPlan plan_resolution(int context_limit, int answer_budget,
                               int reserve, int P, int S, int k = 3, int p = 1);

}  // namespace covlm
