#include "covlm/planner.hpp"

#include <stdexcept>

#include "json.hpp"

namespace covlm {

int visual_token_count(int H, int P, int S, int k, int p) {
  if (P <= 0 || H <= 0 || H % P != 0)
    throw std::invalid_argument("visual_token_count: H must be a positive multiple of P");
  if (S < 1 || k < 1 || p < 0)
    throw std::invalid_argument("visual_token_count: bad conv parameters");
  const int g = H / P;
  if (g + 2 * p < k)
    throw std::invalid_argument("visual_token_count: grid smaller than kernel");
  const int side = conv_out(g, k, S, p);
  return side * side;
}

std::string ResolutionPlan::to_json() const {
  nlohmann::json j{
      {"resolution", resolution},
      {"grid", grid},
      {"tokens", tokens},
      {"budget",
       {{"limit", context_limit}, {"answer", answer_budget}, {"reserve", reserve}}}};
  return j.dump(2);
}

ResolutionPlan plan_resolution(int context_limit, int answer_budget,
                               int reserve, int P, int S, int k, int p) {
  if (context_limit <= answer_budget + reserve)
    throw std::runtime_error("plan_resolution: budget admits zero visual tokens");
  const int budget = context_limit - answer_budget - reserve;

  // Token count is non-decreasing in H; sweep multiples of P until over budget,
  // keeping the smallest H attaining the running maximum (conv_out is a step
  // function, so several resolutions can tie).
  ResolutionPlan best;
  for (int g = 2;; ++g) {
    const int H = g * P;
    if (g + 2 * p < k) continue;
    const int tokens = visual_token_count(H, P, S, k, p);
    if (tokens > budget) break;
    if (tokens > best.tokens) {
      best.resolution = H;
      best.grid = g;
      best.tokens = tokens;
    }
  }
  if (best.tokens == 0)
    throw std::runtime_error("plan_resolution: budget admits zero visual tokens");
  best.context_limit = context_limit;
  best.answer_budget = answer_budget;
  best.reserve = reserve;
  return best;
}

}  // namespace covlm
