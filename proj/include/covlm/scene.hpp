#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "covlm/geometry.hpp"
#include "covlm/image.hpp"

namespace covlm {

// Fixed synthetic taxonomy: shapes x colors.
inline const std::vector<std::string> kShapes = {"circle", "square", "triangle"};
inline const std::vector<std::string> kColors = {"red", "green", "blue", "yellow"};

int category_count();
std::string category_name(int id);          // e.g. "red circle"
int category_id(const std::string& name);   // -1 if unknown

struct SceneObject {
  int category = 0;  // index into the taxonomy
  BoxPix box;

  std::string category_name() const { return covlm::category_name(category); }
};

struct SceneConfig {
  int canvas = 64;
  int max_objects = 4;
  int min_size = 14;
  int max_size = 26;
  double max_pair_iou = 0.3;
  int max_retries = 40;
};

struct SceneRecord {
  uint64_t seed = 0;
  int canvas = 64;
  std::vector<SceneObject> objects;
};

/// splitmix64; used to derive per-record seeds from (master seed, index).
uint64_t derive_seed(uint64_t master, uint64_t index);

/// Places colored shapes with rejection sampling keeping pairwise IoU below
/// the configured cap. Deterministic per seed; may return fewer objects than
/// sampled when placement keeps colliding.
SceneRecord gen_synthetic_scene(uint64_t seed, const SceneConfig& cfg);

Image render_scene(const SceneRecord& scene);

/// Objects in reading order (top-left first); the canonical answer order.
std::vector<SceneObject> reading_order(const std::vector<SceneObject>& objs);

}  // namespace covlm
