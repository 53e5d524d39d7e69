#include "covlm/scene.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace covlm {

namespace {

struct Rgb {
  uint8_t r, g, b;
};

Rgb color_rgb(int color_idx) {
  static const Rgb table[] = {
      {220, 40, 40},   // red
      {40, 170, 60},   // green
      {50, 80, 220},   // blue
      {235, 200, 40},  // yellow
  };
  return table[color_idx];
}

constexpr uint8_t kBackground = 232;

}  // namespace

int category_count() {
  return static_cast<int>(kShapes.size() * kColors.size());
}

std::string category_name(int id) {
  const int shape = id % static_cast<int>(kShapes.size());
  const int color = id / static_cast<int>(kShapes.size());
  return kColors[color] + " " + kShapes[shape];
}

int category_id(const std::string& name) {
  for (int i = 0; i < category_count(); ++i)
    if (category_name(i) == name) return i;
  return -1;
}

uint64_t derive_seed(uint64_t master, uint64_t index) {
  uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SceneRecord gen_synthetic_scene(uint64_t seed, const SceneConfig& cfg) {
  if (cfg.canvas < 32) throw std::invalid_argument("scene: canvas < 32");
  if (cfg.max_objects < 1) throw std::invalid_argument("scene: max_objects < 1");
  std::mt19937_64 rng(seed);
  SceneRecord scene;
  scene.seed = seed;
  scene.canvas = cfg.canvas;

  std::uniform_int_distribution<int> n_dist(1, cfg.max_objects);
  std::uniform_int_distribution<int> cat_dist(0, category_count() - 1);
  std::uniform_int_distribution<int> size_dist(cfg.min_size, cfg.max_size);
  const int n = n_dist(rng);
  for (int i = 0; i < n; ++i) {
    const int cat = cat_dist(rng);
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const int w = size_dist(rng);
      const int h = size_dist(rng);
      std::uniform_int_distribution<int> x_dist(0, cfg.canvas - w);
      std::uniform_int_distribution<int> y_dist(0, cfg.canvas - h);
      BoxPix box;
      box.x1 = x_dist(rng);
      box.y1 = y_dist(rng);
      box.x2 = box.x1 + w;
      box.y2 = box.y1 + h;
      const BoxNorm nb = normalize(box, cfg.canvas, cfg.canvas);
      bool ok = true;
      for (const auto& other : scene.objects) {
        if (iou(nb, normalize(other.box, cfg.canvas, cfg.canvas)) >
            cfg.max_pair_iou) {
          ok = false;
          break;
        }
      }
      if (ok) {
        scene.objects.push_back({cat, box});
        placed = true;
      }
    }
    // Placement failure after bounded retries just yields fewer objects.
  }
  return scene;
}

Image render_scene(const SceneRecord& scene) {
  Image img(scene.canvas, scene.canvas, kBackground);
  for (const auto& obj : scene.objects) {
    const int shape = obj.category % static_cast<int>(kShapes.size());
    const Rgb c = color_rgb(obj.category / static_cast<int>(kShapes.size()));
    const int x1 = static_cast<int>(obj.box.x1), y1 = static_cast<int>(obj.box.y1);
    const int x2 = static_cast<int>(obj.box.x2), y2 = static_cast<int>(obj.box.y2);
    const double cx = (obj.box.x1 + obj.box.x2) / 2.0;
    const double cy = (obj.box.y1 + obj.box.y2) / 2.0;
    const double rx = obj.box.width() / 2.0, ry = obj.box.height() / 2.0;
    for (int y = y1; y < y2; ++y) {
      for (int x = x1; x < x2; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        bool inside = false;
        switch (shape) {
          case 0: {  // circle (ellipse inscribed in the box)
            const double dx = (px - cx) / rx, dy = (py - cy) / ry;
            inside = dx * dx + dy * dy <= 1.0;
            break;
          }
          case 1:  // square fills the box
            inside = true;
            break;
          case 2: {  // triangle: apex top-center, base at the bottom edge
            const double t = (py - obj.box.y1) / (obj.box.height());
            inside = std::abs(px - cx) <= t * rx;
            break;
          }
        }
        if (inside) {
          uint8_t* p = img.px(x, y);
          p[0] = c.r;
          p[1] = c.g;
          p[2] = c.b;
        }
      }
    }
  }
  return img;
}

std::vector<SceneObject> reading_order(const std::vector<SceneObject>& objs) {
  std::vector<SceneObject> out = objs;
  std::stable_sort(out.begin(), out.end(),
                   [](const SceneObject& a, const SceneObject& b) {
                     if (a.box.y1 != b.box.y1) return a.box.y1 < b.box.y1;
                     return a.box.x1 < b.box.x1;
                   });
  return out;
}

}  // namespace covlm
