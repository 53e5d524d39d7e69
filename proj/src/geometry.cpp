#include "covlm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <stdexcept>

namespace covlm {

bool BoxPix::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x1 < x2 && y1 < y2;
}

bool BoxNorm::valid() const {
  return x1 >= 0 && y1 >= 0 && x2 <= 1 && y2 <= 1 && x1 < x2 && y1 < y2;
}

bool BoxNorm::contains(const BoxNorm& inner) const {
  return x1 <= inner.x1 && y1 <= inner.y1 && x2 >= inner.x2 && y2 >= inner.y2;
}

double iou(const BoxNorm& a, const BoxNorm& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

BoxNorm normalize(const BoxPix& b, double width, double height) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("normalize: non-positive image dimensions");
  if (!b.valid() || b.x1 < 0 || b.y1 < 0 || b.x2 > width || b.y2 > height)
    throw std::invalid_argument("normalize: box out of image frame");
  return {b.x1 / width, b.y1 / height, b.x2 / width, b.y2 / height};
}

BoxPix denormalize(const BoxNorm& b, double width, double height) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("denormalize: non-positive image dimensions");
  return {b.x1 * width, b.y1 * height, b.x2 * width, b.y2 * height};
}

namespace {

// Half-up fixed-point rounding, e.g. 0.9996 -> "1.000" at precision 3.
std::string format_coord(double v, int precision) {
  const double scale = std::pow(10.0, precision);
  const long long units = static_cast<long long>(std::floor(v * scale + 0.5));
  const long long whole = units / static_cast<long long>(scale);
  const long long frac = units % static_cast<long long>(scale);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld.%0*lld", whole, precision, frac);
  return buf;
}

}  // namespace

std::string encode_box(const BoxNorm& b, int precision) {
  return "[" + format_coord(b.x1, precision) + "," +
         format_coord(b.y1, precision) + "," + format_coord(b.x2, precision) +
         "," + format_coord(b.y2, precision) + "]";
}

DecodeResult decode_boxes(const std::string& text) {
  static const std::regex box_re(
      R"(\[\s*([0-9]*\.?[0-9]+)\s*,\s*([0-9]*\.?[0-9]+)\s*,\s*([0-9]*\.?[0-9]+)\s*,\s*([0-9]*\.?[0-9]+)\s*\])");
  DecodeResult out;
  auto begin = std::sregex_iterator(text.begin(), text.end(), box_re);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const std::smatch& m = *it;
    BoxNorm b{std::stod(m[1]), std::stod(m[2]), std::stod(m[3]),
              std::stod(m[4])};
    b.x1 = std::clamp(b.x1, 0.0, 1.0);
    b.y1 = std::clamp(b.y1, 0.0, 1.0);
    b.x2 = std::clamp(b.x2, 0.0, 1.0);
    b.y2 = std::clamp(b.y2, 0.0, 1.0);
    if (b.x1 < b.x2 && b.y1 < b.y2) {
      out.boxes.push_back(b);
    } else {
      out.warnings.push_back("dropped degenerate box candidate: " + m.str());
    }
  }
  return out;
}

BoxNorm merge_boxes(const std::vector<BoxNorm>& bs) {
  if (bs.empty()) throw std::invalid_argument("merge_boxes: empty input");
  BoxNorm m = bs.front();
  for (const auto& b : bs) {
    m.x1 = std::min(m.x1, b.x1);
    m.y1 = std::min(m.y1, b.y1);
    m.x2 = std::max(m.x2, b.x2);
    m.y2 = std::max(m.y2, b.y2);
  }
  return m;
}

}  // namespace covlm
