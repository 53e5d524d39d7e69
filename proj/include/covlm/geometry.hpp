#pragma once

#include <optional>
#include <string>
#include <vector>

namespace covlm {

/// Axis-aligned box in pixel coordinates, origin top-left, x1<x2, y1<y2.
struct BoxPix {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const;
};

/// Axis-aligned box as fractions of image width/height, in [0,1].
struct BoxNorm {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double area() const { return (x2 - x1) * (y2 - y1); }
  bool valid() const;
  bool contains(const BoxNorm& inner) const;
};

/// Intersection over union of two valid normalized boxes.
double iou(const BoxNorm& a, const BoxNorm& b);

/// Divide pixel coordinates by image dimensions. Throws std::invalid_argument
/// if the box lies outside [0,width]x[0,height] or dimensions are not positive.
BoxNorm normalize(const BoxPix& b, double width, double height);
BoxPix denormalize(const BoxNorm& b, double width, double height);

/// Fixed-point serialization "[x1,y1,x2,y2]" with half-up rounding and
/// exactly `precision` fractional digits per coordinate.
std::string encode_box(const BoxNorm& b, int precision = 3);

struct DecodeResult {
  std::vector<BoxNorm> boxes;
  std::vector<std::string> warnings;  // dropped malformed candidates
};

/// Extracts every bracketed 4-number group from free-form text, in order of
/// appearance. Coordinates are clamped to [0,1]; candidates with x1>=x2 or
/// y1>=y2 are dropped and reported as warnings. Never fails.
DecodeResult decode_boxes(const std::string& text);

/// Smallest box enclosing all inputs. Throws std::invalid_argument on empty input.
BoxNorm merge_boxes(const std::vector<BoxNorm>& bs);

/// Textual-coordinate referring fragment for instruction templates.
inline std::string refer_by_coords(const BoxNorm& b, int precision = 3) {
  return encode_box(b, precision);
}

}  // namespace covlm
