#include "covlm/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace covlm {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back((v >> 24) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back(v & 0xff);
}

uint32_t get_u32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
         (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& payload) {
  put_u32(out, static_cast<uint32_t>(payload.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, crc);
}

}  // namespace

std::vector<uint8_t> encode_png(const Image& img) {
  if (img.width <= 0 || img.height <= 0)
    throw std::invalid_argument("encode_png: empty image");
  // Raw scanlines, filter type 0 per row.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.height) * (1 + 3 * img.width));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), img.px(0, y), img.px(0, y) + 3 * img.width);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("encode_png: zlib compression failed");
  compressed.resize(bound);

  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(img.width));
  put_u32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter method
  ihdr.push_back(0);   // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", compressed);
  put_chunk(out, "IEND", {});
  return out;
}

Image decode_png(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) != 0)
    throw std::runtime_error("decode_png: not a PNG");
  size_t pos = 8;
  int width = 0, height = 0;
  std::vector<uint8_t> idat;
  while (pos + 8 <= bytes.size()) {
    const uint32_t len = get_u32(bytes.data() + pos);
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const uint8_t* payload = bytes.data() + pos + 8;
    if (pos + 12 + len > bytes.size())
      throw std::runtime_error("decode_png: truncated chunk");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      width = static_cast<int>(get_u32(payload));
      height = static_cast<int>(get_u32(payload + 4));
      if (payload[8] != 8 || payload[9] != 2 || payload[12] != 0)
        throw std::runtime_error("decode_png: only 8-bit RGB non-interlaced supported");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0 || idat.empty())
    throw std::runtime_error("decode_png: missing IHDR/IDAT");

  const size_t stride = static_cast<size_t>(3) * width;
  std::vector<uint8_t> raw(static_cast<size_t>(height) * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw std::runtime_error("decode_png: zlib inflate failed");

  Image img(width, height);
  std::vector<uint8_t> prev(stride, 0);
  for (int y = 0; y < height; ++y) {
    const uint8_t filter = raw[static_cast<size_t>(y) * (stride + 1)];
    const uint8_t* src = raw.data() + static_cast<size_t>(y) * (stride + 1) + 1;
    uint8_t* dst = img.rgb.data() + static_cast<size_t>(y) * stride;
    for (size_t i = 0; i < stride; ++i) {
      const int a = i >= 3 ? dst[i - 3] : 0;  // left
      const int b = prev[i];                  // up
      const int c = i >= 3 ? prev[i - 3] : 0; // up-left
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: {
          const int p = a + b - c;
          const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          break;
        }
        default:
          throw std::runtime_error("decode_png: bad filter type");
      }
      dst[i] = static_cast<uint8_t>(v & 0xff);
    }
    std::memcpy(prev.data(), dst, stride);
  }
  return img;
}

void write_png(const std::string& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

Image read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_png: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

static const char* kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (size_t i = 0; i < bytes.size(); i += 3) {
    uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    if (i + 2 < bytes.size()) v |= bytes[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kB64[v & 63] : '=');
  }
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<uint8_t> out;
  int acc = 0, bits = 0;
  for (char c : text) {
    const int v = val(c);
    if (v < 0) continue;  // skip '=' and whitespace
    acc = (acc << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

template <class T>
Tensor<T> crop_region(const Tensor<T>& image_hw3, const BoxPix& b, int r) {
  const int H = image_hw3.shape[0], W = image_hw3.shape[1];
  if (!b.valid() || b.x1 < 0 || b.y1 < 0 || b.x2 > W || b.y2 > H)
    throw std::invalid_argument("crop_region: box out of bounds or degenerate");
  if (r < 1) throw std::invalid_argument("crop_region: target size < 1");
  Tensor<T> out({r, r, 3});
  // Align-corners sampling over the box's pixel index range.
  for (int oy = 0; oy < r; ++oy) {
    for (int ox = 0; ox < r; ++ox) {
      const double sy =
          r > 1 ? b.y1 + (b.y2 - 1 - b.y1) * oy / (r - 1) : (b.y1 + b.y2 - 1) / 2;
      const double sx =
          r > 1 ? b.x1 + (b.x2 - 1 - b.x1) * ox / (r - 1) : (b.x1 + b.x2 - 1) / 2;
      const int y0 = std::max(0, std::min(H - 1, static_cast<int>(std::floor(sy))));
      const int x0 = std::max(0, std::min(W - 1, static_cast<int>(std::floor(sx))));
      const int y1 = std::min(H - 1, y0 + 1);
      const int x1 = std::min(W - 1, x0 + 1);
      const T fy = static_cast<T>(sy - y0);
      const T fx = static_cast<T>(sx - x0);
      for (int c = 0; c < 3; ++c) {
        const T v00 = image_hw3.at3(y0, x0, c);
        const T v01 = image_hw3.at3(y0, x1, c);
        const T v10 = image_hw3.at3(y1, x0, c);
        const T v11 = image_hw3.at3(y1, x1, c);
        const T top = v00 + (v01 - v00) * fx;
        const T bot = v10 + (v11 - v10) * fx;
        out.at3(oy, ox, c) = top + (bot - top) * fy;
      }
    }
  }
  return out;
}

template Tensor<float> crop_region<float>(const Tensor<float>&, const BoxPix&, int);
template Tensor<double> crop_region<double>(const Tensor<double>&, const BoxPix&, int);

Image crop_region_image(const Image& img, const BoxPix& b, int r) {
  auto t = crop_region(to_float_tensor<float>(img), b, r);
  Image out(r, r);
  for (size_t i = 0; i < out.rgb.size(); ++i) {
    const float v = (t[i] + 1.0f) * 127.5f;
    out.rgb[i] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 255.0f)));
  }
  return out;
}

}  // namespace covlm
