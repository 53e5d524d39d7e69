#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <random>

#include "covlm/image.hpp"

using namespace covlm;

namespace {

Image random_image(int w, int h, std::mt19937_64& rng) {
  Image img(w, h);
  std::uniform_int_distribution<int> u(0, 255);
  for (auto& b : img.rgb) b = (uint8_t)u(rng);
  return img;
}

}  // namespace

TEST_CASE("png round trip on random images") {
  std::mt19937_64 rng(1);
  for (auto [w, h] : {std::pair{1, 1}, {7, 3}, {64, 64}, {33, 57}}) {
    Image img = random_image(w, h, rng);
    Image back = decode_png(encode_png(img));
    CHECK(back.width == w);
    CHECK(back.height == h);
    CHECK(back.rgb == img.rgb);
  }
}

TEST_CASE("png file round trip") {
  std::mt19937_64 rng(2);
  Image img = random_image(24, 16, rng);
  const std::string path = "test_image_tmp.png";
  write_png(path, img);
  Image back = read_png(path);
  CHECK(back.rgb == img.rgb);
  std::remove(path.c_str());
}

TEST_CASE("png decode rejects garbage") {
  CHECK_THROWS(decode_png({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
  CHECK_THROWS(decode_png({}));
}

TEST_CASE("base64 round trip and fixed vector") {
  // RFC 4648 test vector
  std::vector<uint8_t> foobar = {'f', 'o', 'o', 'b', 'a', 'r'};
  CHECK(base64_encode(foobar) == "Zm9vYmFy");
  CHECK(base64_encode({'f'}) == "Zg==");
  CHECK(base64_encode({'f', 'o'}) == "Zm8=");
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, 255);
  for (int len : {0, 1, 2, 3, 100, 257}) {
    std::vector<uint8_t> data(len);
    for (auto& b : data) b = (uint8_t)u(rng);
    CHECK(base64_decode(base64_encode(data)) == data);
  }
}

TEST_CASE("to_float_tensor maps to [-1,1]") {
  Image img(2, 1);
  img.rgb = {0, 127, 255, 128, 64, 191};
  Tensor<float> t = to_float_tensor<float>(img);
  REQUIRE(t.shape == std::vector<int>{1, 2, 3});
  CHECK(t[0] == doctest::Approx(-1.0f));
  CHECK(t[2] == doctest::Approx(1.0f));
  for (float v : t.data) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("crop_region identity when box covers the full image") {
  std::mt19937_64 rng(4);
  Image img = random_image(12, 12, rng);
  Tensor<double> t = to_float_tensor<double>(img);
  Tensor<double> crop = crop_region<double>(t, BoxPix{0, 0, 12, 12}, 12);
  REQUIRE(crop.shape == t.shape);
  for (size_t i = 0; i < t.size(); ++i)
    CHECK(crop[i] == doctest::Approx(t[i]).epsilon(1e-9));
}

TEST_CASE("crop_region of a constant patch is constant") {
  Image img(16, 16, 200);
  // paint a uniform block and crop strictly inside it
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) {
      auto* p = img.px(x, y);
      p[0] = 10;
      p[1] = 20;
      p[2] = 30;
    }
  Tensor<float> t = to_float_tensor<float>(img);
  Tensor<float> crop = crop_region<float>(t, BoxPix{5, 5, 11, 11}, 8);
  const float r = 10 / 127.5f - 1, g = 20 / 127.5f - 1, b = 30 / 127.5f - 1;
  for (int i = 0; i < 8 * 8; ++i) {
    CHECK(crop[i * 3 + 0] == doctest::Approx(r));
    CHECK(crop[i * 3 + 1] == doctest::Approx(g));
    CHECK(crop[i * 3 + 2] == doctest::Approx(b));
  }
}

TEST_CASE("crop_region rejects bad boxes") {
  Image img(8, 8);
  Tensor<float> t = to_float_tensor<float>(img);
  CHECK_THROWS_AS(crop_region<float>(t, BoxPix{5, 5, 5, 7}, 4),
                  std::invalid_argument);  // zero width
  CHECK_THROWS_AS(crop_region<float>(t, BoxPix{-1, 0, 4, 4}, 4),
                  std::invalid_argument);  // out of bounds
  CHECK_THROWS_AS(crop_region<float>(t, BoxPix{0, 0, 9, 4}, 4),
                  std::invalid_argument);
}

TEST_CASE("crop_region_image matches tensor crop") {
  std::mt19937_64 rng(5);
  Image img = random_image(20, 20, rng);
  BoxPix b{3, 5, 15, 17};
  Image ci = crop_region_image(img, b, 8);
  CHECK(ci.width == 8);
  CHECK(ci.height == 8);
}
