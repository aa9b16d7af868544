#include <doctest.h>

#include "support.hpp"
#include "winseg/image.hpp"

using namespace winseg;

namespace {

Map2D<float> sample_plane() {
  Map2D<float> a(5, 6);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) a(r, c) = static_cast<float>(((r * 7 + c * 3) % 11) / 10.0 - 0.3 * ((r + c) % 2));
  return a;
}

}  // namespace

// Reference values: Pillow 12, mode "F", Image.BICUBIC.
TEST_CASE("bicubic upsampling matches Pillow") {
  const double expected[7][9] = {
      {-0.0210015, -0.0808681, 0.0242718, 0.5582525, 0.7000607, 0.5397744, 0.1383001, 0.0609937, 0.1077414},
      {0.2057589, 0.4345446, 0.5667539, 0.1760901, 0.3534453, 0.5888646, 0.3850890, 0.1494541, -0.0031419},
      {0.3595366, 0.6815298, 0.8382930, 0.2024302, 0.1386297, 0.3375877, 0.5247058, 0.3097582, 0.0639366},
      {0.3000000, 0.2647059, 0.3849537, 0.8914351, 0.3500000, -0.1914352, 0.3150463, 0.4352941, 0.4000000},
      {0.6360633, 0.3902418, 0.1752943, 0.3624123, 0.5613703, 0.4975698, -0.1382930, 0.0184702, 0.3404634},
      {0.7031419, 0.5505459, 0.3149110, 0.1111355, 0.3465547, 0.5239099, 0.1332461, 0.2654554, 0.4942411},
      {0.5922586, 0.6390063, 0.5616999, 0.1602256, -0.0000607, 0.1417476, 0.6757281, 0.7808681, 0.7210015}};
  const Map2D<float> out = resize_bicubic(sample_plane(), 7, 9);
  REQUIRE(out.rows() == 7);
  REQUIRE(out.cols() == 9);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 9; ++c) CHECK(std::abs(out(r, c) - expected[r][c]) < 1e-5);
}

TEST_CASE("bicubic downsampling matches Pillow") {
  const double expected[3][4] = {{0.2592681, 0.3797126, 0.4549535, 0.1219492},
                                 {0.4309430, 0.4792663, 0.2207336, 0.2690570},
                                 {0.5780508, 0.2450465, 0.3202874, 0.4407319}};
  const Map2D<double> out = resize_bicubic(Map2D<double>(sample_plane().cast<double>()), 3, 4);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) CHECK(std::abs(out(r, c) - expected[r][c]) < 1e-5);
}

TEST_CASE("bicubic resize keeps constants and identity sizes") {
  const Map2D<float> c = Map2D<float>::Constant(13, 17, 0.7f);
  CHECK((resize_bicubic(c, 40, 21) - 0.7f).abs().maxCoeff() < 1e-6);
  CHECK((resize_bicubic(c, 5, 6) - 0.7f).abs().maxCoeff() < 1e-6);
  const Map2D<float> s = sample_plane();
  CHECK((resize_bicubic(s, 5, 6) - s).abs().maxCoeff() < 1e-6);
  const ImageTensor img = ImageTensor::constant(30, 20, -1.5f);
  const ImageTensor r = resize_bicubic(img, 12, 8);
  CHECK(r.height() == 12);
  CHECK(r.width() == 8);
  CHECK((r.planes[2] + 1.5f).abs().maxCoeff() < 1e-6);
}

TEST_CASE("crop") {
  std::mt19937_64 rng(61);
  const ImageTensor img = winseg::testing::random_image(rng, 10, 12);
  const ImageTensor c = crop(img, 2, 3, 4, 5);
  CHECK(c.height() == 4);
  CHECK(c.width() == 5);
  CHECK(c.planes[1](0, 0) == img.planes[1](2, 3));
  CHECK(c.planes[2](3, 4) == img.planes[2](5, 7));
  CHECK_THROWS_AS(crop(img, 8, 0, 4, 4), ContractError);
}

TEST_CASE("bilinear map resize") {
  ScoreMap m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  const ScoreMap up = resize_bilinear(m, 4, 4);
  // Half-pixel centers: outer pixels clamp to the source corners.
  CHECK(up(0, 0) == doctest::Approx(0.0));
  CHECK(up(0, 3) == doctest::Approx(1.0));
  CHECK(up(1, 1) == doctest::Approx(0.375));
  CHECK(up(0, 1) == doctest::Approx(0.25));
  CHECK((resize_bilinear(m, 2, 2) - m).abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(resize_bilinear(m, 0, 3), ContractError);
}

TEST_CASE("nearest mask resize") {
  BinaryMask m(2, 2);
  m << 1, 0, 0, 1;
  const BinaryMask up = resize_nearest(m, 4, 4);
  CHECK(up(0, 0) == 1);
  CHECK(up(1, 1) == 1);
  CHECK(up(0, 2) == 0);
  CHECK(up(3, 3) == 1);
  CHECK(up.cast<int>().sum() == 8);
}
