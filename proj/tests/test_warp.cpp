#include <doctest.h>

#include <cmath>

#include "osseg/filters.hpp"
#include "osseg/warp.hpp"
#include "support/oracles.hpp"

using namespace osseg;

TEST_CASE("identity_grid enumerates voxel coordinates") {
  Tensor g = identity_grid({2, 2});
  // component 0 (rows), then component 1 (cols), row-major
  CHECK(g.values() == std::vector<float>{0, 0, 1, 1, 0, 1, 0, 1});

  Tensor g1 = identity_grid({1});
  CHECK(g1.shape() == Shape{1, 1});
  CHECK(g1[0] == 0.0f);

  Tensor g3 = identity_grid({3, 4, 5});
  const std::int64_t vox = 3 * 4 * 5;
  float max_c[3] = {0, 0, 0}, min_c[3] = {99, 99, 99};
  for (int d = 0; d < 3; ++d)
    for (std::int64_t v = 0; v < vox; ++v) {
      max_c[d] = std::max(max_c[d], g3[d * vox + v]);
      min_c[d] = std::min(min_c[d], g3[d * vox + v]);
    }
  CHECK(min_c[0] == 0);
  CHECK(max_c[0] == 2);
  CHECK(max_c[1] == 3);
  CHECK(max_c[2] == 4);

  CHECK_THROWS_AS(identity_grid({0, 2}), std::invalid_argument);
}

TEST_CASE("warp_volume with zero field is bit-exact identity") {
  Rng rng(11);
  Volume v = oracle::random_volume({4, 5, 3}, rng);
  DisplacementField zero(v.shape());
  Volume out = warp_volume(v, zero);
  CHECK(out == v);

  Volume out_n = warp_volume(v, zero, Interpolation::Nearest);
  CHECK(out_n == v);
}

TEST_CASE("warp_volume preserves constants under any field") {
  Rng rng(12);
  Volume v({4, 4, 4}, 5.0f);
  DisplacementField f = oracle::random_field(v.shape(), 3.0, rng);
  Volume out = warp_volume(v, f);
  for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(5.0f).epsilon(1e-7));
}

TEST_CASE("warp_volume matches the brute-force trilinear oracle") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Volume v = oracle::random_volume({5, 5, 5}, rng);
    DisplacementField f = oracle::random_field(v.shape(), 1.5, rng);
    Volume fast = warp_volume(v, f);

    const std::int64_t vox = v.size();
    std::vector<double> dz(f.component(0), f.component(0) + vox);
    std::vector<double> dy(f.component(1), f.component(1) + vox);
    std::vector<double> dx(f.component(2), f.component(2) + vox);
    auto ref = oracle::warp3d(oracle::to_doubles(v), 5, 5, 5, dz, dy, dx);

    for (std::int64_t i = 0; i < vox; ++i) {
      const double denom = std::max(1e-12, std::abs(ref[i]));
      CHECK(std::abs(fast[i] - ref[i]) / denom <= 1e-6);
    }
  }
}

TEST_CASE("warp_volume rejects mismatched shapes") {
  Volume v({4, 4, 4});
  DisplacementField f(Shape{4, 4, 8});
  CHECK_THROWS_AS(warp_volume(v, f), std::invalid_argument);
}

TEST_CASE("grid types reject non-finite values and bad shapes") {
  CHECK_THROWS_AS(Volume({2, 2}, {1.0f, 2.0f, std::nanf(""), 0.0f}), NumericError);
  CHECK_THROWS_AS(Volume(Shape{0, 4}), std::invalid_argument);
  CHECK_THROWS_AS(LabelMap({2, 2}, 2, {0, 1, 2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(DisplacementField(Tensor(Shape{3, 4, 4})), std::invalid_argument);
  CHECK_THROWS_AS(Atlas(Volume({4, 4}), LabelMap({4, 8}, 2)), std::invalid_argument);
}

TEST_CASE("warp_labels identity and single-class cases") {
  Rng rng(14);
  std::vector<std::int32_t> lab(4 * 4 * 4);
  for (auto& l : lab) l = rng.uniform_int(3);
  LabelMap y({4, 4, 4}, 3, lab);
  DisplacementField zero(y.shape());
  CHECK(warp_labels(y, zero) == y);

  LabelMap ones({4, 4, 4}, 1);
  DisplacementField f = oracle::random_field(y.shape(), 2.0, rng);
  LabelMap warped = warp_labels(ones, f);
  for (std::int64_t i = 0; i < warped.size(); ++i) CHECK(warped[i] == 0);
}

TEST_CASE("warp_labels matches brute-force shift on interior voxels") {
  // 2-class 4^3 map, integer +1 shift along z (pull-back: out(z) = y(z + 1))
  std::vector<std::int32_t> lab(4 * 4 * 4, 0);
  auto idx = [](int z, int y, int x) { return (z * 4 + y) * 4 + x; };
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        if (z >= 2 && y >= 1 && y <= 2) lab[idx(z, y, x)] = 1;
  LabelMap y({4, 4, 4}, 2, lab);

  DisplacementField f(y.shape());
  const std::int64_t vox = y.size();
  for (std::int64_t i = 0; i < vox; ++i) f.component(0)[i] = 1.0f;

  LabelMap warped = warp_labels(y, f);
  for (int z = 0; z < 3; ++z)  // interior: z + 1 stays in range
    for (int yy = 0; yy < 4; ++yy)
      for (int x = 0; x < 4; ++x)
        CHECK(warped[idx(z, yy, x)] == lab[idx(z + 1, yy, x)]);
}

TEST_CASE("compose_fields zero identities are exact") {
  Rng rng(15);
  DisplacementField f = oracle::random_field({4, 5, 6}, 2.0, rng);
  DisplacementField zero(f.spatial_shape());
  CHECK(compose_fields(zero, f) == f);
  CHECK(compose_fields(f, zero) == f);
}

TEST_CASE("compose_fields adds constant translations") {
  Shape sp{6, 6, 6};
  DisplacementField a(sp), b(sp);
  const std::int64_t vox = numel(sp);
  for (std::int64_t i = 0; i < vox; ++i) {
    a.component(0)[i] = 0.5f;
    a.component(1)[i] = -0.25f;
    b.component(0)[i] = 0.25f;
    b.component(2)[i] = 1.0f;
  }
  DisplacementField c = compose_fields(a, b);
  // composition of translations is their sum wherever sampling stays interior
  auto at = [&](int comp, int z, int y, int x) {
    return c.component(comp)[(z * 6 + y) * 6 + x];
  };
  for (int z = 1; z < 4; ++z)
    for (int y = 1; y < 5; ++y)
      for (int x = 1; x < 4; ++x) {
        CHECK(at(0, z, y, x) == doctest::Approx(0.75).epsilon(1e-6));
        CHECK(at(1, z, y, x) == doctest::Approx(-0.25).epsilon(1e-6));
        CHECK(at(2, z, y, x) == doctest::Approx(1.0).epsilon(1e-6));
      }
}

TEST_CASE("warp composition coherence on smooth fields") {
  Rng rng(16);
  Shape sp{16, 16, 16};
  Volume v = gaussian_blur(oracle::random_volume(sp, rng), 2.0);
  DisplacementField f1 = smooth_random_field(sp, 2.0, 3.0, rng);
  DisplacementField f2 = smooth_random_field(sp, 2.0, 3.0, rng);

  Volume two_step = warp_volume(warp_volume(v, f1), f2);
  Volume one_step = warp_volume(v, compose_fields(f1, f2));
  // compared on the core where chained samples (reach <= 2 + 2 voxels) never
  // clamp; at the border ring the two routes clamp against different images
  float max_err = 0.0f;
  for (int z = 4; z < 12; ++z)
    for (int y = 4; y < 12; ++y)
      for (int x = 4; x < 12; ++x) {
        const std::int64_t i = (z * 16 + y) * 16 + x;
        max_err = std::max(max_err, std::abs(two_step[i] - one_step[i]));
      }
  CHECK(max_err <= 1e-2f);
}

TEST_CASE("invert_field on zero and constant-shift fields") {
  DisplacementField zero(Shape{5, 5, 5});
  DisplacementField inv = invert_field(zero, 5);
  CHECK(inv == zero);

  DisplacementField shift(Shape{8, 8, 8});
  const std::int64_t vox = shift.voxels();
  for (std::int64_t i = 0; i < vox; ++i) {
    shift.component(0)[i] = 1.25f;
    shift.component(1)[i] = -0.5f;
  }
  DisplacementField s_inv = invert_field(shift, 10);
  // away from the borders the inverse of a translation is its negation
  auto at = [&](int comp, int z, int y, int x) {
    return s_inv.component(comp)[(z * 8 + y) * 8 + x];
  };
  for (int z = 2; z < 6; ++z)
    for (int y = 2; y < 6; ++y)
      for (int x = 2; x < 6; ++x) {
        CHECK(at(0, z, y, x) == doctest::Approx(-1.25).epsilon(1e-5));
        CHECK(at(1, z, y, x) == doctest::Approx(0.5).epsilon(1e-5));
        CHECK(at(2, z, y, x) == doctest::Approx(0.0).epsilon(1e-5));
      }

  CHECK_THROWS_AS(invert_field(zero, 0), std::invalid_argument);
}

TEST_CASE("invert_field residual shrinks below 0.1 voxel on smooth fields") {
  Rng rng(17);
  Shape sp{16, 16, 16};
  for (int trial = 0; trial < 3; ++trial) {
    DisplacementField f = smooth_random_field(sp, 2.0, 3.0, rng);
    DisplacementField f_inv = invert_field(f, 20);
    DisplacementField resid = compose_fields(f, f_inv);

    const std::int64_t vox = resid.voxels();
    float max_interior = 0.0f;
    for (int z = 3; z < 13; ++z)
      for (int y = 3; y < 13; ++y)
        for (int x = 3; x < 13; ++x) {
          const std::int64_t i = (z * 16 + y) * 16 + x;
          for (int d = 0; d < 3; ++d)
            max_interior = std::max(max_interior, std::abs(resid.tensor()[d * vox + i]));
        }
    CHECK(max_interior <= 0.1f);

    // more iterations do not make the residual worse
    DisplacementField f_inv5 = invert_field(f, 5);
    DisplacementField resid5 = compose_fields(f, f_inv5);
    float max5 = 0.0f, max20 = 0.0f;
    for (int z = 3; z < 13; ++z)
      for (int y = 3; y < 13; ++y)
        for (int x = 3; x < 13; ++x) {
          const std::int64_t i = (z * 16 + y) * 16 + x;
          for (int d = 0; d < 3; ++d) {
            max5 = std::max(max5, std::abs(resid5.tensor()[d * vox + i]));
            max20 = std::max(max20, std::abs(resid.tensor()[d * vox + i]));
          }
        }
    CHECK(max20 <= max5 + 1e-6f);
  }
}

TEST_CASE("warp ops work in 2D as well") {
  Rng rng(18);
  Volume v = oracle::random_volume({6, 7}, rng);
  DisplacementField f = oracle::random_field(v.shape(), 1.0, rng);
  Volume out = warp_volume(v, f);

  const std::int64_t vox = v.size();
  std::vector<double> dy(f.component(0), f.component(0) + vox);
  std::vector<double> dx(f.component(1), f.component(1) + vox);
  auto src = oracle::to_doubles(v);
  std::size_t i = 0;
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x, ++i) {
      const double ref = oracle::bilinear_at(src, 6, 7, y + dy[i], x + dx[i]);
      CHECK(std::abs(out[i] - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
    }
}
