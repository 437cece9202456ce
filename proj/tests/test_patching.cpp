#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "support/oracles.hpp"
#include "tsad/patching.hpp"

using namespace tsad;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("patch views rearrange a single variable as documented", "[patching]") {
  Matrix<double> comp(4, 1, {10.0, 11.0, 12.0, 13.0});  // [a,b,c,d]
  PatchTokens pt = make_patches(comp, 2);
  REQUIRE(pt.patch == 2);
  REQUIRE(pt.count == 2);
  REQUIRE(pt.intra.size() == 1);

  // intra: position-major, columns index patches -> [[a,c],[b,d]]
  REQUIRE(pt.intra[0](0, 0) == 10.0);
  REQUIRE(pt.intra[0](0, 1) == 12.0);
  REQUIRE(pt.intra[0](1, 0) == 11.0);
  REQUIRE(pt.intra[0](1, 1) == 13.0);

  // inter: patch-major, columns index positions -> [[a,b],[c,d]]
  REQUIRE(pt.inter[0](0, 0) == 10.0);
  REQUIRE(pt.inter[0](0, 1) == 11.0);
  REQUIRE(pt.inter[0](1, 0) == 12.0);
  REQUIRE(pt.inter[0](1, 1) == 13.0);
}

TEST_CASE("intra and inter views are transposes of each other", "[patching]") {
  std::mt19937 gen(3);
  Matrix<double> comp = oracle::random_matrix<double>(gen, 12, 2);
  PatchTokens pt = make_patches(comp, 3);
  REQUIRE(pt.count == 4);
  for (std::size_t v = 0; v < 2; ++v) {
    REQUIRE(pt.intra[v].rows == 3);
    REQUIRE(pt.intra[v].cols == 4);
    REQUIRE(pt.inter[v].rows == 4);
    REQUIRE(pt.inter[v].cols == 3);
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t n = 0; n < 4; ++n) {
        REQUIRE(pt.intra[v](p, n) == comp(n * 3 + p, v));
        REQUIRE(pt.inter[v](n, p) == pt.intra[v](p, n));
      }
  }
}

TEST_CASE("whole-window and unit patches are both legal", "[patching]") {
  std::mt19937 gen(4);
  Matrix<double> comp = oracle::random_matrix<double>(gen, 6, 1);
  PatchTokens whole = make_patches(comp, 6);
  REQUIRE(whole.count == 1);
  REQUIRE(whole.intra[0].rows == 6);
  REQUIRE(whole.intra[0].cols == 1);

  PatchTokens unit = make_patches(comp, 1);
  REQUIRE(unit.count == 6);
  REQUIRE(unit.intra[0].rows == 1);
  REQUIRE(unit.inter[0].rows == 6);
}

TEST_CASE("patch config validation enforces divisibility", "[patching]") {
  PatchConfig bad{100, {3}};
  CHECK_THROWS_MATCHES(validate_patch_config(bad), ConfigError,
                       Catch::Matchers::MessageMatches(
                           ContainsSubstring("patch size must divide window")));
  CHECK_THROWS_AS(validate_patch_config(PatchConfig{0, {2}}), ConfigError);
  CHECK_THROWS_AS(validate_patch_config(PatchConfig{8, {}}), ConfigError);
  CHECK_THROWS_AS(validate_patch_config(PatchConfig{8, {0}}), ConfigError);

  // benchmark-style configurations all pass
  CHECK_NOTHROW(validate_patch_config(PatchConfig{90, {3, 5}}));
  CHECK_NOTHROW(validate_patch_config(PatchConfig{105, {3, 5, 7}}));
  CHECK_NOTHROW(validate_patch_config(PatchConfig{60, {1, 3, 5}}));
  CHECK_NOTHROW(validate_patch_config(PatchConfig{105, {5, 7}}));
}

TEST_CASE("every window position lands in exactly one patch cell", "[patching]") {
  std::mt19937 gen(5);
  for (std::size_t patch : {1ul, 3ul, 5ul}) {
    Matrix<double> comp = oracle::random_matrix<double>(gen, 15, 3);
    PatchTokens pt = make_patches(comp, patch);
    for (std::size_t v = 0; v < 3; ++v) {
      double total = 0.0, expect = 0.0;
      for (std::size_t t = 0; t < 15; ++t) expect += comp(t, v);
      for (std::size_t p = 0; p < pt.patch; ++p)
        for (std::size_t n = 0; n < pt.count; ++n) total += pt.intra[v](p, n);
      REQUIRE(total == Catch::Approx(expect).epsilon(1e-12));
    }
  }
}
