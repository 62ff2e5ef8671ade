#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "test_util.hpp"
#include "xquant/errors.hpp"
#include "xquant/quant_core.hpp"

using namespace xquant;

namespace {

std::vector<float> random_group(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<float> center(-10.0f, 10.0f);
  std::uniform_real_distribution<float> spread(0.01f, 5.0f);
  const float c = center(rng);
  const float w = spread(rng);
  std::uniform_real_distribution<float> dist(c - w, c + w);
  std::vector<float> g(n);
  for (auto& v : g) v = dist(rng);
  return g;
}

// Distance to the closest of the 2^B levels z + k s, by exhaustive search.
double nearest_level_distance(double x, double z, double s, int bits) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= max_code(bits); ++k) {
    best = std::min(best, std::abs(x - (z + k * s)));
  }
  return best;
}

float ulps(float x, int n) {
  float v = x;
  for (int i = 0; i < n; ++i) v = std::nextafter(v, std::numeric_limits<float>::infinity());
  return v - x;
}

}  // namespace

TEST(ComputeParams, Examples) {
  const std::vector<float> grid{0, 1, 2, 3};
  EXPECT_EQ(compute_params(grid, 2), (QuantParams{0.0f, 1.0f, 2}));
  const std::vector<float> flat{5, 5, 5};
  EXPECT_EQ(compute_params(flat, 1), (QuantParams{5.0f, 0.0f, 1}));
  const std::vector<float> pair{-1, 3};
  EXPECT_EQ(compute_params(pair, 1), (QuantParams{-1.0f, 4.0f, 1}));
}

TEST(ComputeParams, Errors) {
  EXPECT_THROW(compute_params(std::vector<float>{}, 2), ArgumentError);
  EXPECT_THROW(compute_params(std::vector<float>{1.0f}, 3), ArgumentError);
  EXPECT_THROW(compute_params(std::vector<float>{1.0f, std::nanf("")}, 2), ArgumentError);
}

TEST(QuantizeGroup, ExactGrid) {
  const std::vector<float> grid{0, 1, 2, 3};
  EXPECT_EQ(quantize_group(grid, {0.0f, 1.0f, 2}), (std::vector<Code>{0, 1, 2, 3}));
}

TEST(QuantizeGroup, TiesRoundDown) {
  EXPECT_EQ(quantize_group(std::vector<float>{0.5f}, {0.0f, 1.0f, 1}), (std::vector<Code>{0}));
  const std::vector<float> halves{0.5f, 1.5f, 2.5f, 0.51f};
  EXPECT_EQ(quantize_group(halves, {0.0f, 1.0f, 2}), (std::vector<Code>{0, 1, 2, 1}));
}

TEST(QuantizeGroup, ZeroScaleGivesZeroCodes) {
  const std::vector<float> flat{5, 5, 5};
  EXPECT_EQ(quantize_group(flat, {5.0f, 0.0f, 2}), (std::vector<Code>{0, 0, 0}));
}

TEST(QuantizeGroup, ClampsOutOfRangeValues) {
  const std::vector<float> values{-3.0f, 10.0f};
  EXPECT_EQ(quantize_group(values, {0.0f, 1.0f, 2}), (std::vector<Code>{0, 3}));
}

TEST(QuantizeGroup, CodesAreNearestLevelsOnSampledGroups) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const int bits = 1 + trial % 2;
    const auto group = random_group(rng, 1 + trial % 64);
    const auto params = compute_params(group, bits);
    const auto codes = quantize_group(group, params);
    for (std::size_t i = 0; i < group.size(); ++i) {
      ASSERT_LE(codes[i], max_code(bits));
      const double x = group[i];
      const double rebuilt = params.zero_point + codes[i] * static_cast<double>(params.scale);
      const double err = std::abs(x - rebuilt);
      ASSERT_LE(err, params.scale / 2.0 + 2 * ulps(std::abs(group[i]) + params.scale, 1));
      ASSERT_LE(err, nearest_level_distance(x, params.zero_point, params.scale, bits) + 1e-5);
    }
  }
}

TEST(Calibrate, Examples) {
  const auto one_bit = calibrate({0.0f, 1.0f, 1}, 0.2f);
  EXPECT_FLOAT_EQ(one_bit.zero_point, 0.2f);
  EXPECT_FLOAT_EQ(one_bit.scale, 0.6f);
  const auto two_bit = calibrate({0.0f, 1.0f, 2}, 0.05f);
  EXPECT_FLOAT_EQ(two_bit.zero_point, 0.15f);
  EXPECT_FLOAT_EQ(two_bit.scale, 0.9f);
}

TEST(Calibrate, ZeroEtaIsIdentity) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto params = compute_params(random_group(rng, 32), 1 + trial % 2);
    const auto cal = calibrate(params, 0.0f);
    EXPECT_EQ(cal.zero_point, params.zero_point);
    EXPECT_EQ(cal.scale, params.scale);
  }
}

TEST(Calibrate, RejectsEtaOutsideHalfOpenRange) {
  EXPECT_THROW(calibrate({0.0f, 1.0f, 1}, 0.5f), ArgumentError);
  EXPECT_THROW(calibrate({0.0f, 1.0f, 1}, -0.01f), ArgumentError);
}

TEST(Calibrate, IsInvertible) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> eta_dist(0.001f, 0.45f);
  for (int trial = 0; trial < 1000; ++trial) {
    const int bits = 1 + trial % 2;
    const auto params = compute_params(random_group(rng, 32), bits);
    const float eta = eta_dist(rng);
    const auto cal = calibrate(params, eta);
    const double s = cal.scale / (1.0 - 2.0 * eta);
    const double z = cal.zero_point - eta * s * max_code(bits);
    EXPECT_LE(std::abs(s - params.scale), ulps(params.scale, 4));
    EXPECT_LE(std::abs(z - params.zero_point),
              ulps(std::abs(params.zero_point) + params.scale * max_code(bits), 4));
  }
}

TEST(DequantizeGroup, Examples) {
  const auto out = dequantize_group(std::vector<Code>{0, 3}, {0.15f, 0.9f, 2});
  EXPECT_FLOAT_EQ(out[0], 0.15f);
  EXPECT_FLOAT_EQ(out[1], 2.85f);

  const auto cal = calibrate({0.0f, 1.0f, 1}, 0.2f);
  const auto reps = dequantize_group(std::vector<Code>{0, 1}, cal);
  EXPECT_FLOAT_EQ(reps[0], 0.2f);
  EXPECT_FLOAT_EQ(reps[1], 0.8f);
}

TEST(DequantizeGroup, GridRoundTripIsExact) {
  const std::vector<float> grid{-2, -1, 0, 1, -2, 1};
  const auto params = compute_params(grid, 2);
  const auto back = dequantize_group(quantize_group(grid, params), calibrate(params, 0.0f));
  EXPECT_EQ(back, grid);
}

TEST(DequantizeGroup, RangeContainmentAndErrorBounds) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> eta_dist(0.0f, 0.49f);
  for (int trial = 0; trial < 2000; ++trial) {
    const int bits = 1 + trial % 2;
    const auto group = random_group(rng, 32);
    const float eta = trial % 5 == 0 ? 0.0f : eta_dist(rng);
    const auto params = compute_params(group, bits);
    const auto cal = calibrate(params, eta);
    const auto rebuilt = dequantize_group(quantize_group(group, params), cal);
    const auto [lo, hi] = std::minmax_element(group.begin(), group.end());
    const float slack = 4 * ulps(std::abs(*lo) + std::abs(*hi), 1);
    for (std::size_t i = 0; i < group.size(); ++i) {
      ASSERT_GE(rebuilt[i], cal.zero_point - slack);
      ASSERT_LE(rebuilt[i], cal.upper() + slack);
      ASSERT_GE(rebuilt[i], *lo - slack);
      ASSERT_LE(rebuilt[i], *hi + slack);
      const double err = std::abs(static_cast<double>(group[i]) - rebuilt[i]);
      if (eta == 0.0f) {
        ASSERT_LE(err, params.scale / 2.0 + slack);
      }
      if (bits == 1) {
        ASSERT_LE(err, std::max(eta, 0.5f - eta) * params.scale + slack);
      }
    }
  }
}

TEST(FakeQuantizeMap, Branches) {
  EXPECT_DOUBLE_EQ(fake_quantize_map(0.3, 0.2), 0.2);
  EXPECT_DOUBLE_EQ(fake_quantize_map(0.7, 0.2), 0.8);
  EXPECT_DOUBLE_EQ(fake_quantize_map(0.7, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(fake_quantize_map(0.5, 0.1), 0.1);
  EXPECT_DOUBLE_EQ(fake_quantize_map(0.5, 0.5), 0.5);
}

TEST(FakeQuantizeMap, ZeroEtaIsRounding) {
  for (int i = 0; i <= 1000; ++i) {
    const double e = i / 1000.0;
    EXPECT_EQ(fake_quantize_map(e, 0.0), round_half_down(e));
  }
}

TEST(FakeQuantizeMap, DomainErrors) {
  EXPECT_THROW(fake_quantize_map(1.1, 0.2), ArgumentError);
  EXPECT_THROW(fake_quantize_map(-0.1, 0.2), ArgumentError);
  EXPECT_THROW(fake_quantize_map(0.5, 0.6), ArgumentError);
}

TEST(PackCodes, BitOrder) {
  const auto two = pack_codes(std::vector<Code>{0, 1, 2, 3}, 2);
  ASSERT_EQ(two.bytes().size(), 1u);
  EXPECT_EQ(two.bytes()[0], 0xE4);
  const auto one = pack_codes(std::vector<Code>{1, 0, 0, 0, 0, 0, 0, 0}, 1);
  ASSERT_EQ(one.bytes().size(), 1u);
  EXPECT_EQ(one.bytes()[0], 0x01);
  const auto partial = pack_codes(std::vector<Code>{3, 3, 3, 3, 1}, 2);
  ASSERT_EQ(partial.bytes().size(), 2u);
  EXPECT_EQ(partial.bytes()[0], 0xFF);
  EXPECT_EQ(partial.bytes()[1], 0x01);
}

TEST(PackCodes, RejectsOutOfRangeCodes) {
  EXPECT_THROW(pack_codes(std::vector<Code>{0, 2}, 1), ArgumentError);
  EXPECT_THROW(pack_codes(std::vector<Code>{4}, 2), ArgumentError);
}

TEST(PackCodes, FuzzedRoundTripForAllLengths) {
  std::mt19937_64 rng(23);
  for (int bits = 1; bits <= 2; ++bits) {
    std::uniform_int_distribution<int> code(0, max_code(bits));
    for (std::size_t n = 1; n <= 1000; ++n) {
      std::vector<Code> codes(n);
      for (auto& c : codes) c = static_cast<Code>(code(rng));
      const auto block = pack_codes(codes, bits);
      ASSERT_EQ(block.bytes().size(), (n * bits + 7) / 8);
      ASSERT_EQ(unpack_codes(block), codes);
      // padding bits stay zero
      const std::size_t used = n * bits % 8;
      if (used != 0) {
        ASSERT_EQ(block.bytes().back() >> used, 0);
      }
    }
  }
}

TEST(QuantizeMatrix, GroupCounts) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(quantize_matrix(fixtures::random_matrix(32, 2, rng), GroupingMode::per_channel, 32, 2,
                            0.0f)
                .params.size(),
            2u);
  EXPECT_EQ(quantize_matrix(fixtures::random_matrix(2, 64, rng), GroupingMode::per_token, 32, 2,
                            0.0f)
                .params.size(),
            4u);
}

TEST(QuantizeMatrix, NonDivisibleDimensionIsRejected) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(quantize_matrix(fixtures::random_matrix(33, 2, rng), GroupingMode::per_channel, 32,
                               2, 0.0f),
               ArgumentError);
  EXPECT_THROW(quantize_matrix(fixtures::random_matrix(2, 48, rng), GroupingMode::per_token, 32, 2,
                               0.0f),
               ArgumentError);
}

TEST(QuantizeMatrix, GroupsFollowTheirLayout) {
  // Per-channel group (tb, c) covers rows tb*g.. within column c.
  Matrix m(4, 2, {0, 10, 1, 11, 2, 12, 3, 13});
  const auto q = quantize_matrix(m, GroupingMode::per_channel, 2, 2, 0.0f);
  ASSERT_EQ(q.params.size(), 4u);
  EXPECT_EQ(q.params[0].zero_point, 0.0f);   // rows 0-1, col 0
  EXPECT_EQ(q.params[1].zero_point, 10.0f);  // rows 0-1, col 1
  EXPECT_EQ(q.params[2].zero_point, 2.0f);   // rows 2-3, col 0
  EXPECT_EQ(q.params[3].zero_point, 12.0f);
  const auto t = quantize_matrix(m, GroupingMode::per_token, 2, 2, 0.0f);
  EXPECT_EQ(t.params[1].zero_point, 1.0f);  // row 1
}

TEST(QuantizeMatrix, PerChannelEqualsPerTokenOnTranspose) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t g = trial % 2 ? 32 : 4;
    const std::size_t rows = g * (1 + trial % 3);
    const std::size_t cols = 3 + trial % 5;
    const int bits = 1 + trial % 2;
    const Matrix m = fixtures::random_matrix(rows, cols, rng);
    const auto by_channel = quantize_matrix(m, GroupingMode::per_channel, g, bits, 0.1f);
    const auto by_token = quantize_matrix(m.transposed(), GroupingMode::per_token, g, bits, 0.1f);
    ASSERT_EQ(by_channel.params.size(), by_token.params.size());
    const std::size_t blocks = rows / g;
    for (std::size_t tb = 0; tb < blocks; ++tb) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = tb * cols + c;    // token-block major
        const std::size_t j = c * blocks + tb;  // row of the transpose, then block
        ASSERT_EQ(by_channel.params[i], by_token.params[j]);
        ASSERT_EQ(by_channel.codes[i], by_token.codes[j]);
      }
    }
    ASSERT_TRUE(
        fixtures::bitwise_equal(dequantize_matrix(by_channel), dequantize_matrix(by_token).transposed()));
  }
}

TEST(PseudoQuantize, MatchesQuantizeMatrixParams) {
  std::mt19937_64 rng(41);
  const Matrix m = fixtures::random_matrix(64, 8, rng);
  for (auto mode : {GroupingMode::per_channel, GroupingMode::per_token}) {
    for (int bits = 1; bits <= 2; ++bits) {
      const auto full = quantize_matrix(m, mode, 8, bits, 0.045f);
      EXPECT_EQ(pseudo_quantize(m, mode, 8, bits, 0.045f), full.params);
    }
  }
}

TEST(PseudoQuantize, ConstantMatrix) {
  const Matrix m(32, 4, 2.5f);
  const auto params = pseudo_quantize(m, GroupingMode::per_channel, 32, 1, 1.0f / 6.0f);
  ASSERT_EQ(params.size(), 4u);
  for (const auto& p : params) {
    EXPECT_EQ(p.scale, 0.0f);
    EXPECT_EQ(p.zero_point, 2.5f);
  }
  // and the full path reconstructs a constant group exactly
  EXPECT_EQ(dequantize_matrix(quantize_matrix(m, GroupingMode::per_channel, 32, 1, 0.2f)), m);
}
