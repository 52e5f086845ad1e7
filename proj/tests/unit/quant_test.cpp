#include <gtest/gtest.h>

#include <random>

#include "csisniff/quant.hpp"
#include "oracle/quant_oracle.hpp"

using namespace csisniff;

namespace {

QuantHeader series_header(std::size_t n, int bits, double lo, double hi)
{
  QuantHeader h;
  h.stage = Stage::aggregate;
  h.bits = bits;
  h.windows = static_cast<std::uint32_t>(n);
  h.window_length = 3.0;
  h.ranges = {{lo, hi}};
  return h;
}

}  // namespace

TEST(Quantizer, LowerBoundIsCodeZero)
{
  const std::vector<double> v(10, 2.5);
  const auto d = read_quant(write_quant(series_header(10, 6, 2.5, 9.0), v));
  for (auto c : d.codes)
    EXPECT_EQ(c, 0u);
}

TEST(Quantizer, UpperBoundIsMaxCode) { EXPECT_EQ(quantize_value(7.0, {1.0, 7.0}, 4), 15u); }

TEST(Quantizer, RoundsHalfAwayFromZero)
{
  // (v - 0) / 3 * 3 lands exactly on x.5 for v = 0.5, 1.5, 2.5
  EXPECT_EQ(quantize_value(0.5, {0, 3}, 2), 1u);
  EXPECT_EQ(quantize_value(1.5, {0, 3}, 2), 2u);
  EXPECT_EQ(quantize_value(2.5, {0, 3}, 2), 3u);
}

TEST(Quantizer, ClampsOutOfRange)
{
  EXPECT_EQ(quantize_value(-4, {0, 1}, 8), 0u);
  EXPECT_EQ(quantize_value(9, {0, 1}, 8), 255u);
}

TEST(Quantizer, DegenerateRange)
{
  EXPECT_EQ(quantize_value(5.0, {5.0, 5.0}, 8), 0u);
  EXPECT_EQ(dequantize_value(0, {5.0, 5.0}, 8), 5.0);
}

TEST(Quantizer, MatchesDirectFormulaAndHalfStepBound)
{
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 120);
  std::vector<double> v(100);
  for (auto& x : v)
    x = u(rng);
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());
  const auto d = read_quant(write_quant(series_header(v.size(), 8, lo, hi), v));
  const double half = (hi - lo) / (2.0 * 255.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(d.codes[i], oracle::quantize(v[i], lo, hi, 8));
    EXPECT_EQ(d.values[i], oracle::dequantize(d.codes[i], lo, hi, 8));
    EXPECT_LE(std::abs(d.values[i] - v[i]), half * (1 + 1e-12));
  }
}

TEST(Quantizer, IdempotentOnDequantizedValues)
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int bits = 1; bits <= 16; ++bits) {
    std::vector<double> v(37);
    for (auto& x : v)
      x = u(rng);
    const auto h = series_header(v.size(), bits, 0.0, 1.0);
    const auto first = write_quant(h, v);
    const auto d = read_quant(first);
    EXPECT_EQ(write_quant(h, d.values), first) << bits;
  }
}

TEST(BitPacking, MsbFirstContiguous)
{
  BitWriter w;
  w.put(0b101, 3);
  w.put(0b11110, 5);
  w.put(0b1, 1);
  const auto bytes = w.finish();
  ASSERT_EQ(bytes.size(), 2u);
  EXPECT_EQ(bytes[0], 0b10111110);
  EXPECT_EQ(bytes[1], 0b10000000);
  BitReader r(bytes);
  EXPECT_EQ(r.get(3), 0b101u);
  EXPECT_EQ(r.get(5), 0b11110u);
  EXPECT_EQ(r.get(1), 1u);
}

TEST(Container, FixedLayout)
{
  auto h = series_header(3, 5, 0.0, 1.0);
  h.window_start = 12.5;
  h.bandwidth_mhz = 20;
  const auto bytes = write_quant(h, std::vector<double>{0.0, 0.5, 1.0});
  ASSERT_EQ(bytes.size(), 40u + 16u + 2u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CSIQ");
  EXPECT_EQ(bytes[4], 1);  // version
  EXPECT_EQ(bytes[5], 4);  // stage
  EXPECT_EQ(bytes[6], 5);  // bits
  EXPECT_EQ(bytes[7], 0);  // range mode
  EXPECT_EQ(bytes[8], 0);  // bandwidth, big-endian
  EXPECT_EQ(bytes[9], 20);
  EXPECT_EQ(bytes[23], 3);  // windows (u32 at 20..23)
  // codes 0, 16, 31 at 5 bits: 00000 10000 11111 -> 00000100 0011111(0)
  EXPECT_EQ(bytes[56], 0b00000100);
  EXPECT_EQ(bytes[57], 0b00111110);
  const auto d = read_quant(bytes);
  EXPECT_EQ(d.header, h);
}

TEST(Container, TwoEncodePassesIdentical)
{
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> v(1001);
  for (auto& x : v)
    x = u(rng);
  const auto h = series_header(v.size(), 11, -3, 3);
  EXPECT_EQ(write_quant(h, v), write_quant(h, v));
}

TEST(Container, StructuralErrors)
{
  const auto good = write_quant(series_header(4, 7, 0, 1), std::vector<double>{0, 0.2, 0.4, 1});
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(read_quant(bad), StructuralError);
  bad = good;
  bad[4] = 2;
  EXPECT_THROW(read_quant(bad), StructuralError);
  bad = good;
  bad[6] = 17;
  EXPECT_THROW(read_quant(bad), StructuralError);
  bad = good;
  bad[6] = 0;
  EXPECT_THROW(read_quant(bad), StructuralError);
  bad = good;
  bad.pop_back();
  EXPECT_THROW(read_quant(bad), StructuralError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(read_quant(bad), StructuralError);
  EXPECT_THROW(read_quant(std::vector<std::uint8_t>(good.begin(), good.begin() + 20)), StructuralError);
}

TEST(Container, RejectsBadHeaderOnWrite)
{
  auto h = series_header(2, 0, 0, 1);
  EXPECT_THROW(write_quant(h, std::vector<double>{0, 1}), StructuralError);
  h = series_header(2, 4, 1, 0);
  EXPECT_THROW(write_quant(h, std::vector<double>{0, 1}), StructuralError);
  h = series_header(2, 4, 0, 1);
  EXPECT_THROW(write_quant(h, std::vector<double>{0, 1, 2}), StructuralError);
}

TEST(Container, StageOneStreamsInterleaveRealImag)
{
  QuantHeader h;
  h.stage = Stage::raw;
  h.bits = 4;
  h.frames = 1;
  h.subcarriers = 2;
  h.ranges = {{0, 15}, {-15, 0}};
  EXPECT_EQ(h.stream_of(0), 0u);
  EXPECT_EQ(h.stream_of(1), 1u);
  EXPECT_EQ(h.stream_of(2), 0u);
  const auto d = read_quant(write_quant(h, std::vector<double>{15, -15, 0, 0}));
  EXPECT_EQ(d.codes, (std::vector<std::uint32_t>{15, 0, 0, 15}));
}
