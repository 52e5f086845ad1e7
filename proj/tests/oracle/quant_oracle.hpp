#pragma once

// Direct evaluation of the scalar quantizer and its inverse:
//   q = round((v - vmin) / (vmax - vmin) * (2^B - 1)),  v' = vmin + q (vmax - vmin) / (2^B - 1)
// Values are clamped into [vmin, vmax]; halves round away from zero.

#include <cmath>
#include <cstdint>

namespace oracle {

inline std::uint32_t quantize(double v, double vmin, double vmax, int bits)
{
  if (!(vmax > vmin))
    return 0;
  if (v < vmin)
    v = vmin;
  if (v > vmax)
    v = vmax;
  const double levels = std::ldexp(1.0, bits) - 1.0;
  return static_cast<std::uint32_t>(std::floor((v - vmin) / (vmax - vmin) * levels + 0.5));
}

inline double dequantize(std::uint32_t q, double vmin, double vmax, int bits)
{
  if (!(vmax > vmin))
    return vmin;
  const double levels = std::ldexp(1.0, bits) - 1.0;
  return vmin + static_cast<double>(q) * (vmax - vmin) / levels;
}

}  // namespace oracle
