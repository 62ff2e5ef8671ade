#include "xquant/crosslayer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

#include "xquant/errors.hpp"

namespace xquant {
namespace {

// Nearest integer, exact halves toward zero.
double round_half_toward_zero(double x) noexcept {
  return x >= 0.0 ? std::ceil(x - 0.5) : std::floor(x + 0.5);
}

}  // namespace

MergeWeights::MergeWeights(std::vector<double> gamma) : gamma_(std::move(gamma)) {
  if (gamma_.size() < 2) {
    throw ArgumentError("a merge group needs at least two layers");
  }
  double sum = 0.0;
  for (double g : gamma_) {
    if (!(g >= 0.0) || !std::isfinite(g)) {
      throw ArgumentError("merge weights must be finite and nonnegative");
    }
    sum += g;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ArgumentError("merge weights must sum to 1, got " + std::to_string(sum));
  }
}

MergeWeights MergeWeights::one_hot(std::size_t group_layers, std::size_t dominant) {
  if (dominant >= group_layers) {
    throw ArgumentError("dominant index " + std::to_string(dominant) + " outside a group of " +
                        std::to_string(group_layers));
  }
  std::vector<double> gamma(group_layers, 0.0);
  gamma[dominant] = 1.0;
  return MergeWeights(std::move(gamma));
}

MergeWeights MergeWeights::pair(double gamma0) { return MergeWeights({gamma0, 1.0 - gamma0}); }

std::vector<Code> merge_codes(std::span<const std::vector<Code>> code_arrays,
                              const MergeWeights& weights, int bit_width) {
  check_bit_width(bit_width);
  if (code_arrays.size() != weights.size()) {
    throw ArgumentError("got " + std::to_string(code_arrays.size()) + " code arrays for " +
                        std::to_string(weights.size()) + " merge weights");
  }
  const std::size_t n = code_arrays.front().size();
  const int limit = max_code(bit_width);
  for (const auto& codes : code_arrays) {
    if (codes.size() != n) {
      throw ArgumentError("code arrays differ in length (" + std::to_string(codes.size()) +
                          " vs " + std::to_string(n) + ")");
    }
    for (Code c : codes) {
      if (c > limit) {
        throw ArgumentError("code " + std::to_string(c) + " out of range for " +
                            std::to_string(bit_width) + "-bit merge");
      }
    }
  }

  const auto gamma = weights.gamma();
  const std::vector<Code>& reference = code_arrays.back();
  std::vector<Code> merged(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int ref = reference[i];
    double offset = 0.0;
    for (std::size_t l = 0; l + 1 < code_arrays.size(); ++l) {
      offset += gamma[l] * static_cast<double>(static_cast<int>(code_arrays[l][i]) - ref);
    }
    const double level = ref + round_half_toward_zero(offset);
    merged[i] = static_cast<Code>(std::clamp(level, 0.0, static_cast<double>(limit)));
  }
  return merged;
}

std::vector<Code> dominant_share(std::span<const Code> dominant_codes) {
  return {dominant_codes.begin(), dominant_codes.end()};
}

const char* interval_label(GammaInterval interval) noexcept {
  switch (interval) {
    case GammaInterval::below_one_sixth: return "[0,1/6)";
    case GammaInterval::one_sixth_to_quarter: return "(1/6,1/4)";
    case GammaInterval::quarter_to_half: return "(1/4,1/2)";
    case GammaInterval::half_to_three_quarters: return "(1/2,3/4)";
    case GammaInterval::three_quarters_to_five_sixths: return "(3/4,5/6)";
    case GammaInterval::above_five_sixths: return "(5/6,1]";
  }
  return "?";
}

GammaClass classify_gamma(double gamma0) {
  if (!(gamma0 >= 0.0 && gamma0 <= 1.0)) {
    throw ArgumentError("gamma0 must lie in [0, 1], got " + std::to_string(gamma0));
  }
  // Every threshold (c - 1/2) / delta for delta in {1, 2, 3}.
  struct Boundary {
    double value;
    const char* label;
  };
  static constexpr std::array<Boundary, 5> boundaries = {{{1.0 / 6.0, "1/6"},
                                                          {0.25, "1/4"},
                                                          {0.5, "1/2"},
                                                          {0.75, "3/4"},
                                                          {5.0 / 6.0, "5/6"}}};
  std::size_t index = 0;
  for (const auto& b : boundaries) {
    if (gamma0 == b.value) {
      throw AmbiguityError(std::string("gamma0 = ") + b.label +
                           " is an interval boundary; the merged code there depends on the "
                           "rounding tie rule");
    }
    if (gamma0 > b.value) ++index;
  }
  const auto interval = static_cast<GammaInterval>(index);
  GammaClass cls{interval, std::nullopt};
  if (interval == GammaInterval::below_one_sixth) cls.shared_layer = 1;
  if (interval == GammaInterval::above_five_sixths) cls.shared_layer = 0;
  return cls;
}

std::string describe(const GammaClass& cls) {
  std::string text = interval_label(cls.interval);
  if (cls.shared_layer) {
    text += " accelerated: share layer " + std::to_string(*cls.shared_layer);
  }
  return text;
}

DeltaHistogram delta_histogram(std::span<const Code> codes_a, std::span<const Code> codes_b,
                               int bit_width) {
  check_bit_width(bit_width);
  if (codes_a.size() != codes_b.size()) {
    throw ArgumentError("delta histogram needs equal-length code arrays (" +
                        std::to_string(codes_a.size()) + " vs " + std::to_string(codes_b.size()) +
                        ")");
  }
  const int limit = max_code(bit_width);
  DeltaHistogram hist;
  hist.counts.assign(static_cast<std::size_t>(limit) + 1, 0);
  for (std::size_t i = 0; i < codes_a.size(); ++i) {
    if (codes_a[i] > limit || codes_b[i] > limit) {
      throw ArgumentError("code out of range at position " + std::to_string(i));
    }
    ++hist.counts[static_cast<std::size_t>(std::abs(int{codes_a[i]} - int{codes_b[i]}))];
  }
  hist.total = codes_a.size();
  return hist;
}

std::vector<Code> collapse_to_one_bit(std::span<const Code> two_bit_codes) {
  std::vector<Code> out(two_bit_codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<Code>(two_bit_codes[i] >> 1);
  }
  return out;
}

}  // namespace xquant
