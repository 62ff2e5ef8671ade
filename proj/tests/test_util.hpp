#pragma once

#include <cstring>
#include <random>
#include <vector>

#include "xquant/matrix.hpp"
#include "xquant/tensor_io.hpp"

namespace xquant::fixtures {

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

inline bool bitwise_equal(const TensorDump& a, const TensorDump& b) {
  if (a.num_layers() != b.num_layers() || a.num_tokens != b.num_tokens ||
      a.num_channels != b.num_channels) {
    return false;
  }
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    if (!bitwise_equal(a.layers[l].key, b.layers[l].key) ||
        !bitwise_equal(a.layers[l].value, b.layers[l].value)) {
      return false;
    }
  }
  return true;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            float lo = -4.0f, float hi = 4.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

inline TensorDump random_dump(std::size_t layers, std::size_t tokens, std::size_t channels,
                              std::mt19937_64& rng) {
  TensorDump dump;
  dump.num_tokens = tokens;
  dump.num_channels = channels;
  for (std::size_t l = 0; l < layers; ++l) {
    dump.layers.push_back(
        {random_matrix(tokens, channels, rng), random_matrix(tokens, channels, rng)});
  }
  return dump;
}

// Layer l holds base_l + step_l * 3 * ((t + c) % 2): every group of even size
// along either axis contains both extremes, so 1- and 2-bit quantization with
// eta = 0 reconstructs it exactly.
inline TensorDump grid_exact_dump(std::size_t layers, std::size_t tokens, std::size_t channels) {
  TensorDump dump;
  dump.num_tokens = tokens;
  dump.num_channels = channels;
  for (std::size_t l = 0; l < layers; ++l) {
    LayerTensor layer{Matrix(tokens, channels), Matrix(tokens, channels)};
    const float base = static_cast<float>(l) - 3.0f;
    const float step = static_cast<float>(1u << (l % 3));
    for (std::size_t t = 0; t < tokens; ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        layer.key(t, c) = base + step * 3.0f * static_cast<float>((t + c) % 2);
        layer.value(t, c) = -base + 2.0f * step * 3.0f * static_cast<float>((t + c + 1) % 2);
      }
    }
    dump.layers.push_back(std::move(layer));
  }
  return dump;
}

// L copies of one random layer.
inline TensorDump identical_layers(std::size_t layers, std::size_t tokens, std::size_t channels,
                                   std::mt19937_64& rng) {
  TensorDump dump = random_dump(1, tokens, channels, rng);
  for (std::size_t l = 1; l < layers; ++l) dump.layers.push_back(dump.layers.front());
  return dump;
}

}  // namespace xquant::fixtures
