/*
 * Copyright 2026 The circnet Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CIRCNET_FFT_HPP_
#define CIRCNET_FFT_HPP_

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace circnet::fft {

using Complex = std::complex<double>;
using ComplexVec = std::vector<Complex>;

// Raised for lengths the radix-2 transform cannot handle.
class SizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a real-valued result carries an imaginary residue above the
// error threshold.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kResidueWarn = 1e-9;
inline constexpr double kResidueError = 1e-6;

constexpr bool is_power_of_two(std::size_t n) {
  return n != 0 && (n & (n - 1)) == 0;
}

constexpr std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place radix-2 transform. Forward is unnormalized
// (X_k = sum_j x_j e^{-2 pi i jk/n}); the inverse applies 1/n.
void transform_inplace(std::span<Complex> data, bool inverse);

ComplexVec fft(std::span<const Complex> x);
ComplexVec ifft(std::span<const Complex> spectrum);

// Forward transform of a real sequence.
ComplexVec fft_real(std::span<const double> x);

// y_i = sum_j c_{(i-j) mod n} x_j, i.e. circ(c) x.
std::vector<double> circular_convolve(std::span<const double> c,
                                      std::span<const double> x);

// circ(c)^T g, i.e. y_k = sum_i c_{(i-k) mod n} g_i.
std::vector<double> circular_correlate(std::span<const double> c,
                                       std::span<const double> g);

// Number of real-extraction calls whose residue exceeded kResidueWarn.
std::uint64_t residue_warning_count();

// Checks the imaginary part of a transform result that should be real and
// copies out the real part. Residues are measured relative to
// max(1, max |re|).
void extract_real(std::span<const Complex> values, std::span<double> out);

// Circulant operator with its kernel spectrum cached, so repeated products
// with the same c cost two transforms each. Real inputs are processed two at
// a time by packing them into the real and imaginary parts of one complex
// sequence, which is exact because the kernel is real.
class CirculantKernel {
 public:
  explicit CirculantKernel(std::span<const double> c);

  std::size_t size() const { return spectrum_.size(); }
  const ComplexVec& spectrum() const { return spectrum_; }

  // out = circ(c) x
  void apply(std::span<const double> x, std::span<double> out) const;
  // out = circ(c)^T g
  void apply_transpose(std::span<const double> g, std::span<double> out) const;
  // Two products in one complex transform pair. x_b/out_b may be empty.
  void apply_pair(std::span<const double> x_a, std::span<const double> x_b,
                  std::span<double> out_a, std::span<double> out_b,
                  bool transpose) const;

 private:
  ComplexVec spectrum_;
};

}  // namespace circnet::fft

#endif  // CIRCNET_FFT_HPP_
