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

#include "circnet/fft.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

namespace circnet::fft {
namespace {

struct TwiddleTable {
  std::size_t n = 0;
  std::vector<std::uint32_t> bit_reverse;
  std::vector<Complex> roots;  // e^{-2 pi i k / n}, k < n/2
};

std::unique_ptr<TwiddleTable> build_table(std::size_t n) {
  auto table = std::make_unique<TwiddleTable>();
  table->n = n;
  table->bit_reverse.resize(n);
  const int bits = std::countr_zero(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t r = 0;
    for (int b = 0; b < bits; ++b) {
      if (i & (std::size_t{1} << b)) r |= 1u << (bits - 1 - b);
    }
    table->bit_reverse[i] = r;
  }
  table->roots.resize(std::max<std::size_t>(n / 2, 1));
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(n);
    table->roots[k] = Complex(std::cos(angle), std::sin(angle));
  }
  return table;
}

// One slot per log2(n). First writer wins; losers discard their table.
std::array<std::atomic<const TwiddleTable*>, 40> g_tables{};

const TwiddleTable& twiddles(std::size_t n) {
  const int slot = std::countr_zero(n);
  if (const TwiddleTable* t = g_tables[slot].load(std::memory_order_acquire)) {
    return *t;
  }
  auto fresh = build_table(n);
  const TwiddleTable* expected = nullptr;
  if (g_tables[slot].compare_exchange_strong(expected, fresh.get(),
                                             std::memory_order_acq_rel)) {
    return *fresh.release();
  }
  return *expected;
}

std::atomic<std::uint64_t> g_residue_warnings{0};

void check_length(std::size_t n) {
  if (!is_power_of_two(n)) {
    throw SizeError("fft length must be a power of two, got " +
                    std::to_string(n));
  }
  if (n >= (std::size_t{1} << 39)) throw SizeError("fft length too large");
}

void check_pair(std::size_t a, std::size_t b) {
  if (a != b) {
    throw SizeError("circular product length mismatch: " + std::to_string(a) +
                    " vs " + std::to_string(b));
  }
  check_length(a);
}

ComplexVec& scratch() {
  thread_local ComplexVec buffer;
  return buffer;
}

}  // namespace

void transform_inplace(std::span<Complex> data, bool inverse) {
  const std::size_t n = data.size();
  check_length(n);
  if (n == 1) return;
  const TwiddleTable& table = twiddles(n);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = table.bit_reverse[i];
    if (i < j) std::swap(data[i], data[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        Complex w = table.roots[k * stride];
        if (inverse) w = std::conj(w);
        const Complex u = data[start + k];
        const Complex v = data[start + k + half] * w;
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }

  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : data) v *= scale;
  }
}

ComplexVec fft(std::span<const Complex> x) {
  ComplexVec out(x.begin(), x.end());
  transform_inplace(out, false);
  return out;
}

ComplexVec ifft(std::span<const Complex> spectrum) {
  ComplexVec out(spectrum.begin(), spectrum.end());
  transform_inplace(out, true);
  return out;
}

ComplexVec fft_real(std::span<const double> x) {
  ComplexVec out(x.size());
  std::transform(x.begin(), x.end(), out.begin(),
                 [](double v) { return Complex(v, 0.0); });
  transform_inplace(out, false);
  return out;
}

std::uint64_t residue_warning_count() { return g_residue_warnings.load(); }

void extract_real(std::span<const Complex> values, std::span<double> out) {
  double scale = 1.0;
  double residue = 0.0;
  for (const auto& v : values) {
    scale = std::max(scale, std::abs(v.real()));
    residue = std::max(residue, std::abs(v.imag()));
  }
  residue /= scale;
  if (!(residue <= kResidueError)) {
    throw NumericalError("imaginary residue " + std::to_string(residue) +
                         " exceeds tolerance");
  }
  if (residue > kResidueWarn) g_residue_warnings.fetch_add(1);
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i].real();
}

std::vector<double> circular_convolve(std::span<const double> c,
                                      std::span<const double> x) {
  check_pair(c.size(), x.size());
  CirculantKernel kernel(c);
  std::vector<double> out(x.size());
  kernel.apply(x, out);
  return out;
}

std::vector<double> circular_correlate(std::span<const double> c,
                                       std::span<const double> g) {
  check_pair(c.size(), g.size());
  CirculantKernel kernel(c);
  std::vector<double> out(g.size());
  kernel.apply_transpose(g, out);
  return out;
}

CirculantKernel::CirculantKernel(std::span<const double> c)
    : spectrum_(fft_real(c)) {}

void CirculantKernel::apply(std::span<const double> x,
                            std::span<double> out) const {
  check_pair(size(), x.size());
  ComplexVec& buf = scratch();
  buf.resize(size());
  for (std::size_t i = 0; i < size(); ++i) buf[i] = Complex(x[i], 0.0);
  transform_inplace(buf, false);
  for (std::size_t i = 0; i < size(); ++i) buf[i] *= spectrum_[i];
  transform_inplace(buf, true);
  extract_real(buf, out);
}

void CirculantKernel::apply_transpose(std::span<const double> g,
                                      std::span<double> out) const {
  check_pair(size(), g.size());
  ComplexVec& buf = scratch();
  buf.resize(size());
  for (std::size_t i = 0; i < size(); ++i) buf[i] = Complex(g[i], 0.0);
  transform_inplace(buf, false);
  for (std::size_t i = 0; i < size(); ++i) buf[i] *= std::conj(spectrum_[i]);
  transform_inplace(buf, true);
  extract_real(buf, out);
}

void CirculantKernel::apply_pair(std::span<const double> x_a,
                                 std::span<const double> x_b,
                                 std::span<double> out_a,
                                 std::span<double> out_b,
                                 bool transpose) const {
  const std::size_t n = size();
  ComplexVec& buf = scratch();
  buf.resize(n);
  if (x_b.empty()) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = Complex(x_a[i], 0.0);
  } else {
    for (std::size_t i = 0; i < n; ++i) buf[i] = Complex(x_a[i], x_b[i]);
  }
  transform_inplace(buf, false);
  if (transpose) {
    for (std::size_t i = 0; i < n; ++i) buf[i] *= std::conj(spectrum_[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) buf[i] *= spectrum_[i];
  }
  transform_inplace(buf, true);
  for (std::size_t i = 0; i < n; ++i) out_a[i] = buf[i].real();
  if (!out_b.empty()) {
    for (std::size_t i = 0; i < n; ++i) out_b[i] = buf[i].imag();
  }
}

}  // namespace circnet::fft
