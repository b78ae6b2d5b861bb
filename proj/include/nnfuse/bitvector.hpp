#pragma once

#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nnfuse/error.hpp"

namespace nnfuse {

/// Fixed-length bit-vector packed into 64-bit words. Bit i lives in word
/// i / 64 at position i % 64; padding bits past size() are always zero.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t dim) : dim_(dim), words_(word_count(dim), 0) {}

  /// Parses a string of '0'/'1' characters, bit 0 first.
  static BitVector from_string(std::string_view bits) {
    BitVector v(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] == '1') {
        v.set(i);
      } else if (bits[i] != '0') {
        fail(ErrorKind::kParse, "invalid bit character '" +
                                    std::string(1, bits[i]) + "' at " +
                                    std::to_string(i));
      }
    }
    return v;
  }

  static constexpr std::size_t word_count(std::size_t dim) {
    return (dim + 63) / 64;
  }

  std::size_t size() const noexcept { return dim_; }
  bool empty() const noexcept { return dim_ == 0; }

  bool test(std::size_t i) const noexcept {
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }
  void set(std::size_t i, bool value = true) noexcept {
    const std::uint64_t bit = std::uint64_t{1} << (i & 63);
    if (value) {
      words_[i >> 6] |= bit;
    } else {
      words_[i >> 6] &= ~bit;
    }
  }
  void reset(std::size_t i) noexcept { set(i, false); }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  /// Number of set bits in [begin, begin + width).
  std::size_t count_range(std::size_t begin, std::size_t width) const noexcept {
    std::size_t n = 0;
    for (std::size_t i = begin; i < begin + width; ++i) n += test(i);
    return n;
  }

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  std::string to_string() const {
    std::string s(dim_, '0');
    for (std::size_t i = 0; i < dim_; ++i) {
      if (test(i)) s[i] = '1';
    }
    return s;
  }

  friend bool operator==(const BitVector&, const BitVector&) = default;
  friend std::strong_ordering operator<=>(const BitVector&,
                                          const BitVector&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::uint64_t> words_;
};

struct BitVectorHash {
  std::size_t operator()(const BitVector& v) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ v.size();
    for (auto w : v.words()) {
      h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

inline std::size_t xor_popcount(const std::uint64_t* a, const std::uint64_t* b,
                                std::size_t nwords) noexcept {
  std::size_t n = 0;
  for (std::size_t k = 0; k < nwords; ++k) {
    n += static_cast<std::size_t>(std::popcount(a[k] ^ b[k]));
  }
  return n;
}

/// Number of differing coordinates.
inline std::size_t hamming_bits(const BitVector& a, const BitVector& b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::kDimension, "bit-vector length mismatch: " +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
  }
  return xor_popcount(a.words().data(), b.words().data(), a.words().size());
}

/// Hamming distance normalised by the number of coordinates, in [0, 1].
inline double hamming(const BitVector& a, const BitVector& b) {
  const std::size_t bits = hamming_bits(a, b);
  if (a.size() == 0) fail(ErrorKind::kDimension, "hamming of empty vectors");
  return static_cast<double>(bits) / static_cast<double>(a.size());
}

/// Row-major contiguous storage of equal-length bit-vectors; the layout the
/// matching kernels scan.
class PackedBits {
 public:
  PackedBits() = default;

  explicit PackedBits(std::span<const BitVector> rows) {
    if (rows.empty()) return;
    dim_ = rows.front().size();
    stride_ = BitVector::word_count(dim_);
    data_.reserve(rows.size() * stride_);
    for (const auto& r : rows) {
      if (r.size() != dim_) {
        fail(ErrorKind::kDimension, "packed row length mismatch: " +
                                        std::to_string(r.size()) + " vs " +
                                        std::to_string(dim_));
      }
      data_.insert(data_.end(), r.words().begin(), r.words().end());
    }
    rows_ = rows.size();
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dimension() const noexcept { return dim_; }
  std::size_t stride() const noexcept { return stride_; }
  const std::uint64_t* row(std::size_t i) const noexcept {
    return data_.data() + i * stride_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint64_t> data_;
};

}  // namespace nnfuse
