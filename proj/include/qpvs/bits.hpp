#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace qpvs {

inline constexpr std::size_t kMaxPredictors = 4096;

/// Packed bit vector of at most kMaxPredictors bits.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t size);
  static BitVector from_bools(const std::vector<bool>& v);
  /// Parses the format produced by to_hex().
  static BitVector from_hex(const std::string& hex, std::size_t size);

  std::size_t size() const noexcept { return size_; }
  bool test(std::size_t j) const noexcept { return (words_[j >> 6] >> (j & 63)) & 1u; }
  void set(std::size_t j, bool value = true) noexcept {
    const std::uint64_t mask = std::uint64_t{1} << (j & 63);
    if (value)
      words_[j >> 6] |= mask;
    else
      words_[j >> 6] &= ~mask;
  }
  void reset(std::size_t j) noexcept { set(j, false); }
  std::size_t count() const noexcept;
  bool none() const noexcept { return count() == 0; }

  /// True when every set bit of *this is also set in other.
  bool is_subset_of(const BitVector& other) const noexcept;

  /// Indices of set bits in increasing order.
  std::vector<std::size_t> indices() const;
  std::vector<bool> to_bools() const;

  /// Hex string of ceil(size/4) characters; character i holds bits 4i..4i+3,
  /// bit 4i being the least significant of the nibble.
  std::string to_hex() const;
  /// "0"/"1" characters, index 0 first.
  std::string to_string() const;

  std::size_t hash() const noexcept;

  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  friend bool operator==(const BitVector& a, const BitVector& b) noexcept {
    return a.size_ == b.size_ && a.words_ == b.words_;
  }
  /// Lexicographic on bits, index 0 first; an unset bit sorts before a set one.
  friend std::strong_ordering operator<=>(const BitVector& a, const BitVector& b) noexcept;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Inclusion indicator over the p design columns. forced_in marks columns
/// that are never toggled; equality, ordering and hashing look at bits only.
struct ModelIndicator {
  BitVector bits;
  BitVector forced_in;

  ModelIndicator() = default;
  explicit ModelIndicator(std::size_t p) : bits(p), forced_in(p) {}
  ModelIndicator(BitVector b, BitVector forced) : bits(std::move(b)), forced_in(std::move(forced)) {}

  /// Model containing only the forced-in columns.
  static ModelIndicator forced_only(const BitVector& forced);

  std::size_t p() const noexcept { return bits.size(); }
  std::size_t size() const noexcept { return bits.count(); }
  bool test(std::size_t j) const noexcept { return bits.test(j); }
  bool is_forced(std::size_t j) const noexcept { return forced_in.test(j); }
  std::vector<std::size_t> active() const { return bits.indices(); }
  bool respects_forced() const noexcept { return forced_in.is_subset_of(bits); }

  ModelIndicator with(std::size_t j, bool value) const {
    ModelIndicator out = *this;
    out.bits.set(j, value);
    return out;
  }

  friend bool operator==(const ModelIndicator& a, const ModelIndicator& b) noexcept { return a.bits == b.bits; }
  friend std::strong_ordering operator<=>(const ModelIndicator& a, const ModelIndicator& b) noexcept {
    return a.bits <=> b.bits;
  }
};

/// Mask with only column 0 set (the default intercept convention), or empty.
BitVector intercept_mask(std::size_t p, bool force_intercept);

}  // namespace qpvs

template <>
struct std::hash<qpvs::BitVector> {
  std::size_t operator()(const qpvs::BitVector& b) const noexcept { return b.hash(); }
};

template <>
struct std::hash<qpvs::ModelIndicator> {
  std::size_t operator()(const qpvs::ModelIndicator& m) const noexcept { return m.bits.hash(); }
};
