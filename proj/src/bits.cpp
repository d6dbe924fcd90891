#include "qpvs/bits.hpp"

#include <bit>

#include "qpvs/error.hpp"
#include "qpvs/rng.hpp"

namespace qpvs {

BitVector::BitVector(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {
  if (size > kMaxPredictors)
    fail(ErrorCode::TooManyPredictors,
         "model indicators support at most " + std::to_string(kMaxPredictors) + " columns, got " +
             std::to_string(size));
}

BitVector BitVector::from_bools(const std::vector<bool>& v) {
  BitVector out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j)
    if (v[j]) out.set(j);
  return out;
}

BitVector BitVector::from_hex(const std::string& hex, std::size_t size) {
  if (hex.size() != (size + 3) / 4) fail(ErrorCode::Parse, "hex bitstring has wrong length: " + hex);
  BitVector out(size);
  for (std::size_t i = 0; i < hex.size(); ++i) {
    const char c = hex[i];
    unsigned nibble = 0;
    if (c >= '0' && c <= '9')
      nibble = static_cast<unsigned>(c - '0');
    else if (c >= 'a' && c <= 'f')
      nibble = static_cast<unsigned>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F')
      nibble = static_cast<unsigned>(c - 'A' + 10);
    else
      fail(ErrorCode::Parse, "bad hex digit in bitstring: " + hex);
    for (unsigned b = 0; b < 4; ++b) {
      const std::size_t j = 4 * i + b;
      if ((nibble >> b) & 1u) {
        if (j >= size) fail(ErrorCode::Parse, "hex bitstring sets a bit past its size: " + hex);
        out.set(j);
      }
    }
  }
  return out;
}

std::size_t BitVector::count() const noexcept {
  std::size_t c = 0;
  for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

bool BitVector::is_subset_of(const BitVector& other) const noexcept {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const std::uint64_t o = i < other.words_.size() ? other.words_[i] : 0;
    if (words_[i] & ~o) return false;
  }
  return true;
}

std::vector<std::size_t> BitVector::indices() const {
  std::vector<std::size_t> out;
  out.reserve(count());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    std::uint64_t w = words_[i];
    while (w) {
      out.push_back(i * 64 + static_cast<std::size_t>(std::countr_zero(w)));
      w &= w - 1;
    }
  }
  return out;
}

std::vector<bool> BitVector::to_bools() const {
  std::vector<bool> out(size_);
  for (std::size_t j = 0; j < size_; ++j) out[j] = test(j);
  return out;
}

std::string BitVector::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out((size_ + 3) / 4, '0');
  for (std::size_t i = 0; i < out.size(); ++i) {
    unsigned nibble = 0;
    for (unsigned b = 0; b < 4; ++b) {
      const std::size_t j = 4 * i + b;
      if (j < size_ && test(j)) nibble |= 1u << b;
    }
    out[i] = kDigits[nibble];
  }
  return out;
}

std::string BitVector::to_string() const {
  std::string out(size_, '0');
  for (std::size_t j = 0; j < size_; ++j)
    if (test(j)) out[j] = '1';
  return out;
}

std::size_t BitVector::hash() const noexcept {
  std::uint64_t h = mix64(size_);
  for (auto w : words_) h = mix64(h ^ w);
  return static_cast<std::size_t>(h);
}

std::strong_ordering operator<=>(const BitVector& a, const BitVector& b) noexcept {
  const std::size_t nw = std::min(a.words_.size(), b.words_.size());
  for (std::size_t i = 0; i < nw; ++i) {
    const std::uint64_t diff = a.words_[i] ^ b.words_[i];
    if (diff) {
      const std::uint64_t lowest = diff & (~diff + 1);
      return (a.words_[i] & lowest) ? std::strong_ordering::greater : std::strong_ordering::less;
    }
  }
  return a.size_ <=> b.size_;
}

ModelIndicator ModelIndicator::forced_only(const BitVector& forced) { return ModelIndicator(forced, forced); }

BitVector intercept_mask(std::size_t p, bool force_intercept) {
  BitVector m(p);
  if (force_intercept && p > 0) m.set(0);
  return m;
}

}  // namespace qpvs
