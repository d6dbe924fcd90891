#include <doctest.h>

#include <random>
#include <set>
#include <unordered_set>

#include "qpvs/bits.hpp"
#include "qpvs/core.hpp"
#include "qpvs/error.hpp"

using namespace qpvs;

namespace {

Dataset small_dataset() {
  Dataset d;
  d.y = VectorXd(2);
  d.y << 1, 2;
  d.X = MatrixXd(2, 2);
  d.X << 1, 0.5, 1, -0.5;
  d.column_names = {"a", "b"};
  return d;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("validate_dataset returns valid input unchanged") {
  const Dataset d = small_dataset();
  const Dataset& out = validate_dataset(d);
  CHECK(&out == &d);
  CHECK(out.y == d.y);
  CHECK(out.X == d.X);
}

TEST_CASE("validate_dataset rejects a row-count mismatch") {
  Dataset d = small_dataset();
  d.y = VectorXd::Ones(3);
  CHECK(code_of([&] { validate_dataset(d); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("validate_dataset reports the position of a NaN") {
  Dataset d = small_dataset();
  d.X(0, 1) = std::nan("");
  try {
    validate_dataset(d);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
    CHECK(e.row() == 0u);
    CHECK(e.col() == 1u);
  }
}

TEST_CASE("validate_dataset reports non-finite responses without a column") {
  Dataset d = small_dataset();
  d.y[1] = INFINITY;
  try {
    validate_dataset(d);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
    CHECK(e.row() == 1u);
    CHECK_FALSE(e.col().has_value());
  }
}

TEST_CASE("validate_dataset rejects duplicate names, empty data and too many columns") {
  Dataset d = small_dataset();
  d.column_names = {"a", "a"};
  CHECK(code_of([&] { validate_dataset(d); }) == ErrorCode::DuplicateColumnName);

  Dataset e;
  e.y = VectorXd(0);
  e.X = MatrixXd(0, 1);
  e.column_names = {"a"};
  CHECK(code_of([&] { validate_dataset(e); }) == ErrorCode::DimensionMismatch);

  Dataset wide;
  wide.y = VectorXd::Ones(2);
  wide.X = MatrixXd::Zero(2, kMaxPredictors + 1);
  for (std::size_t j = 0; j <= kMaxPredictors; ++j) wide.column_names.push_back("c" + std::to_string(j));
  CHECK(code_of([&] { validate_dataset(wide); }) == ErrorCode::TooManyPredictors);
}

TEST_CASE("default configuration matches the published simulation settings") {
  const PriorConfig prior;
  const RunConfig run;
  CHECK(prior.slab_variance == 9.0);
  REQUIRE_FALSE(prior.fixed_w());
  CHECK(std::get<BetaBinomialSparsity>(prior.sparsity).a == 1.0);
  CHECK(std::get<BetaBinomialSparsity>(prior.sparsity).b == 1.0);
  CHECK(run.sweeps == 3000);
  CHECK(run.burn_in == 1500);
  CHECK(run.fdr_alpha == 0.05);
  CHECK(run.newton_tol == 1e-8);
  CHECK(run.newton_max_iter == 100);
  CHECK_FALSE(run.cache_cap.has_value());
  CHECK(std::holds_alternative<FullModelQmle>(run.dispersion));
}

TEST_CASE("configuration bounds are enforced") {
  PriorConfig p;
  p.slab_variance = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = PriorConfig{};
  p.sparsity = FixedSparsity{1.0};
  CHECK_THROWS_AS(p.validate(), Error);
  p.sparsity = BetaBinomialSparsity{0.0, 1.0};
  CHECK_THROWS_AS(p.validate(), Error);

  RunConfig r;
  r.burn_in = r.sweeps;
  CHECK_THROWS_AS(r.validate(), Error);
  r = RunConfig{};
  r.fdr_alpha = 1.0;
  CHECK_THROWS_AS(r.validate(), Error);
  r = RunConfig{};
  r.cache_cap = 0;
  CHECK_THROWS_AS(r.validate(), Error);
  r = RunConfig{};
  r.dispersion = FixedDispersion{-1.0};
  CHECK_THROWS_AS(r.validate(), Error);
}

TEST_CASE("popcount, equality and hashing agree with a naive bit loop") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> size_dist(1, 300);
  std::unordered_set<ModelIndicator> seen;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t p = size_dist(rng);
    std::vector<bool> bools(p);
    std::size_t naive = 0;
    for (std::size_t j = 0; j < p; ++j) {
      bools[j] = (rng() & 3u) == 0;
      naive += bools[j];
    }
    const BitVector b = BitVector::from_bools(bools);
    REQUIRE(b.count() == naive);
    REQUIRE(b.to_bools() == bools);

    BitVector copy(p);
    for (std::size_t j = 0; j < p; ++j)
      if (bools[j]) copy.set(j);
    ModelIndicator a(b, BitVector(p)), c(copy, intercept_mask(p, true));
    REQUIRE(a == c);
    REQUIRE(std::hash<ModelIndicator>{}(a) == std::hash<ModelIndicator>{}(c));
    seen.insert(a);
    REQUIRE(seen.count(c) == 1);
  }
}

TEST_CASE("ordering is lexicographic from index 0") {
  auto bv = [](const std::string& s) {
    std::vector<bool> v;
    for (char ch : s) v.push_back(ch == '1');
    return BitVector::from_bools(v);
  };
  CHECK(bv("0000") < bv("1000"));
  CHECK(bv("0111") < bv("1000"));
  CHECK(bv("1001") < bv("1010"));
  CHECK((bv("1010") <=> bv("1010")) == std::strong_ordering::equal);

  std::mt19937_64 rng(11);
  std::set<std::string> strings;
  std::set<BitVector> bits;
  for (int t = 0; t < 500; ++t) {
    std::string s;
    for (int j = 0; j < 70; ++j) s += (rng() & 1u) ? '1' : '0';
    strings.insert(s);
    bits.insert(bv(s));
  }
  // '0' < '1', so std::string order is the same lexicographic order.
  std::vector<std::string> from_bits;
  for (const auto& b : bits) from_bits.push_back(b.to_string());
  CHECK(from_bits == std::vector<std::string>(strings.begin(), strings.end()));
}

TEST_CASE("hex encoding round-trips and places bit 0 in the low nibble bit") {
  BitVector b(9);
  b.set(0);
  b.set(5);
  b.set(8);
  CHECK(b.to_hex() == "121");
  CHECK(BitVector::from_hex(b.to_hex(), 9) == b);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t p = 1 + rng() % 200;
    BitVector r(p);
    for (std::size_t j = 0; j < p; ++j) r.set(j, rng() & 1u);
    CHECK(BitVector::from_hex(r.to_hex(), p) == r);
  }
}

TEST_CASE("subset relation and forced-in helpers") {
  BitVector a(5), b(5);
  a.set(1);
  b.set(1);
  b.set(3);
  CHECK(a.is_subset_of(b));
  CHECK_FALSE(b.is_subset_of(a));

  const ModelIndicator g = ModelIndicator::forced_only(intercept_mask(5, true));
  CHECK(g.size() == 1);
  CHECK(g.test(0));
  CHECK(g.respects_forced());
  CHECK_FALSE(g.with(0, false).respects_forced());
  CHECK(g.with(3, true).active() == std::vector<std::size_t>{0, 3});
  CHECK(intercept_mask(5, false).none());
}

TEST_CASE("submatrix and subset_rows keep order") {
  Dataset d = small_dataset();
  const MatrixXd s = submatrix(d.X, {1});
  CHECK(s.cols() == 1);
  CHECK(s(1, 0) == -0.5);
  const Dataset r = d.subset_rows({1});
  CHECK(r.n() == 1);
  CHECK(r.y[0] == 2.0);
  CHECK(r.column_names == d.column_names);
}
