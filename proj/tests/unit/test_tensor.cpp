#include <doctest.h>

#include <cstring>
#include <limits>

#include "helpers.hpp"
#include "ttaseg/error.hpp"
#include "ttaseg/ntf.hpp"
#include "ttaseg/parallel.hpp"

using namespace ttaseg;

TEST_CASE("tensor construction and access") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  CHECK(t.sum() == doctest::Approx(9.0));
  t.at({1, 2}) = 4.0;
  CHECK(t[5] == 4.0);
  CHECK_THROWS_AS(t.at({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK(Tensor().empty());
  CHECK(shape_to_string({8, 1, 3, 3}) == "8x1x3x3");
}

TEST_CASE("reshape keeps data and rejects count changes") {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped({3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(r[4] == 5.0);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("reductions") {
  const Tensor t({4}, std::vector<double>{3, -1, 2, 0});
  CHECK(t.min() == -1.0);
  CHECK(t.max() == 3.0);
  CHECK(t.mean() == 1.0);
  Tensor bad({2}, std::vector<double>{1.0, std::numeric_limits<double>::infinity()});
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("NTF1 layout is magic, rank, dims, payload") {
  const Tensor t({2, 1}, std::vector<double>{1.0, -2.5});
  const std::string bytes = encode_ntf(t);
  REQUIRE(bytes.size() == 4 + 4 + 2 * 8 + 2 * 8);
  CHECK(bytes.substr(0, 4) == "NTF1");
  std::uint32_t rank = 0;
  std::memcpy(&rank, bytes.data() + 4, 4);
  CHECK(rank == 2);
  std::uint64_t d0 = 0;
  std::memcpy(&d0, bytes.data() + 8, 8);
  CHECK(d0 == 2);
  double v = 0;
  std::memcpy(&v, bytes.data() + 24 + 8, 8);
  CHECK(v == -2.5);
  CHECK(ntf_encoded_size(t) == bytes.size());
}

TEST_CASE("NTF1 round trip is bit exact") {
  Tensor t = test::random_tensor({3, 4, 5}, 9);
  t[0] = -0.0;
  t[1] = std::numeric_limits<double>::denorm_min();
  t[2] = std::numeric_limits<double>::max();
  const std::string bytes = encode_ntf(t);
  std::uint64_t pos = 0;
  const Tensor back = decode_ntf(bytes, pos);
  CHECK(pos == bytes.size());
  REQUIRE(back.shape() == t.shape());
  CHECK(std::memcmp(back.raw(), t.raw(), t.size() * sizeof(double)) == 0);

  const auto dir = test::scratch_dir("ntf");
  save_tensor(dir / "t.ntf", t);
  CHECK(load_tensor(dir / "t.ntf") == t);
}

TEST_CASE("NTF1 decoding errors carry offsets") {
  const std::string bytes = encode_ntf(Tensor({2, 2}, 1.0));
  std::uint64_t pos = 0;
  try {
    decode_ntf(std::string_view(bytes).substr(0, bytes.size() - 3), pos);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == bytes.size() - 3);  // where the input runs out
  }
  std::string bad = bytes;
  bad[0] = 'X';
  pos = 0;
  try {
    decode_ntf(bad, pos);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  const auto dir = test::scratch_dir("ntf_trailing");
  write_file_bytes(dir / "x.ntf", bytes + "junk");
  CHECK_THROWS_AS(load_tensor(dir / "x.ntf"), FormatError);
}

TEST_CASE("rank-0 NTF1 block decodes to an empty tensor") {
  const std::string bytes = encode_ntf(Tensor());
  CHECK(bytes.size() == 8);
  std::uint64_t pos = 0;
  CHECK(decode_ntf(bytes, pos).empty());
}

TEST_CASE("parallel_for covers every index once and rethrows") {
  test::ScopedEnv env("TTASEG_THREADS", "3");
  CHECK(thread_count() == 3);
  std::vector<int> hits(101, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 7) throw ArgumentError("boom");
                  }),
                  ArgumentError);
}
