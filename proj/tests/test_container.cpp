#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "minima/container.hpp"
#include "minima/errors.hpp"
#include "minima/io.hpp"
#include "test_util.hpp"

using namespace minima;
using minima::testing::fnv1a;

namespace {

// Values exactly representable in the stored dtype.
Tensor random_payload(const Shape& shape, DType dtype, Rng& rng) {
  std::vector<double> v(shape_product(shape));
  for (double& x : v) {
    x = rng.normal() * 10.0;
    if (dtype == DType::F32) x = static_cast<float>(x);
  }
  return Tensor(shape, std::move(v));
}

TensorFile random_file(Rng& rng) {
  TensorFile f;
  const std::size_t n = 1 + rng.below(6);
  for (std::size_t i = 0; i < n; ++i) {
    Shape s(rng.below(4));
    for (auto& d : s) d = 1 + rng.below(9);
    const DType dt = rng.below(2) ? DType::F32 : DType::F64;
    f.entries.push_back({"t" + std::to_string(i) + "/w", dt, random_payload(s, dt, rng)});
  }
  if (rng.below(2)) f.metadata = {{"note", "random"}, {"n", n}};
  return f;
}

std::uint64_t read_u64(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

TEST_CASE("round trip of a 3-matrix model container") {
  Rng rng(1);
  ModelContainer m(2, "unit test");
  m.add({"a", random_payload({3, 4}, DType::F64, rng), 0, SubmoduleKind::AttentionProj, DType::F64});
  m.add({"b", random_payload({5, 2}, DType::F32, rng), 1, SubmoduleKind::Ffn, DType::F32});
  m.add({"c", random_payload({1, 7}, DType::F64, rng), 1, SubmoduleKind::Embedding, DType::F64});
  const auto path = std::filesystem::temp_directory_path() / "minima_test_rt.mnma";
  write_container(m, path);
  const ModelContainer back = read_container(path);
  REQUIRE(back.entries().size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.entries()[i].name == m.entries()[i].name);
    CHECK(back.entries()[i].matrix == m.entries()[i].matrix);
    CHECK(back.entries()[i].kind == m.entries()[i].kind);
    CHECK(back.entries()[i].layer_index == m.entries()[i].layer_index);
    CHECK(back.entries()[i].dtype == m.entries()[i].dtype);
  }
  CHECK(back.total_layers() == 2);
  CHECK(back.provenance() == "unit test");
  std::filesystem::remove(path);
}

TEST_CASE("layout: header, alignment and strictly increasing offsets") {
  Rng rng(2);
  const TensorFile f = random_file(rng);
  const auto bytes = encode_tensor_file(f);
  CHECK(std::memcmp(bytes.data(), "MNMA", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(read_u64(bytes, 8) == f.entries.size());
  std::size_t pos = 32;
  std::uint64_t prev = 0;
  for (const auto& e : f.entries) {
    const std::size_t len = bytes[pos] | (bytes[pos + 1] << 8);
    CHECK(len == e.name.size());
    pos += 2 + len;
    CHECK(bytes[pos] == static_cast<std::uint8_t>(e.dtype));
    CHECK(bytes[pos + 1] == e.tensor.rank());
    pos += 2 + 8 * e.tensor.rank();
    const std::uint64_t off = read_u64(bytes, pos);
    pos += 8;
    CHECK(off % 64 == 0);
    CHECK(off > prev);
    prev = off;
  }
}

TEST_CASE("100 random containers round trip byte-identically") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const TensorFile f = random_file(rng);
    const auto bytes = encode_tensor_file(f);
    const TensorFile back = decode_tensor_file(bytes);
    REQUIRE(back.entries.size() == f.entries.size());
    for (std::size_t i = 0; i < f.entries.size(); ++i) {
      CHECK(back.entries[i].tensor == f.entries[i].tensor);
      CHECK(back.entries[i].dtype == f.entries[i].dtype);
    }
    CHECK(back.metadata == f.metadata);
    CHECK(encode_tensor_file(back) == bytes);
  }
}

TEST_CASE("10 MB container round trip is hash-identical") {
  Rng rng(4);
  TensorFile f;
  f.entries.push_back({"big", DType::F64, random_payload({1024, 1280}, DType::F64, rng)});
  const auto path = std::filesystem::temp_directory_path() / "minima_test_big.mnma";
  write_tensor_file(f, path);
  const auto written = read_file(path);
  CHECK(written.size() >= 10 * 1024 * 1024);
  write_tensor_file(read_tensor_file(path), path);
  CHECK(fnv1a(read_file(path)) == fnv1a(written));
  std::filesystem::remove(path);
}

TEST_CASE("malformed containers") {
  Rng rng(5);
  TensorFile f;
  f.entries.push_back({"w", DType::F64, random_payload({4, 4}, DType::F64, rng)});
  auto bytes = encode_tensor_file(f);

  auto flipped = bytes;
  flipped[0] ^= 0xFF;
  CHECK_THROWS_AS(decode_tensor_file(flipped), FormatError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 8);
  CHECK_THROWS_AS(decode_tensor_file(truncated), TruncationError);
  CHECK_THROWS_AS(decode_tensor_file(std::span(bytes).first(20)), TruncationError);

  auto bad_version = bytes;
  bad_version[4] = 2;
  CHECK_THROWS_AS(decode_tensor_file(bad_version), FormatError);

  f.entries.push_back(f.entries[0]);
  CHECK_THROWS_AS(encode_tensor_file(f), DuplicateEntryError);

  ModelContainer m(1, "");
  m.add({"w", random_payload({2, 2}, DType::F64, rng), 0, SubmoduleKind::Other, DType::F64});
  CHECK_THROWS_AS(m.add({"w", random_payload({2, 2}, DType::F64, rng), 0, SubmoduleKind::Other,
                         DType::F64}),
                  DuplicateEntryError);
}
