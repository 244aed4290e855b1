// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "quept/artifact.hpp"
#include "quept/errors.hpp"

using namespace quept;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("quept_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

ModelArtifact sample_artifact() {
  ModelArtifact a;
  a.set_value("kind", "model");
  a.set_value("note", "a value with spaces survives");
  Rng rng(12);
  a.set_tensor("w1", Tensor::normal({4, 6}, rng));
  a.set_tensor("scalar", Tensor::scalar(0.731f));
  a.set_tensor("b1", Tensor::normal({6}, rng));
  return a;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("artifact round trip is structurally equal and byte-identical") {
  TempDir dir;
  const ModelArtifact a = sample_artifact();
  save_artifact(a, dir.file("a.qpt"));
  const ModelArtifact b = load_artifact(dir.file("a.qpt"));

  CHECK(b.value("kind") == "model");
  CHECK(b.value("note") == "a value with spaces survives");
  REQUIRE(b.tensors.size() == a.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(b.tensors[i].name == a.tensors[i].name);
    CHECK(b.tensors[i].data.same_shape(a.tensors[i].data));
    CHECK(max_abs_diff(b.tensors[i].data, a.tensors[i].data) == 0.0f);
  }

  save_artifact(b, dir.file("b.qpt"));
  CHECK(slurp(dir.file("a.qpt")) == slurp(dir.file("b.qpt")));
}

TEST_CASE("flipping one payload byte trips the checksum") {
  TempDir dir;
  save_artifact(sample_artifact(), dir.file("a.qpt"));
  std::vector<char> bytes = slurp(dir.file("a.qpt"));
  bytes[bytes.size() - 3] ^= 0x40;  // inside the last blob's payload
  spit(dir.file("bad.qpt"), bytes);
  CHECK_THROWS_AS(load_artifact(dir.file("bad.qpt")), ChecksumError);
}

TEST_CASE("unknown version is rejected distinctly") {
  TempDir dir;
  std::ofstream f(dir.file("v9.qpt"), std::ios::binary);
  f << "QUEPT-ARTIFACT v9\nmanifest 0\ntensors 0\npayload 0\n";
  f.close();
  CHECK_THROWS_AS(load_artifact(dir.file("v9.qpt")), VersionError);

  std::ofstream g(dir.file("junk.qpt"), std::ios::binary);
  g << "not an artifact\n";
  g.close();
  CHECK_THROWS_AS(load_artifact(dir.file("junk.qpt")), LoadError);
}

TEST_CASE("truncated payload is rejected distinctly") {
  TempDir dir;
  save_artifact(sample_artifact(), dir.file("a.qpt"));
  std::vector<char> bytes = slurp(dir.file("a.qpt"));
  bytes.resize(bytes.size() - 10);
  spit(dir.file("cut.qpt"), bytes);
  CHECK_THROWS_AS(load_artifact(dir.file("cut.qpt")), TruncatedError);
}

TEST_CASE("trailing garbage is rejected") {
  TempDir dir;
  save_artifact(sample_artifact(), dir.file("a.qpt"));
  std::vector<char> bytes = slurp(dir.file("a.qpt"));
  bytes.push_back('x');
  spit(dir.file("extra.qpt"), bytes);
  CHECK_THROWS_AS(load_artifact(dir.file("extra.qpt")), LoadError);
}

TEST_CASE("missing keys and tensors raise load errors") {
  const ModelArtifact a = sample_artifact();
  CHECK_THROWS_AS(a.value("absent"), LoadError);
  CHECK_THROWS_AS(a.tensor("absent"), LoadError);
  CHECK(a.has_value("kind"));
  CHECK_FALSE(a.has_value("absent"));
  CHECK(a.has_tensor("w1"));
  CHECK_FALSE(a.has_tensor("absent"));
}

TEST_CASE("float formatting round-trips shortest decimal forms") {
  for (double v : {0.0, 1.0, -1.5, 0.1, 1e-8, 3.14159265358979, -2.25e10}) {
    CHECK(parse_float(format_float(v)) == v);
  }
  CHECK_THROWS_AS(parse_float("abc"), LoadError);
}

TEST_CASE("crc32 matches the standard test vector") {
  const char* s = "123456789";
  CHECK(crc32(s, 9) == 0xCBF43926u);
}
