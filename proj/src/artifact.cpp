// SPDX-License-Identifier: Apache-2.0
#include "quept/artifact.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "quept/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "artifact payload is written as native little-endian float32");

namespace quept {

namespace {

constexpr const char* kMagic = "QUEPT-ARTIFACT";
constexpr int kVersion = 1;

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

std::string read_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw TruncatedError(std::string("artifact ends before ") + what);
  return line;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::size_t parse_size(const std::string& s, const char* what) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw LoadError(std::string("artifact: bad ") + what + " field '" + s + "'");
  }
  return v;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len) {
  static const auto table = make_crc_table();
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

std::string format_float(double v) {
  std::array<char, 64> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_float(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw LoadError("artifact: bad float value '" + s + "'");
  }
  return v;
}

void ModelArtifact::set_value(const std::string& key, const std::string& value) {
  for (auto& kv : manifest) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  manifest.emplace_back(key, value);
}

const std::string& ModelArtifact::value(const std::string& key) const {
  for (const auto& kv : manifest) {
    if (kv.first == key) return kv.second;
  }
  throw LoadError("artifact: missing manifest key '" + key + "'");
}

bool ModelArtifact::has_value(const std::string& key) const {
  for (const auto& kv : manifest) {
    if (kv.first == key) return true;
  }
  return false;
}

void ModelArtifact::set_tensor(const std::string& name, Tensor t) {
  for (Blob& b : tensors) {
    if (b.name == name) {
      b.data = std::move(t);
      return;
    }
  }
  tensors.push_back(Blob{name, std::move(t)});
}

const Tensor& ModelArtifact::tensor(const std::string& name) const {
  for (const Blob& b : tensors) {
    if (b.name == name) return b.data;
  }
  throw LoadError("artifact: missing tensor '" + name + "'");
}

bool ModelArtifact::has_tensor(const std::string& name) const {
  for (const Blob& b : tensors) {
    if (b.name == name) return true;
  }
  return false;
}

void save_artifact(const ModelArtifact& artifact, const std::string& path) {
  std::ostringstream out;
  out << kMagic << " v" << kVersion << '\n';
  out << "manifest " << artifact.manifest.size() << '\n';
  for (const auto& [k, v] : artifact.manifest) out << k << ' ' << v << '\n';

  out << "tensors " << artifact.tensors.size() << '\n';
  std::size_t offset = 0;
  for (const ModelArtifact::Blob& b : artifact.tensors) {
    const std::size_t bytes = b.data.numel() * sizeof(float);
    out << b.name << ' ' << b.data.rank();
    for (std::size_t dim : b.data.shape()) out << ' ' << dim;
    char crcbuf[16];
    std::snprintf(crcbuf, sizeof(crcbuf), "%08x", crc32(b.data.data(), bytes));
    out << ' ' << offset << ' ' << bytes << ' ' << crcbuf << '\n';
    offset += bytes;
  }
  out << "payload " << offset << '\n';
  for (const ModelArtifact::Blob& b : artifact.tensors) {
    out.write(reinterpret_cast<const char*>(b.data.data()),
              static_cast<std::streamsize>(b.data.numel() * sizeof(float)));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArgumentError("cannot open for writing: " + path);
  const std::string blob = out.str();
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw ArgumentError("write failed: " + path);
}

ModelArtifact load_artifact(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open for reading: " + path);

  const std::string header = read_line(f, "header");
  const std::string expected = std::string(kMagic) + " v" + std::to_string(kVersion);
  if (header != expected) {
    if (header.rfind(kMagic, 0) == 0) {
      throw VersionError("artifact: unsupported version '" + header + "', expected '" + expected + "'");
    }
    throw LoadError("artifact: bad header '" + header + "'");
  }

  ModelArtifact artifact;
  {
    const auto fields = split_ws(read_line(f, "manifest header"));
    if (fields.size() != 2 || fields[0] != "manifest") throw LoadError("artifact: bad manifest header");
    const std::size_t count = parse_size(fields[1], "manifest count");
    for (std::size_t i = 0; i < count; ++i) {
      const std::string line = read_line(f, "manifest entry");
      const std::size_t sp = line.find(' ');
      if (sp == std::string::npos) throw LoadError("artifact: bad manifest entry '" + line + "'");
      artifact.manifest.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
  }

  struct IndexEntry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset, bytes;
    std::uint32_t crc;
  };
  std::vector<IndexEntry> index;
  {
    const auto fields = split_ws(read_line(f, "tensor index header"));
    if (fields.size() != 2 || fields[0] != "tensors") throw LoadError("artifact: bad tensor index header");
    const std::size_t count = parse_size(fields[1], "tensor count");
    for (std::size_t i = 0; i < count; ++i) {
      const auto tok = split_ws(read_line(f, "tensor index entry"));
      if (tok.size() < 5) throw LoadError("artifact: bad tensor index entry");
      IndexEntry e;
      e.name = tok[0];
      const std::size_t rank = parse_size(tok[1], "tensor rank");
      if (tok.size() != 5 + rank) throw LoadError("artifact: bad tensor index entry for '" + e.name + "'");
      for (std::size_t r = 0; r < rank; ++r) e.shape.push_back(parse_size(tok[2 + r], "tensor dim"));
      e.offset = parse_size(tok[2 + rank], "tensor offset");
      e.bytes = parse_size(tok[3 + rank], "tensor byte count");
      e.crc = static_cast<std::uint32_t>(std::stoul(tok[4 + rank], nullptr, 16));
      index.push_back(std::move(e));
    }
  }

  const auto payload_fields = split_ws(read_line(f, "payload header"));
  if (payload_fields.size() != 2 || payload_fields[0] != "payload") {
    throw LoadError("artifact: bad payload header");
  }
  const std::size_t payload_bytes = parse_size(payload_fields[1], "payload size");
  std::vector<char> payload(payload_bytes);
  f.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
  if (static_cast<std::size_t>(f.gcount()) != payload_bytes) {
    throw TruncatedError("artifact: payload truncated, expected " + std::to_string(payload_bytes) +
                         " bytes, got " + std::to_string(f.gcount()));
  }
  if (f.get() != std::ifstream::traits_type::eof()) {
    throw LoadError("artifact: trailing bytes after payload");
  }

  std::size_t expected_offset = 0;
  for (const IndexEntry& e : index) {
    if (e.offset != expected_offset) throw LoadError("artifact: non-contiguous blob '" + e.name + "'");
    if (e.offset + e.bytes > payload_bytes) {
      throw TruncatedError("artifact: blob '" + e.name + "' extends past payload");
    }
    std::size_t numel = 1;
    for (std::size_t dim : e.shape) numel *= dim;
    if (numel * sizeof(float) != e.bytes) {
      throw LoadError("artifact: blob '" + e.name + "' shape does not match byte count");
    }
    if (crc32(payload.data() + e.offset, e.bytes) != e.crc) {
      throw ChecksumError("artifact: checksum mismatch in blob '" + e.name + "'");
    }
    std::vector<float> data(numel);
    std::memcpy(data.data(), payload.data() + e.offset, e.bytes);
    artifact.tensors.push_back(ModelArtifact::Blob{e.name, Tensor(e.shape, std::move(data))});
    expected_offset = e.offset + e.bytes;
  }
  if (expected_offset != payload_bytes) throw LoadError("artifact: payload has unindexed bytes");
  return artifact;
}

}  // namespace quept
