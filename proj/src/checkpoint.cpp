#include "srgan/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace srgan::nn {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename U>
  void put(U v) {
    unsigned char raw[sizeof(U)];
    std::memcpy(raw, &v, sizeof(U));
    out_.insert(out_.end(), raw, raw + sizeof(U));
  }
  void bytes(const void* p, std::size_t n) {
    auto* c = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  template <typename U>
  U get(const char* what) {
    U v;
    need(sizeof(U), what);
    std::memcpy(&v, p_ + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    need(n, what);
    const std::uint8_t* r = p_ + pos_;
    pos_ += n;
    return r;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    require(n <= n_ - pos_, ErrorCode::truncated, std::string("checkpoint truncated while reading ") + what);
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_archive(const Archive& archive) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string header = archive.header.dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(header.size()));
  w.bytes(header.data(), header.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(archive.tensors.size()));
  for (const auto& t : archive.tensors) {
    require(t.name.size() <= 0xFFFF, ErrorCode::invalid_argument, "tensor name too long: " + t.name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.value.rank()));
    for (auto d : t.value.shape()) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
    auto data = t.value.data();
    w.bytes(data.data(), data.size() * sizeof(float));
  }
  auto& buf = w.buffer();
  const std::uint32_t crc = crc32_of(buf.data(), buf.size());
  w.put<std::uint32_t>(crc);
  return std::move(w.buffer());
}

Archive decode_archive(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 4, ErrorCode::truncated, "checkpoint truncated while reading magic");
  require(std::memcmp(bytes.data(), kCheckpointMagic, 4) == 0, ErrorCode::bad_magic, "bad magic: not an SRGB checkpoint");
  Reader r(bytes.data(), bytes.size());
  r.take(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  require(version == kCheckpointVersion, ErrorCode::unknown_version,
          "unknown checkpoint version " + std::to_string(version));
  const auto header_len = r.get<std::uint32_t>("header length");
  const auto* header_bytes = r.take(header_len, "header");
  Archive a;
  try {
    a.header = json::parse(header_bytes, header_bytes + header_len);
  } catch (const json::exception& e) {
    fail(ErrorCode::unsupported_format, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    const auto* name_bytes = r.take(name_len, "tensor name");
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    require(seen.insert(name).second, ErrorCode::duplicate_tensor, "duplicate tensor name '" + name + "' in checkpoint");
    const auto ndim = r.get<std::uint8_t>("tensor rank");
    Shape shape;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const auto dim = r.get<std::uint64_t>("tensor dims");
      require(dim >= 1 && dim < (std::uint64_t{1} << 40), ErrorCode::unsupported_format,
              "tensor '" + name + "' has invalid dimension " + std::to_string(dim));
      shape.push_back(static_cast<std::int64_t>(dim));
    }
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    require(n <= bytes.size() / sizeof(float), ErrorCode::truncated, "checkpoint truncated while reading tensor data");
    const auto* raw = r.take(n * sizeof(float), "tensor data");
    std::vector<float> values(n);
    std::memcpy(values.data(), raw, n * sizeof(float));
    a.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values)), true});
  }
  const std::size_t payload = r.pos();
  const auto stored = r.get<std::uint32_t>("crc32");
  require(stored == crc32_of(bytes.data(), payload), ErrorCode::crc_mismatch, "checkpoint CRC32 mismatch");
  require(r.pos() == bytes.size(), ErrorCode::unsupported_format, "trailing bytes after checkpoint CRC");
  return a;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorCode::io, "read error on '" + path.string() + "'");
  return bytes;
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  const fs::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      fail(ErrorCode::io, "write failed for '" + path.string() + "' (disk full?)");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::io, "cannot move checkpoint into place at '" + path.string() + "'");
  }
}

Archive network_archive(const Network<float>& net, json extra_header) {
  Archive a;
  a.header = std::move(extra_header);
  a.header["spec"] = net.spec().to_json();
  for (const auto& t : net.tensors()) a.tensors.push_back(t);
  return a;
}

void save_checkpoint(const Network<float>& net, const fs::path& path, json extra_header) {
  write_file_atomic(path, encode_archive(network_archive(net, std::move(extra_header))));
}

Network<float> network_from_archive(const Archive& archive) {
  require(archive.header.contains("spec"), ErrorCode::unsupported_format, "checkpoint header has no network spec");
  const NetworkSpec spec = NetworkSpec::from_json(archive.header.at("spec"));
  Network<float> net = build_network(spec, 0);
  std::set<std::string> loaded;
  for (const auto& t : archive.tensors) {
    if (t.name.find('/') != std::string::npos) continue;
    require(net.has_tensor(t.name), ErrorCode::spec_mismatch, "spec mismatch: unexpected tensor '" + t.name + "'");
    Tensor& dst = net.tensor(t.name);
    require(dst.shape() == t.value.shape(), ErrorCode::spec_mismatch,
            "spec mismatch: tensor '" + t.name + "' has shape " + shape_str(t.value.shape()) + ", expected " +
                shape_str(dst.shape()));
    dst = t.value;
    loaded.insert(t.name);
  }
  for (const auto& t : net.tensors())
    require(loaded.count(t.name) != 0, ErrorCode::missing_tensor, "checkpoint is missing tensor '" + t.name + "'");
  return net;
}

Network<float> load_checkpoint(const fs::path& path) { return network_from_archive(decode_archive(read_file_bytes(path))); }

Network<float> load_checkpoint(const fs::path& path, const NetworkSpec& expected) {
  Archive a = decode_archive(read_file_bytes(path));
  require(a.header.contains("spec"), ErrorCode::unsupported_format, "checkpoint header has no network spec");
  require(NetworkSpec::from_json(a.header.at("spec")) == expected, ErrorCode::spec_mismatch,
          "spec mismatch: checkpoint was saved for " + a.header.at("spec").dump() + ", expected " +
              expected.to_json().dump());
  return network_from_archive(a);
}

}  // namespace srgan::nn
