#include "timae/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "timae/error.hpp"

namespace timae {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(n));
    offset += n;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    need(4, "tensor values");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    float f = 0;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string str(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct Parsed {
  std::string header;
  std::map<std::string, std::pair<Shape, std::vector<float>>> tensors;
};

Parsed parse_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw FormatError("bad checkpoint magic (expected TIMAE001)");
  if (bytes.size() < sizeof(kCheckpointMagic) + 4) throw FormatError("checkpoint truncated");
  const std::size_t payload = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[payload + i]) << (8 * i);
  if (crc32(bytes.first(payload)) != stored)
    throw FormatError("checkpoint CRC mismatch (file truncated or corrupted)");

  Reader r(bytes.subspan(sizeof(kCheckpointMagic), payload - sizeof(kCheckpointMagic)));
  Parsed p;
  p.header = r.str(r.u64("header length"), "header");
  while (r.remaining() > 0) {
    const std::string name = r.str(r.u64("name length"), "tensor name");
    const std::uint64_t rank = r.u64("rank");
    if (rank > 8) throw FormatError("tensor '" + name + "' has implausible rank");
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
      shape.push_back(r.u64("dims"));
      numel *= shape.back();
    }
    r.need(numel * 4, "tensor values");
    std::vector<float> values(numel);
    for (auto& v : values) v = r.f32();
    p.tensors[name] = {std::move(shape), std::move(values)};
  }
  return p;
}

}  // namespace

std::uint32_t file_crc32(const std::filesystem::path& path) { return crc32(read_file(path)); }

std::uint32_t checkpoint_content_crc32(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < sizeof kCheckpointMagic + 4) throw FormatError(path.string() + " is too short for a checkpoint");
  return crc32(std::span<const std::uint8_t>(bytes.data(), bytes.size() - 4));
}

template <typename T>
std::uint32_t parameters_crc32(const std::vector<NamedTensor<T>>& params) {
  std::vector<std::uint8_t> bytes;
  for (const auto& [name, t] : params) {
    const auto* raw = reinterpret_cast<const std::uint8_t*>(t.values().data());
    bytes.insert(bytes.end(), raw, raw + t.numel() * sizeof(T));
  }
  return crc32(bytes);
}

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const TiMaeModel<T>& model) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  const std::string header = model.config().to_json();
  put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& [name, t] : model.parameters()) {
    put_u64(out, name.size());
    out.insert(out.end(), name.begin(), name.end());
    put_u64(out, t.rank());
    for (auto d : t.shape()) put_u64(out, d);
    for (auto v : t.values()) put_f32(out, static_cast<float>(v));
  }
  put_u32(out, crc32(out));
  return out;
}

template <typename T>
void save_checkpoint(const TiMaeModel<T>& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
void load_checkpoint(TiMaeModel<T>& model, const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  auto parsed = parse_bytes(bytes);
  const ModelConfig stored = ModelConfig::from_json(parsed.header);
  if (!(stored == model.config()))
    throw VersionError("checkpoint config " + stored.to_json() + " does not match model config " +
                       model.config().to_json());
  for (auto& [name, t] : model.parameters()) {
    auto it = parsed.tensors.find(name);
    if (it == parsed.tensors.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (it->second.first != t.shape())
      throw FormatError("tensor '" + name + "' stored as " + shape_str(it->second.first) +
                        ", model expects " + shape_str(t.shape()));
    auto dst = t.data();
    const auto& src = it->second.second;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
    parsed.tensors.erase(it);
  }
  if (!parsed.tensors.empty())
    throw FormatError("checkpoint holds unknown tensor '" + parsed.tensors.begin()->first + "'");
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return ModelConfig::from_json(parse_bytes(bytes).header);
}

TiMaeModel<float> load_model(const std::filesystem::path& path) {
  TiMaeModel<float> model(read_checkpoint_config(path), 0);
  load_checkpoint(model, path);
  return model;
}

template std::uint32_t parameters_crc32(const std::vector<NamedTensor<float>>&);
template std::uint32_t parameters_crc32(const std::vector<NamedTensor<double>>&);
template std::vector<std::uint8_t> serialize_checkpoint(const TiMaeModel<float>&);
template std::vector<std::uint8_t> serialize_checkpoint(const TiMaeModel<double>&);
template void save_checkpoint(const TiMaeModel<float>&, const std::filesystem::path&);
template void save_checkpoint(const TiMaeModel<double>&, const std::filesystem::path&);
template void load_checkpoint(TiMaeModel<float>&, const std::filesystem::path&);
template void load_checkpoint(TiMaeModel<double>&, const std::filesystem::path&);

}  // namespace timae
