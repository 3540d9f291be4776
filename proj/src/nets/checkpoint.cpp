#include "fairvoice/nets/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/common/hash.hpp"
#include "fairvoice/nets/backbones.hpp"

namespace fairvoice::nets {
namespace {

constexpr char kMagic[4] = {'F', 'V', 'C', 'K'};
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::byte>& bytes() { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<std::byte>& bytes, std::size_t end, const std::string& origin)
      : bytes_(bytes), end_(end), origin_(origin) {}

  const std::byte* take(std::size_t n) {
    if (n > end_ - pos_) fail("unexpected end of data");
    const std::byte* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T le() {
    const std::byte* p = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(std::to_integer<std::uint64_t>(p[i]) << (8 * i));
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  bool done() const { return pos_ == end_; }
  [[noreturn]] void fail(const std::string& why) const {
    throw CheckpointError("corrupt checkpoint " + origin_ + ": " + why);
  }

 private:
  const std::vector<std::byte>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string origin_;
};

struct Contents {
  BackboneKind kind;
  std::uint64_t seed;
  std::map<std::string, Tensor> entries;
};

Contents read_contents(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<char> chars((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(chars.size());
  std::memcpy(bytes.data(), chars.data(), chars.size());
  const std::string origin = path.string();
  if (bytes.size() < 4 + 4 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(origin + " is not a checkpoint file");
  }
  const std::size_t body = bytes.size() - 8;
  Fnv1a h;
  h.update(std::span(bytes.data(), body));
  Reader tail(bytes, bytes.size(), origin);
  tail.take(body);
  if (tail.le<std::uint64_t>() != h.digest()) throw CheckpointError("corrupt checkpoint " + origin + ": checksum mismatch");

  Reader r(bytes, body, origin);
  r.take(4);
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint " + origin + " has format version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto kind = r.le<std::uint32_t>();
  if (kind > static_cast<std::uint32_t>(BackboneKind::Dense161)) {
    throw CheckpointError("checkpoint " + origin + " has unknown backbone kind tag " + std::to_string(kind));
  }
  Contents c{static_cast<BackboneKind>(kind), r.le<std::uint64_t>(), {}};
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = r.le<std::uint32_t>();
    const std::byte* name = r.take(len);
    std::string key(reinterpret_cast<const char*>(name), len);
    const auto rank = r.le<std::uint32_t>();
    if (rank > kMaxRank) r.fail("entry " + key + " has rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = r.le<std::uint64_t>();
      if (d != 0 && total > (body / 8) / d) r.fail("entry " + key + " is larger than the file");
      total *= d;
    }
    Tensor t(shape);
    for (double& v : t.values()) v = r.f64();
    if (!c.entries.emplace(key, std::move(t)).second) r.fail("duplicate entry " + key);
  }
  if (!r.done()) r.fail("trailing bytes");
  return c;
}

void assign(Parameter& p, const std::string& name, const std::map<std::string, Tensor>& entries,
            const std::string& origin) {
  auto it = entries.find(name);
  if (it == entries.end()) throw CheckpointError("checkpoint " + origin + " lacks entry " + name);
  if (it->second.shape() != p.value.shape()) {
    throw CheckpointError("checkpoint " + origin + " entry " + name + " has shape " + shape_string(it->second.shape()) +
                          ", expected " + shape_string(p.value.shape()));
  }
  p.value = it->second;
}

}  // namespace

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  const auto params = model.parameters();
  Writer w;
  w.raw(kMagic, 4);
  w.le(kCheckpointVersion);
  w.le(static_cast<std::uint32_t>(model.kind()));
  w.le(model.seed());
  w.le(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    w.le(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.le(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) w.le(static_cast<std::uint64_t>(d));
    for (double v : p->value.values()) w.f64(v);
  }
  Fnv1a h;
  h.update(w.bytes());
  w.le(h.digest());
  write_file_atomic(path, w.bytes());
}

ModelState load_checkpoint(const std::filesystem::path& path, std::optional<BackboneKind> expected) {
  const Contents c = read_contents(path);
  if (expected && *expected != c.kind) {
    throw CheckpointError("checkpoint " + path.string() + " holds a " + to_string(c.kind) + " model, expected " +
                          to_string(*expected));
  }
  ModelState model(c.kind, c.seed, build_backbone(c.kind));
  auto params = model.parameters();
  if (params.size() != c.entries.size()) {
    throw CheckpointError("checkpoint " + path.string() + " has " + std::to_string(c.entries.size()) +
                          " entries, the model has " + std::to_string(params.size()));
  }
  for (auto& [name, p] : params) assign(*p, name, c.entries, path.string());
  return model;
}

void load_backbone_weights(ModelState& model, const std::filesystem::path& path) {
  const Contents c = read_contents(path);
  if (c.kind != model.kind()) {
    throw CheckpointError("weights in " + path.string() + " are for " + to_string(c.kind) + ", model is " +
                          to_string(model.kind()));
  }
  for (auto& [name, p] : model.parameters()) {
    if (name.rfind("backbone.", 0) == 0) assign(*p, name, c.entries, path.string());
  }
}

}  // namespace fairvoice::nets
