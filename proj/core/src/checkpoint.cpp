#include "safe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace safe {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'F', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) {
      throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::string group_of(const std::string& name) {
  // Groups are "<name>" or "<name>.<branch>"; layers start with conv/deconv.
  const auto layer = name.find(".conv");
  const auto delayer = name.find(".deconv");
  const auto cut = std::min(layer, delayer);
  if (cut == std::string::npos) throw std::runtime_error("malformed parameter name '" + name + "'");
  return name.substr(0, cut);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const SafeNetwork& net) {
  const auto& c = net.config();
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  for (auto v : {c.input_channels, c.height, c.width, c.base_width, c.common_depth, c.branch_depth})
    w.u32(static_cast<std::uint32_t>(v));
  w.u32(static_cast<std::uint32_t>(c.branches()));
  for (auto d : c.latent_channels) w.u32(static_cast<std::uint32_t>(d));
  w.u32(net.info().strategy);
  w.u32(net.info().trained_levels);
  w.u64(net.info().split_seed);

  const auto params = net.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.bytes(p->name.data(), p->name.size());
    w.u8(p->trainable ? 1 : 0);
    const auto& shape = p->tensor.shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p->tensor.data()) w.f32(v);
  }
  return w.take();
}

SafeNetwork deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw std::runtime_error("not a SAFE checkpoint (bad magic at byte 0)");
  }
  if (const auto version = r.u32(); version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  SafeConfig c;
  c.input_channels = r.u32();
  c.height = r.u32();
  c.width = r.u32();
  c.base_width = r.u32();
  c.common_depth = r.u32();
  c.branch_depth = r.u32();
  const auto branches = r.u32();
  if (branches > 4096) throw std::runtime_error("implausible branch count in checkpoint");
  c.latent_channels.resize(branches);
  for (auto& d : c.latent_channels) d = r.u32();

  Rng rng(0);
  SafeNetwork net = SafeNetwork::build(c, rng);
  net.info().strategy = r.u32();
  net.info().trained_levels = r.u32();
  net.info().split_seed = r.u64();

  const auto count = r.u32();
  std::vector<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto offset = r.pos();
    const auto name = r.str(r.u32());
    const bool trainable = r.u8() != 0;
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();

    const auto group = group_of(name);
    if (!net.has_group(group)) {
      const auto base_len = group.size() >= 2 ? group.size() - 2 : 0;
      if (group.ends_with("_2") && net.has_group(group.substr(0, base_len))) {
        net.add_group_clone(group.substr(0, base_len), group);
      } else {
        throw std::runtime_error("unknown parameter group '" + group + "' at byte " + std::to_string(offset));
      }
    }
    Parameter* p = net.find_parameter(name);
    if (!p) throw std::runtime_error("unknown parameter '" + name + "' at byte " + std::to_string(offset));
    if (p->tensor.shape() != shape) {
      throw std::runtime_error("parameter '" + name + "' has shape " + shape_string(shape) + ", network expects " +
                               shape_string(p->tensor.shape()));
    }
    for (auto& v : p->tensor.mutable_data()) v = r.f32();
    p->set_trainable(trainable);
    seen.push_back(name);
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint at byte " + std::to_string(r.pos()));
  const auto params = net.parameters();
  if (params.size() != seen.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(seen.size()) + " parameters, network has " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != seen[i]) {
      throw std::runtime_error("parameter order mismatch: expected '" + params[i]->name + "', found '" + seen[i] + "'");
    }
  }
  return net;
}

void save_checkpoint(const SafeNetwork& net, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

SafeNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace safe
