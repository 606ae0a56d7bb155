#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tb/diffnet.hpp"

// TBNET1 layout, all integers and reals little-endian:
//   6 bytes  "TBNET1"
//   u32      layer count
//   per layer:
//     u8       kind (1 dense, 2 conv2d, 3 avgpool2, 4 elu)
//     u32 x 3  input extents  (C, H, W)
//     u32 x 3  output extents (C, H, W)
//     u32      kernel size (conv2d only, 0 otherwise)
//     f64 ...  weight elements row-major, then bias elements (parameterised kinds only)

namespace tb::diffnet {

namespace {

constexpr char kMagic[6] = {'T', 'B', 'N', 'E', 'T', '1'};

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}
  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes.size() - pos < n) throw NetFormatError("truncated TBNET1 data at byte " + std::to_string(pos));
    auto s = bytes.subspan(pos, n);
    pos += n;
    return s;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  double f64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos == bytes.size(); }

  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

FeatureShape read_shape(Reader& r) {
  FeatureShape f;
  f.channels = r.u32();
  f.height = r.u32();
  f.width = r.u32();
  return f;
}

void write_shape(Writer& w, const FeatureShape& f) {
  w.u32(static_cast<std::uint32_t>(f.channels));
  w.u32(static_cast<std::uint32_t>(f.height));
  w.u32(static_cast<std::uint32_t>(f.width));
}

}  // namespace

std::vector<std::uint8_t> serialize(const Network& net) {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    write_shape(w, l.input);
    write_shape(w, l.output);
    w.u32(static_cast<std::uint32_t>(l.kernel));
    if (l.has_params()) {
      for (double v : l.weight.raw()) w.f64(v);
      for (double v : l.bias.raw()) w.f64(v);
    }
  }
  return std::move(w.out);
}

Network deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
    throw NetFormatError("not a TBNET1 file (bad magic)");
  const std::uint32_t count = r.u32();
  if (count == 0) throw NetFormatError("TBNET1 file declares zero layers");
  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = static_cast<LayerKind>(r.u8());
    const FeatureShape in = read_shape(r);
    const FeatureShape out = read_shape(r);
    const std::uint32_t kernel = r.u32();
    Layer l;
    try {
      switch (kind) {
        case LayerKind::Dense: l = dense(in, out.channels); break;
        case LayerKind::Conv2d: l = conv2d(in, out.channels, kernel); break;
        case LayerKind::AvgPool2: l = avg_pool2(in); break;
        case LayerKind::Elu: l = elu(in); break;
        default: throw NetFormatError("layer " + std::to_string(i) + ": unknown kind tag");
      }
    } catch (const ContractError& e) {
      throw NetFormatError("layer " + std::to_string(i) + ": " + e.what());
    }
    if (l.output != out)
      throw NetFormatError("layer " + std::to_string(i) + ": output extents inconsistent");
    if (l.has_params()) {
      for (double& v : l.weight.raw()) v = r.f64();
      for (double& v : l.bias.raw()) v = r.f64();
    }
    layers.push_back(std::move(l));
  }
  if (!r.done()) throw NetFormatError("trailing bytes after TBNET1 payload");
  try {
    return Network(std::move(layers));
  } catch (const ContractError& e) {
    throw NetFormatError(e.what());
  }
}

void save_network(const Network& net, const std::filesystem::path& path) {
  const auto bytes = serialize(net);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const NetFormatError& e) {
    throw NetFormatError(path.string() + ": " + e.what());
  }
}

}  // namespace tb::diffnet
