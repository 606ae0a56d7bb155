#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tb/data.hpp"

namespace tb::data {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IdxError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at,
                   const std::filesystem::path& path) {
  if (b.size() < at + 4) throw IdxTruncatedError(path.string() + ": truncated header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IdxError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IdxError("write failed: " + path.string());
}

char hex_digit(unsigned v) { return "0123456789abcdef"[v & 0xf]; }

std::string hex32(std::uint32_t v) {
  std::string s = "0x";
  for (int i = 7; i >= 0; --i) s.push_back(hex_digit(v >> (4 * i)));
  return s;
}

}  // namespace

Tensor read_idx_images(const std::filesystem::path& path) {
  const auto b = read_file(path);
  const std::uint32_t magic = be32(b, 0, path);
  if (magic != kIdxImagesMagic)
    throw IdxMagicError(path.string() + ": expected image magic " + hex32(kIdxImagesMagic) +
                        ", found " + hex32(magic));
  const std::size_t n = be32(b, 4, path), h = be32(b, 8, path), w = be32(b, 12, path);
  if (n == 0 || h == 0 || w == 0) throw IdxError(path.string() + ": zero extent");
  const std::size_t payload = n * h * w;
  if (b.size() < 16 + payload)
    throw IdxTruncatedError(path.string() + ": expected " + std::to_string(payload) +
                            " pixel bytes, found " + std::to_string(b.size() - 16));
  std::vector<double> px(payload);
  for (std::size_t i = 0; i < payload; ++i) px[i] = static_cast<double>(b[16 + i]) / 255.0;
  return Tensor({n, 1, h, w}, std::move(px));
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  const auto b = read_file(path);
  const std::uint32_t magic = be32(b, 0, path);
  if (magic != kIdxLabelsMagic)
    throw IdxMagicError(path.string() + ": expected label magic " + hex32(kIdxLabelsMagic) +
                        ", found " + hex32(magic));
  const std::size_t n = be32(b, 4, path);
  if (b.size() < 8 + n)
    throw IdxTruncatedError(path.string() + ": expected " + std::to_string(n) +
                            " label bytes, found " + std::to_string(b.size() - 8));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = b[8 + i];
  return labels;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, std::size_t class_count) {
  Tensor images = read_idx_images(images_path);
  std::vector<int> labels = read_idx_labels(labels_path);
  if (labels.size() != images.dim(0))
    throw IdxCountMismatchError(std::to_string(images.dim(0)) + " images in " +
                                images_path.string() + " but " + std::to_string(labels.size()) +
                                " labels in " + labels_path.string());
  if (class_count == 0)
    class_count = labels.empty() ? 1 : static_cast<std::size_t>(
                                           *std::max_element(labels.begin(), labels.end()) + 1);
  return Dataset(std::move(images), std::move(labels), class_count);
}

std::uint8_t quantize_pixel(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void write_idx_images(const std::filesystem::path& path, const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 1)
    throw ContractError("write_idx_images: expected N x 1 x H x W, got " +
                        shape_string(images.shape()));
  std::vector<std::uint8_t> b;
  b.reserve(16 + images.size());
  put_be32(b, kIdxImagesMagic);
  put_be32(b, static_cast<std::uint32_t>(images.dim(0)));
  put_be32(b, static_cast<std::uint32_t>(images.dim(2)));
  put_be32(b, static_cast<std::uint32_t>(images.dim(3)));
  for (double v : images.raw()) b.push_back(quantize_pixel(v));
  write_file(path, b);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::vector<std::uint8_t> b;
  put_be32(b, kIdxLabelsMagic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) {
    if (y < 0 || y > 255) throw ContractError("IDX labels must fit in one byte");
    b.push_back(static_cast<std::uint8_t>(y));
  }
  write_file(path, b);
}

void save_idx(const Dataset& ds, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  write_idx_images(images_path, ds.images());
  write_idx_labels(labels_path, ds.labels());
}

namespace {
constexpr char kF64Magic[6] = {'T', 'B', 'F', '6', '4', '1'};
}

void write_f64_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::vector<std::uint8_t> b(kF64Magic, kF64Magic + 6);
  auto le32 = [&b](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  le32(static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) le32(static_cast<std::uint32_t>(e));
  for (double v : t.raw()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  write_file(path, b);
}

Tensor read_f64_tensor(const std::filesystem::path& path) {
  const auto b = read_file(path);
  if (b.size() < 10 || std::memcmp(b.data(), kF64Magic, 6) != 0)
    throw IdxMagicError(path.string() + ": not a TBF641 tensor file");
  std::size_t pos = 6;
  auto le32 = [&]() {
    if (b.size() < pos + 4) throw IdxTruncatedError(path.string() + ": truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[pos + i]} << (8 * i);
    pos += 4;
    return v;
  };
  Shape shape(le32());
  for (auto& e : shape) e = le32();
  const std::size_t n = shape_size(shape);
  if (b.size() != pos + 8 * n) throw IdxTruncatedError(path.string() + ": payload size mismatch");
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{b[pos + 8 * k + i]} << (8 * i);
    v[k] = std::bit_cast<double>(bits);
  }
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace tb::data
