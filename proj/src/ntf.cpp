#include "ttaseg/ntf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ttaseg/error.hpp"

namespace ttaseg {

namespace {

constexpr std::string_view kMagic = "NTF1";
// Guards against absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxRank = 16;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view bytes, std::uint64_t pos, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  return v;
}

void require(std::string_view bytes, std::uint64_t pos, std::uint64_t n, const char* what) {
  if (bytes.size() < pos || bytes.size() - pos < n) {
    throw FormatError(std::string("truncated NTF1 block: missing ") + what,
                      static_cast<std::uint64_t>(bytes.size()));
  }
}

}  // namespace

void append_ntf(std::string& out, const Tensor& t) {
  out.append(kMagic);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u64(out, d);
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::string encode_ntf(const Tensor& t) {
  std::string out;
  out.reserve(ntf_encoded_size(t));
  append_ntf(out, t);
  return out;
}

std::uint64_t ntf_encoded_size(const Tensor& t) {
  return 4 + 4 + 8 * static_cast<std::uint64_t>(t.rank()) + 8 * static_cast<std::uint64_t>(t.size());
}

Tensor decode_ntf(std::string_view bytes, std::uint64_t& pos) {
  const std::uint64_t start = pos;
  require(bytes, pos, 4, "magic");
  if (bytes.substr(pos, 4) != kMagic) throw FormatError("bad NTF1 magic", start);
  pos += 4;
  require(bytes, pos, 4, "rank");
  const auto rank = static_cast<std::uint32_t>(get_le(bytes, pos, 4));
  if (rank > kMaxRank) throw FormatError("NTF1 rank too large", pos);
  pos += 4;
  Shape shape(rank);
  std::uint64_t count = rank == 0 ? 0 : 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    require(bytes, pos, 8, "dimension");
    const std::uint64_t d = get_le(bytes, pos, 8);
    if (d == 0) throw FormatError("NTF1 dimension is zero", pos);
    if (count > (std::uint64_t{1} << 40) / d) throw FormatError("NTF1 tensor too large", pos);
    count *= d;
    shape[i] = static_cast<std::size_t>(d);
    pos += 8;
  }
  require(bytes, pos, 8 * count, "payload");
  std::vector<double> values(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<double>(get_le(bytes, pos, 8));
    pos += 8;
  }
  if (rank == 0) return Tensor();
  return Tensor(std::move(shape), std::move(values));
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_file_bytes(path, encode_ntf(t));
}

Tensor load_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  std::uint64_t pos = 0;
  Tensor t = decode_ntf(bytes, pos);
  if (pos != bytes.size()) throw FormatError("trailing bytes after NTF1 block", pos);
  return t;
}

}  // namespace ttaseg
