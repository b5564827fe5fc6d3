#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "ttaseg/tensor.hpp"

namespace ttaseg {

// NTF1 tensor container:
//   "NTF1" | u32 rank | rank x u64 dims | product(dims) x f64 payload
// All integers and doubles little-endian regardless of host byte order.

/// Appends the NTF1 encoding of `t` to `out`.
void append_ntf(std::string& out, const Tensor& t);
std::string encode_ntf(const Tensor& t);
std::uint64_t ntf_encoded_size(const Tensor& t);

/// Decodes one NTF1 block starting at `pos` and advances `pos` past it.
/// Throws FormatError carrying the offset of the first bad byte.
Tensor decode_ntf(std::string_view bytes, std::uint64_t& pos);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ttaseg
