#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

#include "xmr/errors.hpp"

namespace xmr::detail {

template <typename T>
T from_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  v = from_le(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorCode::kFormat, path.string() + ": truncated " + what);
  return from_le(v);
}

}  // namespace xmr::detail
