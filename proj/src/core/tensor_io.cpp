/*
 * Copyright 2026 The guidex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "core/tensor_io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "core/errors.hpp"

namespace guidex::io {

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'G', 'T', 'D'};
constexpr std::uint32_t kMaxRank = 8;

static_assert(std::endian::native == std::endian::little, "tensor container assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

bool get_u32(std::istream& is, std::uint32_t& v) {
  is.read(reinterpret_cast<char*>(&v), 4);
  return static_cast<bool>(is);
}

std::string to_hex(const unsigned char* p, unsigned n) {
  std::ostringstream os;
  for (unsigned i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(p[i]);
  return os.str();
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  void update(const void* p, std::size_t n) { EVP_DigestUpdate(ctx_, p, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    return to_hex(md, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::size_t FloatTensor::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void write_tensor(std::ostream& os, std::span<const std::uint32_t> shape, std::span<const float> data) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n != data.size()) throw std::invalid_argument("write_tensor: data size does not match shape");
  os.write(kMagic.data(), 4);
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put_u32(os, d);
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
}

FloatTensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || magic != kMagic) throw DataError("tensor record: bad magic");
  std::uint32_t rank = 0;
  if (!get_u32(is, rank) || rank > kMaxRank) throw DataError("tensor record: bad rank");
  FloatTensor t;
  t.shape.resize(rank);
  for (auto& d : t.shape) {
    if (!get_u32(is, d)) throw DataError("tensor record: truncated header");
  }
  t.data.resize(t.numel());
  is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (static_cast<std::size_t>(is.gcount()) != t.data.size() * sizeof(float)) {
    throw DataError("tensor record: truncated data");
  }
  return t;
}

void save_tensor_file(const std::filesystem::path& path, const FloatTensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  write_tensor(os, t.shape, t.data);
  if (!os) throw DataError("write failed: " + path.string());
}

FloatTensor load_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  try {
    FloatTensor t = read_tensor(is);
    if (is.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes");
    return t;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<FloatTensor> load_tensor_records(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<FloatTensor> out;
  try {
    while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(is));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (is) {
    is.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  return h.hex();
}

std::string blob_hash(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw DataError("cannot stat " + path.string());
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  Sha256 h;
  const std::string header = "blob " + std::to_string(size);
  h.update(header.data(), header.size() + 1);  // includes the NUL
  std::array<char, 1 << 16> buf{};
  while (is) {
    is.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  return h.hex();
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace guidex::io
