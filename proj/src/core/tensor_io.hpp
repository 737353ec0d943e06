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

#pragma once

// Tensor container shared by datasets and checkpoints:
//   4-byte magic "MGTD", u32 rank, rank x u32 dims, then prod(dims)
//   little-endian float32 values. Files may hold several records back to back.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace guidex::io {

struct FloatTensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  std::size_t numel() const;
};

void write_tensor(std::ostream& os, std::span<const std::uint32_t> shape, std::span<const float> data);
// Throws DataError on bad magic, truncation or inconsistent size.
FloatTensor read_tensor(std::istream& is);

void save_tensor_file(const std::filesystem::path& path, const FloatTensor& t);
FloatTensor load_tensor_file(const std::filesystem::path& path);
std::vector<FloatTensor> load_tensor_records(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
// Hash of "blob <size>\0<content>" in the manner of git object ids.
std::string blob_hash(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace guidex::io
