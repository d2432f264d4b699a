/*
Copyright 2026 The makd Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

// Little-endian binary helpers shared by the checkpoint, feature and
// annotation-store formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "makd/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace makd::detail {

class BinaryWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void f64s(std::span<const double> v) { bytes(v.data(), v.size() * sizeof(double)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }

  const std::vector<char>& buffer() const noexcept { return buf_; }

  // Writes to a sibling temp file and renames, so readers never observe a
  // partially written file.
  void commit(const std::filesystem::path& path) const {
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw Error("cannot open " + tmp.string() + " for writing");
      os.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
      if (!os) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

 private:
  std::vector<char> buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path_);
    buf_.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  }

  void bytes(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError(path_ + ": truncated file");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    bytes(got.data(), got.size());
    if (got != m) throw FormatError(path_ + ": bad magic, expected " + std::string(m));
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::vector<double> f64s(std::size_t n) {
    if (n > (buf_.size() - pos_) / sizeof(double)) throw FormatError(path_ + ": truncated file");
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return v;
  }
  std::string str() {
    const auto n = u64();
    if (n > buf_.size() - pos_) throw FormatError(path_ + ": truncated string");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void expect_end() const {
    if (pos_ != buf_.size()) throw FormatError(path_ + ": trailing bytes");
  }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace makd::detail
