// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian readers and writers shared by the on-disk formats.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fewshot::detail {

class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> values);
  void raw(std::string_view text) { bytes_.insert(bytes_.end(), text.begin(), text.end()); }

  const std::vector<char>& bytes() const { return bytes_; }

  /// Writes the whole buffer to `path`; IoError when the path is unwritable.
  void flush_to(const std::filesystem::path& path) const;

 private:
  std::vector<char> bytes_;
};

/// Reads a complete file into memory and decodes it front to back. Running
/// past the end raises FormatError naming `what` and the file.
class ByteReader {
 public:
  static ByteReader open(const std::filesystem::path& path);

  /// Consumes four bytes and raises FormatError if they differ from `tag`.
  void expect_magic(std::string_view tag);
  std::uint32_t u32(std::string_view what);
  std::uint64_t u64(std::string_view what);
  double f64(std::string_view what);
  std::string raw(std::size_t length, std::string_view what);

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  ByteReader(std::vector<char> bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}
  void need(std::size_t n, std::string_view what) const;

  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace fewshot::detail
