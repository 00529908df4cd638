// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include "binary_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "fewshot/error.hpp"

namespace fewshot::detail {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> values) {
  bytes_.reserve(bytes_.size() + 8 * values.size());
  for (double v : values) f64(v);
}

void ByteWriter::flush_to(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

ByteReader ByteReader::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "': no such file or unreadable");
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return ByteReader(std::move(bytes), path.string());
}

void ByteReader::need(std::size_t n, std::string_view what) const {
  if (remaining() < n) {
    throw FormatError("truncated payload in '" + source_ + "' while reading " + std::string(what));
  }
}

void ByteReader::expect_magic(std::string_view tag) {
  if (remaining() < tag.size() || std::string_view(bytes_.data() + pos_, tag.size()) != tag) {
    throw FormatError("bad magic in '" + source_ + "': expected \"" + std::string(tag) + "\"");
  }
  pos_ += tag.size();
}

std::uint32_t ByteReader::u32(std::string_view what) {
  need(4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
  }
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64(std::string_view what) {
  need(8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
  }
  pos_ += 8;
  return v;
}

double ByteReader::f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

std::string ByteReader::raw(std::size_t length, std::string_view what) {
  need(length, what);
  std::string out(bytes_.data() + pos_, length);
  pos_ += length;
  return out;
}

}  // namespace fewshot::detail
