// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include "fewshot/episode_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "binary_io.hpp"
#include "fewshot/error.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {
namespace {

constexpr std::string_view kFeatureMagic = "CFSL";
constexpr std::uint32_t kFeatureVersion = 1;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

bool parse_double(std::string_view field, double& out) {
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

}  // namespace

std::uint32_t FeatureDataset::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

std::vector<std::vector<std::size_t>> FeatureDataset::class_members() const {
  std::vector<std::vector<std::size_t>> members(num_classes());
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  return members;
}

void FeatureDataset::push_back(std::uint32_t label, std::span<const double> vector) {
  if (vector.size() != dim) {
    throw ContractError("record has " + std::to_string(vector.size()) + " values, expected dim " +
                        std::to_string(dim));
  }
  labels.push_back(label);
  values.insert(values.end(), vector.begin(), vector.end());
}

void FeatureDataset::validate() const {
  if (dim == 0) throw FormatError("feature dimension must be positive");
  if (values.size() != labels.size() * dim) {
    throw FormatError("value count " + std::to_string(values.size()) + " does not match " +
                      std::to_string(labels.size()) + " records of dim " + std::to_string(dim));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError("non-finite feature value in record " + std::to_string(i / dim));
    }
  }
  const auto members = class_members();
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].empty()) {
      throw FormatError("class ids are not dense: class " + std::to_string(c) + " has no records");
    }
  }
}

void EpisodeSpec::validate() const {
  if (n_way < 2) throw ContractError("n_way must be at least 2");
  if (k_shot < 1) throw ContractError("k_shot must be at least 1");
  if (q_query < 1) throw ContractError("q_query must be at least 1");
}

std::vector<std::uint32_t> Episode::support_labels() const {
  std::vector<std::uint32_t> out;
  out.reserve(support.size());
  for (const auto& item : support) out.push_back(item.label);
  return out;
}

std::vector<std::uint32_t> Episode::query_labels() const {
  std::vector<std::uint32_t> out;
  out.reserve(query.size());
  for (const auto& item : query) out.push_back(item.label);
  return out;
}

Matrix Episode::vertex_matrix(const FeatureDataset& data) const {
  Matrix v(support.size() + query.size(), data.dim);
  Eigen::Index r = 0;
  for (const auto* part : {&support, &query}) {
    for (const auto& item : *part) {
      const auto row = data.row(item.index);
      v.row(r++) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
    }
  }
  return v;
}

FeatureDataset load_features(const std::filesystem::path& path) {
  auto in = detail::ByteReader::open(path);
  in.expect_magic(kFeatureMagic);
  const auto version = in.u32("format version");
  if (version != kFeatureVersion) {
    throw FormatError("unsupported feature-store version " + std::to_string(version) + " in '" +
                      in.source() + "' (expected " + std::to_string(kFeatureVersion) + ")");
  }
  const auto count = in.u64("record count");
  FeatureDataset data;
  data.dim = in.u32("dimension");
  if (data.dim == 0) throw FormatError("zero feature dimension in '" + in.source() + "'");
  if (count > in.remaining() / (4 + 8 * std::uint64_t{data.dim})) {
    throw FormatError("truncated payload in '" + in.source() + "': header announces " +
                      std::to_string(count) + " records");
  }
  data.labels.reserve(count);
  data.values.reserve(count * data.dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    data.labels.push_back(in.u32("class id"));
    for (std::uint32_t d = 0; d < data.dim; ++d) {
      const double x = in.f64("feature value");
      if (!std::isfinite(x)) {
        throw NumericError("non-finite feature value in record " + std::to_string(r) + " of '" +
                           in.source() + "'");
      }
      data.values.push_back(x);
    }
  }
  if (in.remaining() > 0) {
    const auto names_len = in.u64("class-name block length");
    std::istringstream names(in.raw(names_len, "class-name block"));
    std::string line;
    while (std::getline(names, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      std::uint32_t id = 0;
      const auto [ptr, ec] = std::from_chars(line.data(), line.data() + (tab == std::string::npos ? 0 : tab), id);
      if (tab == std::string::npos || ec != std::errc() || ptr != line.data() + tab) {
        throw FormatError("malformed class-name line in '" + in.source() + "': " + line);
      }
      data.class_names[id] = line.substr(tab + 1);
    }
    if (in.remaining() > 0) throw FormatError("trailing bytes after class-name block in '" + in.source() + "'");
  }
  data.validate();
  return data;
}

void save_features(const FeatureDataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  detail::ByteWriter out;
  out.magic(kFeatureMagic);
  out.u32(kFeatureVersion);
  out.u64(dataset.size());
  out.u32(dataset.dim);
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    out.u32(dataset.labels[r]);
    out.f64s(dataset.row(r));
  }
  std::string names;
  for (const auto& [id, name] : dataset.class_names) {
    if (name.find_first_of("\t\n") != std::string::npos) {
      throw FormatError("class name for id " + std::to_string(id) + " contains a tab or newline");
    }
    names += std::to_string(id) + '\t' + name + '\n';
  }
  out.u64(names.size());
  out.raw(names);
  out.flush_to(path);
}

FeatureDataset import_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "': no such file or unreadable");

  FeatureDataset data;
  std::unordered_map<std::string, std::uint32_t> ids;
  std::size_t expected_fields = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto fields = split_commas(text);
    if (fields.size() < 2) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected a label and at least one feature");
    }
    std::vector<double> row(fields.size() - 1);
    bool numeric = true;
    std::size_t bad_field = 0;
    for (std::size_t f = 1; f < fields.size() && numeric; ++f) {
      numeric = parse_double(fields[f], row[f - 1]);
      bad_field = f;
    }
    if (expected_fields == 0) {
      if (!numeric && line_no == 1) continue;  // header
      expected_fields = fields.size();
      data.dim = static_cast<std::uint32_t>(expected_fields - 1);
    }
    if (fields.size() != expected_fields) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": ragged row with " +
                        std::to_string(fields.size()) + " fields, expected " + std::to_string(expected_fields));
    }
    if (!numeric) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-numeric feature field " +
                        std::to_string(bad_field) + " '" + std::string(fields[bad_field]) + "'");
    }
    for (double x : row) {
      if (!std::isfinite(x)) {
        throw NumericError(path.string() + ":" + std::to_string(line_no) + ": non-finite feature value");
      }
    }
    const std::string label(fields[0]);
    auto [it, inserted] = ids.try_emplace(label, static_cast<std::uint32_t>(ids.size()));
    if (inserted) data.class_names[it->second] = label;
    data.push_back(it->second, row);
  }
  if (data.size() == 0) throw FormatError("'" + path.string() + "' contains no records");
  data.validate();
  return data;
}

Episode sample_episode(const FeatureDataset& dataset, const EpisodeSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto members = dataset.class_members();
  if (members.size() < spec.n_way) {
    throw InfeasibleError("dataset has " + std::to_string(members.size()) + " classes, episode needs " +
                          std::to_string(spec.n_way));
  }
  Rng rng(seed);
  std::vector<std::uint32_t> classes(members.size());
  std::iota(classes.begin(), classes.end(), 0u);
  // Partial Fisher-Yates: the first n_way slots are a uniform draw without replacement.
  for (std::uint32_t i = 0; i < spec.n_way; ++i) {
    const auto j = i + rng.uniform_index(classes.size() - i);
    std::swap(classes[i], classes[j]);
  }

  Episode episode;
  episode.spec = spec;
  episode.class_map.assign(classes.begin(), classes.begin() + spec.n_way);
  const std::size_t per_class = std::size_t{spec.k_shot} + spec.q_query;
  for (std::uint32_t label = 0; label < spec.n_way; ++label) {
    auto pool = members[episode.class_map[label]];
    if (pool.size() < per_class) {
      throw InfeasibleError("class " + std::to_string(episode.class_map[label]) + " has " +
                            std::to_string(pool.size()) + " records, episode needs " +
                            std::to_string(per_class));
    }
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto j = i + rng.uniform_index(pool.size() - i);
      std::swap(pool[i], pool[j]);
      auto& part = i < spec.k_shot ? episode.support : episode.query;
      part.push_back({pool[i], label});
    }
  }
  return episode;
}

}  // namespace fewshot
