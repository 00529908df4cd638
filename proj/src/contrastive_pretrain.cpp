// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include "fewshot/contrastive_pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "fewshot/error.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {
namespace {

constexpr std::string_view kEncoderMagic = "CENC";
constexpr std::uint32_t kEncoderVersion = 1;
constexpr std::string_view kImageMagic = "CIMG";

Encoder init_encoder(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim, Rng& rng) {
  Encoder enc;
  std::vector<std::size_t> widths{in_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(widths[l]);
    const auto fan_out = static_cast<Eigen::Index>(widths[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    }
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

void check_chain(const Encoder& enc, const char* name) {
  if (enc.layers.empty()) throw ContractError(std::string(name) + " has no layers");
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    const auto& layer = enc.layers[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw ContractError(std::string(name) + " layer " + std::to_string(l) + ": bias width mismatch");
    }
    if (l > 0 && layer.weight.cols() != enc.layers[l - 1].weight.rows()) {
      throw ContractError(std::string(name) + " layer " + std::to_string(l) + ": input width does not chain");
    }
  }
}

// Rows of `z` scaled to unit norm; norms returned separately.
Matrix normalize_rows(const Matrix& z, Vector& norms, const char* which) {
  norms = z.rowwise().norm();
  Matrix u = z;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (norms(i) == 0.0) {
      throw NumericError(std::string("contrast_loss: zero-norm embedding row ") + std::to_string(i) + " in " + which);
    }
    u.row(i) /= norms(i);
  }
  return u;
}

// Gradient w.r.t. z given gradient w.r.t. u = z / |z|.
Matrix through_normalization(const Matrix& u, const Vector& norms, const Matrix& grad_u) {
  Matrix out(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double radial = u.row(i).dot(grad_u.row(i));
    out.row(i) = (grad_u.row(i) - radial * u.row(i)) / norms(i);
  }
  return out;
}

void sgd_momentum_step(Encoder& params, Encoder& velocity, const Encoder& grad, double lr, double momentum) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& v = velocity.layers[l];
    const auto& g = grad.layers[l];
    v.weight = momentum * v.weight + g.weight;
    v.bias = momentum * v.bias + g.bias;
    params.layers[l].weight -= lr * v.weight;
    params.layers[l].bias -= lr * v.bias;
  }
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

void write_encoder(detail::ByteWriter& out, const Encoder& enc) {
  out.u32(static_cast<std::uint32_t>(enc.layers.size()));
  for (const auto& layer : enc.layers) {
    out.u32(static_cast<std::uint32_t>(layer.weight.rows()));
    out.u32(static_cast<std::uint32_t>(layer.weight.cols()));
    out.f64s({layer.weight.data(), static_cast<std::size_t>(layer.weight.size())});
    out.f64s({layer.bias.data(), static_cast<std::size_t>(layer.bias.size())});
  }
}

Encoder read_encoder(detail::ByteReader& in) {
  Encoder enc;
  const auto layers = in.u32("layer count");
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto rows = in.u32("layer rows");
    const auto cols = in.u32("layer cols");
    if (std::uint64_t{rows} * (std::uint64_t{cols} + 1) * 8 > in.remaining()) {
      throw FormatError("truncated payload in '" + in.source() + "' while reading layer weights");
    }
    DenseLayer layer{Matrix(rows, cols), Vector(rows)};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = in.f64("weight");
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = in.f64("bias");
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw NumericError("non-finite encoder weight in '" + in.source() + "'");
    }
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

}  // namespace

ViewPair split_views(const RawSample& sample) {
  if (const auto* pair = std::get_if<ViewPair>(&sample)) return *pair;
  const auto& img = std::get<ImageSample>(sample);
  const std::size_t pixels = std::size_t{img.width} * img.height;
  if (pixels == 0 || img.pixels.size() != pixels * 3) {
    throw ContractError("split_views: image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " carries " + std::to_string(img.pixels.size()) + " values, expected w*h*3");
  }
  ViewPair out;
  out.view1.resize(pixels);
  out.view2.resize(2 * pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    const double r = img.pixels[3 * p];
    const double g = img.pixels[3 * p + 1];
    const double b = img.pixels[3 * p + 2];
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    out.view1[p] = y;
    out.view2[2 * p] = 0.5 + (b - y) * 0.564;
    out.view2[2 * p + 1] = 0.5 + (r - y) * 0.713;
  }
  return out;
}

Encoder Encoder::zeros_like() const {
  Encoder out;
  for (const auto& layer : layers) {
    out.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
  }
  return out;
}

bool operator==(const EncoderParams& a, const EncoderParams& b) {
  const auto same = [](const Encoder& x, const Encoder& y) {
    if (x.layers.size() != y.layers.size()) return false;
    for (std::size_t l = 0; l < x.layers.size(); ++l) {
      const auto& p = x.layers[l];
      const auto& q = y.layers[l];
      if (p.weight.rows() != q.weight.rows() || p.weight.cols() != q.weight.cols()) return false;
      if (p.weight != q.weight || p.bias != q.bias) return false;
    }
    return true;
  };
  return a.embed_dim == b.embed_dim && same(a.phi1, b.phi1) && same(a.phi2, b.phi2);
}

Vector encode(const Encoder& encoder, std::span<const double> view) {
  check_chain(encoder, "encoder");
  if (static_cast<Eigen::Index>(view.size()) != encoder.in_dim()) {
    throw ContractError("encode: view length " + std::to_string(view.size()) + " does not match input width " +
                        std::to_string(encoder.in_dim()));
  }
  Vector a = Eigen::Map<const Vector>(view.data(), static_cast<Eigen::Index>(view.size()));
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    Vector h = encoder.layers[l].weight * a + encoder.layers[l].bias;
    if (l + 1 < encoder.layers.size()) h = h.cwiseMax(0.0);
    a = std::move(h);
  }
  return a;
}

EncoderTape::EncoderTape(const Encoder& encoder, const Matrix& inputs) : encoder_(encoder) {
  check_chain(encoder, "encoder");
  if (inputs.cols() != encoder.in_dim()) {
    throw ContractError("encoder input width " + std::to_string(inputs.cols()) + " does not match " +
                        std::to_string(encoder.in_dim()));
  }
  activations_.push_back(inputs);
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    const auto& layer = encoder.layers[l];
    Matrix h = activations_.back() * layer.weight.transpose();
    h.rowwise() += layer.bias.transpose();
    if (l + 1 < encoder.layers.size()) h = h.cwiseMax(0.0);
    activations_.push_back(std::move(h));
  }
}

Encoder EncoderTape::backward(const Matrix& grad_output) const {
  Encoder grad = encoder_.zeros_like();
  Matrix delta = grad_output;
  for (std::size_t l = encoder_.layers.size(); l-- > 0;) {
    const Matrix& input = activations_[l];
    grad.layers[l].weight = delta.transpose() * input;
    grad.layers[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = delta * encoder_.layers[l].weight;
      delta = delta.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
    }
  }
  return grad;
}

ContrastLoss contrast_loss(const Matrix& z1, const Matrix& z2, double tau) {
  if (!(tau > 0.0)) throw ContractError("contrast_loss: temperature must be positive");
  if (z1.rows() == 0 || z1.rows() != z2.rows() || z1.cols() != z2.cols()) {
    throw ContractError("contrast_loss: batches must be non-empty and of equal shape");
  }
  const Eigen::Index b = z1.rows();
  Vector n1, n2;
  const Matrix u1 = normalize_rows(z1, n1, "z1");
  const Matrix u2 = normalize_rows(z2, n2, "z2");
  const Matrix logits = (u1 * u2.transpose()) / tau;  // logits(i, j) = u1_i . u2_j / tau

  // Direction 1->2 normalizes each row, direction 2->1 each column.
  Matrix grad_logits = Matrix::Zero(b, b);
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double row_max = logits.row(i).maxCoeff();
    const double row_sum = (logits.row(i).array() - row_max).exp().sum();
    loss += inv_b * (row_max + std::log(row_sum) - logits(i, i));
    grad_logits.row(i) += inv_b * ((logits.row(i).array() - row_max).exp() / row_sum).matrix();
    grad_logits(i, i) -= inv_b;
  }
  for (Eigen::Index j = 0; j < b; ++j) {
    const double col_max = logits.col(j).maxCoeff();
    const double col_sum = (logits.col(j).array() - col_max).exp().sum();
    loss += inv_b * (col_max + std::log(col_sum) - logits(j, j));
    grad_logits.col(j) += inv_b * ((logits.col(j).array() - col_max).exp() / col_sum).matrix();
    grad_logits(j, j) -= inv_b;
  }

  ContrastLoss out;
  out.loss = loss;
  const Matrix grad_u1 = (grad_logits * u2) / tau;
  const Matrix grad_u2 = (grad_logits.transpose() * u1) / tau;
  out.grad_z1 = through_normalization(u1, n1, grad_u1);
  out.grad_z2 = through_normalization(u2, n2, grad_u2);
  return out;
}

void PretrainConfig::validate() const {
  if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
  if (batch_size < 2) throw ContractError("batch_size must be at least 2");
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0, 1)");
  if (embed_dim == 0) throw ContractError("embed_dim must be positive");
  for (auto h : hidden) {
    if (h == 0) throw ContractError("hidden layer widths must be positive");
  }
}

EncoderParams init_encoders(std::size_t view1_dim, std::size_t view2_dim, const PretrainConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  EncoderParams params;
  params.embed_dim = cfg.embed_dim;
  params.phi1 = init_encoder(view1_dim, cfg.hidden, cfg.embed_dim, rng);
  params.phi2 = init_encoder(view2_dim, cfg.hidden, cfg.embed_dim, rng);
  return params;
}

PretrainResult pretrain(std::span<const RawSample> data, const PretrainConfig& cfg) {
  cfg.validate();
  if (data.size() < cfg.batch_size) {
    throw ContractError("pretrain: " + std::to_string(data.size()) + " samples is fewer than batch_size " +
                        std::to_string(cfg.batch_size));
  }
  const auto first = split_views(data[0]);
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix x1(n, static_cast<Eigen::Index>(first.view1.size()));
  Matrix x2(n, static_cast<Eigen::Index>(first.view2.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto views = split_views(data[static_cast<std::size_t>(i)]);
    if (views.view1.size() != first.view1.size() || views.view2.size() != first.view2.size()) {
      throw ContractError("pretrain: sample " + std::to_string(i) + " has inconsistent view dimensions");
    }
    x1.row(i) = Eigen::Map<const Eigen::RowVectorXd>(views.view1.data(), x1.cols());
    x2.row(i) = Eigen::Map<const Eigen::RowVectorXd>(views.view2.data(), x2.cols());
  }

  PretrainResult result;
  result.params = init_encoders(first.view1.size(), first.view2.size(), cfg);
  Encoder vel1 = result.params.phi1.zeros_like();
  Encoder vel2 = result.params.phi2.zeros_like();
  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto rows = std::span<const std::size_t>(order).subspan(start, std::min(cfg.batch_size, order.size() - start));
      const EncoderTape tape1(result.params.phi1, gather_rows(x1, rows));
      const EncoderTape tape2(result.params.phi2, gather_rows(x2, rows));
      const auto loss = contrast_loss(tape1.output(), tape2.output(), cfg.temperature);
      if (!std::isfinite(loss.loss)) {
        throw NumericError("pretrain: non-finite contrastive loss at epoch " + std::to_string(epoch));
      }
      const Encoder g1 = tape1.backward(loss.grad_z1);
      const Encoder g2 = tape2.backward(loss.grad_z2);
      sgd_momentum_step(result.params.phi1, vel1, g1, cfg.learning_rate, cfg.momentum);
      sgd_momentum_step(result.params.phi2, vel2, g2, cfg.learning_rate, cfg.momentum);
      epoch_loss += loss.loss;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

FeatureDataset extract_features(const EncoderParams& params, std::span<const RawSample> data,
                                std::span<const std::uint32_t> labels) {
  if (labels.size() != data.size()) {
    throw ContractError("extract_features: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(data.size()) + " samples");
  }
  if (params.phi1.out_dim() != params.embed_dim || params.phi2.out_dim() != params.embed_dim) {
    throw ContractError("extract_features: encoder output width differs from embed_dim");
  }
  FeatureDataset out;
  out.dim = 2 * params.embed_dim;
  std::vector<double> row(out.dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto views = split_views(data[i]);
    const Vector a = encode(params.phi1, views.view1);
    const Vector b = encode(params.phi2, views.view2);
    std::copy(a.data(), a.data() + a.size(), row.begin());
    std::copy(b.data(), b.data() + b.size(), row.begin() + a.size());
    out.push_back(labels[i], row);
  }
  out.validate();
  return out;
}

void save_encoders(const EncoderParams& params, const std::filesystem::path& path) {
  check_chain(params.phi1, "phi1");
  check_chain(params.phi2, "phi2");
  detail::ByteWriter out;
  out.magic(kEncoderMagic);
  out.u32(kEncoderVersion);
  out.u32(params.embed_dim);
  write_encoder(out, params.phi1);
  write_encoder(out, params.phi2);
  out.flush_to(path);
}

EncoderParams load_encoders(const std::filesystem::path& path) {
  auto in = detail::ByteReader::open(path);
  in.expect_magic(kEncoderMagic);
  const auto version = in.u32("format version");
  if (version != kEncoderVersion) {
    throw FormatError("unsupported encoder file version " + std::to_string(version) + " in '" + in.source() + "'");
  }
  EncoderParams params;
  params.embed_dim = in.u32("embed_dim");
  params.phi1 = read_encoder(in);
  params.phi2 = read_encoder(in);
  if (in.remaining() > 0) throw FormatError("trailing bytes in encoder file '" + in.source() + "'");
  check_chain(params.phi1, "phi1");
  check_chain(params.phi2, "phi2");
  if (params.phi1.out_dim() != params.embed_dim || params.phi2.out_dim() != params.embed_dim) {
    throw FormatError("encoder file '" + in.source() + "': final layer width differs from embed_dim");
  }
  return params;
}

void save_images(const RawSampleSet& set, const std::filesystem::path& path) {
  if (set.labels.size() != set.samples.size()) throw ContractError("save_images: label count mismatch");
  std::uint32_t w = 0, h = 0;
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto* img = std::get_if<ImageSample>(&set.samples[i]);
    if (img == nullptr) throw ContractError("save_images: sample " + std::to_string(i) + " is not an image");
    if (i == 0) {
      w = img->width;
      h = img->height;
    }
    if (img->width != w || img->height != h || img->pixels.size() != std::size_t{w} * h * 3) {
      throw ContractError("save_images: sample " + std::to_string(i) + " has inconsistent shape");
    }
  }
  detail::ByteWriter out;
  out.magic(kImageMagic);
  out.u32(w);
  out.u32(h);
  out.u64(set.samples.size());
  for (const auto& s : set.samples) out.f64s(std::get<ImageSample>(s).pixels);
  for (auto label : set.labels) out.u32(label);
  out.flush_to(path);
}

RawSampleSet load_images(const std::filesystem::path& path) {
  auto in = detail::ByteReader::open(path);
  in.expect_magic(kImageMagic);
  const auto w = in.u32("width");
  const auto h = in.u32("height");
  const auto count = in.u64("sample count");
  const std::uint64_t per_sample = std::uint64_t{w} * h * 3;
  if (per_sample == 0) throw FormatError("zero image size in '" + in.source() + "'");
  if (count > in.remaining() / (per_sample * 8 + 4)) {
    throw FormatError("truncated payload in '" + in.source() + "': header announces " + std::to_string(count) + " samples");
  }
  RawSampleSet set;
  set.samples.reserve(count);
  for (std::uint64_t s = 0; s < count; ++s) {
    ImageSample img{w, h, std::vector<double>(per_sample)};
    for (auto& px : img.pixels) {
      px = in.f64("pixel");
      if (!(px >= 0.0 && px <= 1.0)) {
        throw FormatError("pixel value outside [0, 1] in sample " + std::to_string(s) + " of '" + in.source() + "'");
      }
    }
    set.samples.emplace_back(std::move(img));
  }
  for (std::uint64_t s = 0; s < count; ++s) set.labels.push_back(in.u32("class id"));
  if (in.remaining() > 0) throw FormatError("trailing bytes in image file '" + in.source() + "'");
  return set;
}

}  // namespace fewshot
