// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

// Two-view contrastive pretraining of a pair of fully-connected encoders and
// feature extraction by concatenating both embeddings.
//
// The loss is an exact in-batch softmax: for every anchor in view 1 the
// positive is the same sample's view-2 embedding and the negatives are the
// other view-2 embeddings of the minibatch, and symmetrically with view 2 as
// anchor. The two directional means are summed.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "fewshot/episode_data.hpp"
#include "fewshot/linalg.hpp"

namespace fewshot {

/// RGB image with values in [0, 1], pixel-interleaved, row-major:
/// pixels[(y * width + x) * 3 + channel].
struct ImageSample {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<double> pixels;
};

/// A sample that already comes as two views.
struct ViewPair {
  std::vector<double> view1;
  std::vector<double> view2;
};

using RawSample = std::variant<ImageSample, ViewPair>;

/// Luma / chroma split of an image (BT.601 coefficients):
///   view1[p] = Y = 0.299 R + 0.587 G + 0.114 B
///   view2[2p] = Cb = 0.5 + (B - Y) * 0.564, view2[2p+1] = Cr = 0.5 + (R - Y) * 0.713
/// A ViewPair is returned unchanged. ContractError for malformed images.
ViewPair split_views(const RawSample& sample);

/// Affine layer y = W x + b with W stored out x in.
struct DenseLayer {
  Matrix weight;
  Vector bias;
};

/// Fully-connected network: rectifier after every layer except the last.
struct Encoder {
  std::vector<DenseLayer> layers;

  Eigen::Index in_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  Eigen::Index out_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  /// Same layer shapes, all zeros. Used for gradients and momentum buffers.
  Encoder zeros_like() const;
};

struct EncoderParams {
  Encoder phi1;  // luma / first view
  Encoder phi2;  // chroma / second view
  std::uint32_t embed_dim = 0;

  friend bool operator==(const EncoderParams& a, const EncoderParams& b);
};

/// Raw (unnormalized) embedding of one view.
Vector encode(const Encoder& encoder, std::span<const double> view);

/// Batched forward pass with the activations kept for backward().
class EncoderTape {
 public:
  EncoderTape(const Encoder& encoder, const Matrix& inputs);

  /// Rows are embeddings, one per input row.
  const Matrix& output() const { return activations_.back(); }

  /// Parameter gradients given dL/d(output).
  Encoder backward(const Matrix& grad_output) const;

 private:
  const Encoder& encoder_;
  std::vector<Matrix> activations_;  // activations_[0] = inputs
};

struct ContrastLoss {
  double loss = 0.0;
  Matrix grad_z1;
  Matrix grad_z2;
};

/// Bidirectional in-batch contrastive loss over L2-normalized rows of z1, z2
/// with temperature tau; gradients are with respect to the unnormalized rows.
ContrastLoss contrast_loss(const Matrix& z1, const Matrix& z2, double tau);

struct PretrainConfig {
  double temperature = 0.1;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  std::uint32_t embed_dim = 32;
  std::vector<std::size_t> hidden = {64};

  void validate() const;
};

struct PretrainResult {
  EncoderParams params;
  std::vector<double> epoch_loss;  // mean minibatch loss of each epoch
};

/// Glorot-uniform weights, zero biases, phi1 drawn before phi2.
EncoderParams init_encoders(std::size_t view1_dim, std::size_t view2_dim, const PretrainConfig& cfg);

/// Minibatch SGD with momentum (v <- mu v + g; p <- p - lr v) on
/// contrast_loss over a fresh shuffle each epoch. NumericError on a NaN loss.
PretrainResult pretrain(std::span<const RawSample> data, const PretrainConfig& cfg);

/// Per-sample concat(encode(phi1, view1), encode(phi2, view2)).
FeatureDataset extract_features(const EncoderParams& params, std::span<const RawSample> data,
                                std::span<const std::uint32_t> labels);

/// "CENC" encoder weight file.
void save_encoders(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_encoders(const std::filesystem::path& path);

struct RawSampleSet {
  std::vector<RawSample> samples;
  std::vector<std::uint32_t> labels;
};

/// "CIMG" raw image file. All samples must be images of the same size.
void save_images(const RawSampleSet& set, const std::filesystem::path& path);
RawSampleSet load_images(const std::filesystem::path& path);

}  // namespace fewshot
