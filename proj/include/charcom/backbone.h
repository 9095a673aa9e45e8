#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "charcom/lowrank.h"

namespace charcom {

// Width of the noise-level embedding (sigma, sigma^2, sin 2 pi sigma, cos 2 pi sigma).
inline constexpr std::size_t kSigmaEmbeddingDim = 4;

struct BackboneDims {
  std::size_t d_feat = 16;
  std::size_t d_hidden = 64;
  std::size_t d_cond = 16;

  std::size_t input_dim() const noexcept { return d_feat + kSigmaEmbeddingDim + d_cond; }
  bool operator==(const BackboneDims&) const = default;
};

struct DenseLayer {
  DenseMatrix weight;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

/// Frozen denoiser parameters. Layout:
///   layer 0: input_dim -> d_hidden, tanh
///   layer 1: d_hidden -> d_hidden, tanh   (adapted)
///   layer 2: d_hidden -> d_hidden, tanh   (adapted)
///   layer 3: d_hidden -> d_feat, linear
/// The network predicts the clean feature vector from its noised version.
struct BackboneParams {
  BackboneDims dims;
  std::vector<DenseLayer> layers;

  static constexpr std::size_t kLayerCount = 4;
  static constexpr std::array<std::size_t, 2> kAdaptedLayers = {1, 2};

  /// Throws InvalidArgument if shapes do not chain or an entry is non-finite.
  void validate() const;
  bool operator==(const BackboneParams&) const = default;
};

/// One WeightedUpdateSet per adapted layer (in kAdaptedLayers order). An empty
/// vector means no adapters at all.
using LayerUpdates = std::vector<WeightedUpdateSet>;

BackboneParams init_backbone(const BackboneDims& dims, std::uint64_t seed);

/// 64-bit FNV-1a over every parameter's bit pattern.
std::uint64_t parameter_hash(const BackboneParams& params);

/// Desk-scale identity: feature vectors cluster around a unit anchor.
struct CharacterDistribution {
  std::string character_id;
  std::vector<double> anchor;
  double spread = 0.1;
  std::vector<std::vector<double>> mixture_offsets;  // optional sub-modes

  void validate() const;
};

struct FeatureFrame {
  std::vector<double> values;
  std::size_t scene_index = 0;
  std::vector<std::string> characters_present;

  bool operator==(const FeatureFrame&) const = default;
};

enum class StepRule {
  // x <- x + (D - x) * (1 - sigma_next / sigma): Euler step of the
  // variance-exploding probability-flow ODE; the last step lands on D.
  kEuler,
  // x <- x + (D - x) / K at every level.
  kFixedRelaxation,
};

struct NoiseSchedule {
  std::vector<double> levels;  // strictly decreasing, each in (0, 1]
  StepRule rule = StepRule::kEuler;

  /// levels k/K for k = K..1.
  static NoiseSchedule uniform(std::size_t steps, StepRule rule = StepRule::kEuler);
  void validate() const;
};

std::vector<FeatureFrame> sample_reference_set(const CharacterDistribution& dist, std::size_t k, std::uint64_t seed);

/// y + sigma * eps, eps ~ N(0, I).
std::vector<double> forward_noise(std::span<const double> y, double sigma, std::uint64_t seed);

std::array<double, kSigmaEmbeddingDim> sigma_embedding(double sigma);

/// Activations of one forward pass, kept for backpropagation.
struct ForwardTrace {
  std::vector<double> input;                   // [x, sigma embedding, cond]
  std::array<std::vector<double>, 3> hidden;   // post-tanh activations of layers 0..2
  std::vector<double> output;
};

ForwardTrace denoise_traced(const BackboneParams& params, const LayerUpdates& updates, std::span<const double> x,
                            double sigma, std::span<const double> cond);

std::vector<double> denoise(const BackboneParams& params, const LayerUpdates& updates, std::span<const double> x,
                            double sigma, std::span<const double> cond);

using DenoiseFn = std::function<std::vector<double>(std::span<const double> x, double sigma)>;

/// Sampler core over any denoiser: x starts at N(0, I) drawn from `seed` and
/// moves toward the denoiser's prediction at each level.
FeatureFrame sample_with(const DenoiseFn& denoiser, std::size_t d_feat, const NoiseSchedule& schedule,
                         std::uint64_t seed);

/// Deterministic sampler: x starts at N(0, I) drawn from `seed` and is relaxed
/// toward the denoiser's prediction over the schedule's levels.
FeatureFrame sample(const BackboneParams& params, const LayerUpdates& updates, std::span<const double> cond,
                    const NoiseSchedule& schedule, std::uint64_t seed);

}  // namespace charcom
