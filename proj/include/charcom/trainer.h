#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "charcom/backbone.h"
#include "charcom/lowrank.h"

namespace charcom {

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  std::size_t rank = 4;
  std::uint64_t seed = 0;
  InitSpec init;
  double rank_scale = 1.0;

  void validate() const;
};

struct TrainingPair {
  std::vector<double> cond;
  std::vector<double> target;
};

/// One fully specified reconstruction example: the denoiser sees `x` at
/// noise level `sigma` and should return `target`.
struct TrainingSample {
  std::vector<double> x;
  double sigma = 0.0;
  std::vector<double> cond;
  std::vector<double> target;
};

struct TrainedBackbone {
  BackboneParams params;
  std::vector<double> loss_trace;  // batch loss before each update

  double final_loss() const { return loss_trace.empty() ? 0.0 : loss_trace.back(); }
};

/// Per-character residuals for every adapted backbone layer.
struct AdapterWeights {
  std::string character_id;
  std::vector<LowRankUpdate> layers;  // parallel to BackboneParams::kAdaptedLayers
  std::size_t rank = 0;
  std::size_t steps = 0;
  double final_loss = 0.0;
  std::vector<double> loss_trace;

  std::size_t parameter_count() const;
  /// Factors as a flat vector: for each layer, B row-major then A row-major.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  bool same_factors(const AdapterWeights& other) const;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Fresh adapter matching `backbone`'s adapted layers: B = 0, A ~ N(0, stddev^2).
AdapterWeights init_adapter(const BackboneParams& backbone, const std::string& character_id, std::size_t rank,
                            const InitSpec& init, std::uint64_t seed);

/// Wraps an adapter as full-weight per-layer update sets.
LayerUpdates adapter_updates(const AdapterWeights& adapter, double weight = 1.0, double rank_scale = 1.0);

/// Mean over `batch` of ||denoise(x, sigma, cond) - target||^2.
double reconstruction_loss(const BackboneParams& backbone, const LayerUpdates& updates,
                           std::span<const TrainingSample> batch);

/// Loss and gradient with respect to the adapter factors (flatten() order);
/// the backbone is read-only.
LossAndGradient adapter_loss_and_gradient(const BackboneParams& backbone, const AdapterWeights& adapter,
                                          std::span<const TrainingSample> batch, double rank_scale = 1.0);

/// Loss and gradient with respect to every backbone weight and bias (layer
/// order, weight row-major then bias).
LossAndGradient backbone_loss_and_gradient(const BackboneParams& backbone, std::span<const TrainingSample> batch);

std::vector<double> flatten(const BackboneParams& params);
void assign(BackboneParams& params, std::span<const double> flat);

/// Pre-trains the denoiser on (cond, target) pairs with plain SGD: each step
/// draws batch_size pairs, sigma ~ U[0,1], and noises the target.
TrainedBackbone train_backbone(std::span<const TrainingPair> data, const BackboneDims& dims,
                               const TrainConfig& config);

/// Trains one character's low-rank factors against its reference frames under
/// condition `cond`; the backbone is never written. Factors are rounded to
/// single precision at the end so they survive persistence unchanged.
AdapterWeights train_adapter(const BackboneParams& backbone, const std::string& character_id,
                             std::span<const FeatureFrame> refs, std::span<const double> cond,
                             const TrainConfig& config);

/// Deterministic batch of reconstruction samples drawn from (cond, target)
/// pairs, as used by both trainers.
std::vector<TrainingSample> draw_batch(std::span<const TrainingPair> data, std::size_t batch_size,
                                       std::uint64_t seed);

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  double analytic_norm = 0.0;
};

/// Compares the analytic gradient returned by `loss_at` against central
/// differences, coordinate by coordinate. Relative error uses
/// max(|analytic|, |numeric|, 1e-6) as denominator.
GradCheckResult grad_check(const std::function<LossAndGradient(std::span<const double>)>& loss_at,
                           std::span<const double> params, double epsilon);

void write_loss_trace(std::ostream& out, std::span<const double> trace);

}  // namespace charcom
