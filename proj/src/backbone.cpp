#include "charcom/backbone.h"

#include <cmath>
#include <cstring>
#include <numbers>

#include "charcom/errors.h"
#include "charcom/random.h"

namespace charcom {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidArgument(std::string(what) + ": non-finite value");
  }
}

double vector_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> apply_layer(const DenseLayer& layer, const WeightedUpdateSet* set, std::span<const double> in) {
  std::vector<double> z = set && !set->empty() ? fused_apply(layer.weight, *set, in) : layer.weight.multiply(in);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
  return z;
}

}  // namespace

void BackboneParams::validate() const {
  if (dims.d_feat == 0 || dims.d_hidden == 0 || dims.d_cond == 0) {
    throw InvalidArgument("BackboneParams: dimensions must be >= 1");
  }
  if (layers.size() != kLayerCount) throw InvalidArgument("BackboneParams: expected 4 layers");
  const std::array<std::size_t, kLayerCount + 1> widths = {dims.input_dim(), dims.d_hidden, dims.d_hidden,
                                                           dims.d_hidden, dims.d_feat};
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    const auto& layer = layers[l];
    if (layer.weight.rows() != widths[l + 1] || layer.weight.cols() != widths[l] ||
        layer.bias.size() != widths[l + 1]) {
      throw InvalidArgument("BackboneParams: layer " + std::to_string(l) + " has wrong shape");
    }
    require_finite(layer.weight.data(), "BackboneParams");
    require_finite(layer.bias, "BackboneParams");
  }
}

BackboneParams init_backbone(const BackboneDims& dims, std::uint64_t seed) {
  BackboneParams params;
  params.dims = dims;
  const std::array<std::size_t, BackboneParams::kLayerCount + 1> widths = {dims.input_dim(), dims.d_hidden,
                                                                           dims.d_hidden, dims.d_hidden, dims.d_feat};
  for (std::size_t l = 0; l < BackboneParams::kLayerCount; ++l) {
    Rng rng(derive_seed(seed, "backbone-init", {l}));
    const double stddev = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    params.layers.push_back(
        {DenseMatrix(widths[l + 1], widths[l], gaussian_vector(widths[l + 1] * widths[l], rng, stddev)),
         std::vector<double>(widths[l + 1], 0.0)});
  }
  params.validate();
  return params;
}

std::uint64_t parameter_hash(const BackboneParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::span<const double> values) {
    for (double v : values) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  };
  for (const auto& layer : params.layers) {
    feed(layer.weight.data());
    feed(layer.bias);
  }
  return h;
}

void CharacterDistribution::validate() const {
  if (anchor.empty()) throw InvalidArgument("CharacterDistribution: empty anchor");
  require_finite(anchor, "CharacterDistribution");
  if (std::abs(vector_norm(anchor) - 1.0) > 1e-9) {
    throw InvalidArgument("CharacterDistribution: anchor of '" + character_id + "' is not unit norm");
  }
  if (!(spread >= 0.0) || !std::isfinite(spread)) {
    throw InvalidArgument("CharacterDistribution: spread must be finite and non-negative");
  }
  for (const auto& offset : mixture_offsets) {
    if (offset.size() != anchor.size()) throw InvalidArgument("CharacterDistribution: offset dimension mismatch");
  }
}

NoiseSchedule NoiseSchedule::uniform(std::size_t steps, StepRule rule) {
  if (steps == 0) throw InvalidArgument("NoiseSchedule: at least one step required");
  NoiseSchedule s;
  s.rule = rule;
  for (std::size_t k = steps; k >= 1; --k) s.levels.push_back(static_cast<double>(k) / static_cast<double>(steps));
  return s;
}

void NoiseSchedule::validate() const {
  if (levels.empty()) throw InvalidArgument("NoiseSchedule: empty schedule");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0 && levels[i] <= 1.0)) throw InvalidArgument("NoiseSchedule: level outside (0, 1]");
    if (i > 0 && !(levels[i] < levels[i - 1])) throw InvalidArgument("NoiseSchedule: levels not strictly decreasing");
  }
}

std::vector<FeatureFrame> sample_reference_set(const CharacterDistribution& dist, std::size_t k, std::uint64_t seed) {
  dist.validate();
  if (k == 0) throw InvalidArgument("sample_reference_set: k must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<FeatureFrame> frames;
  frames.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    FeatureFrame frame;
    frame.values = dist.anchor;
    if (!dist.mixture_offsets.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, dist.mixture_offsets.size() - 1);
      const auto& offset = dist.mixture_offsets[pick(rng)];
      for (std::size_t d = 0; d < offset.size(); ++d) frame.values[d] += offset[d];
    }
    for (double& v : frame.values) v += dist.spread * normal(rng);
    frame.characters_present = {dist.character_id};
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<double> forward_noise(std::span<const double> y, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("forward_noise: sigma must be >= 0");
  std::vector<double> x(y.begin(), y.end());
  if (sigma == 0.0) return x;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : x) v += sigma * normal(rng);
  return x;
}

std::array<double, kSigmaEmbeddingDim> sigma_embedding(double sigma) {
  const double angle = 2.0 * std::numbers::pi * sigma;
  return {sigma, sigma * sigma, std::sin(angle), std::cos(angle)};
}

ForwardTrace denoise_traced(const BackboneParams& params, const LayerUpdates& updates, std::span<const double> x,
                            double sigma, std::span<const double> cond) {
  const auto& dims = params.dims;
  if (x.size() != dims.d_feat) {
    throw InvalidArgument("denoise: x has length " + std::to_string(x.size()) + ", expected " +
                          std::to_string(dims.d_feat));
  }
  if (cond.size() != dims.d_cond) {
    throw InvalidArgument("denoise: cond has length " + std::to_string(cond.size()) + ", expected " +
                          std::to_string(dims.d_cond));
  }
  if (!updates.empty() && updates.size() != BackboneParams::kAdaptedLayers.size()) {
    throw InvalidArgument("denoise: expected one update set per adapted layer");
  }

  ForwardTrace trace;
  trace.input.reserve(dims.input_dim());
  trace.input.insert(trace.input.end(), x.begin(), x.end());
  const auto emb = sigma_embedding(sigma);
  trace.input.insert(trace.input.end(), emb.begin(), emb.end());
  trace.input.insert(trace.input.end(), cond.begin(), cond.end());

  std::span<const double> current = trace.input;
  for (std::size_t l = 0; l < 3; ++l) {
    const WeightedUpdateSet* set = nullptr;
    if (!updates.empty()) {
      for (std::size_t a = 0; a < BackboneParams::kAdaptedLayers.size(); ++a) {
        if (BackboneParams::kAdaptedLayers[a] == l) set = &updates[a];
      }
    }
    auto z = apply_layer(params.layers[l], set, current);
    for (double& v : z) v = std::tanh(v);
    trace.hidden[l] = std::move(z);
    current = trace.hidden[l];
  }
  trace.output = apply_layer(params.layers[3], nullptr, current);
  return trace;
}

std::vector<double> denoise(const BackboneParams& params, const LayerUpdates& updates, std::span<const double> x,
                            double sigma, std::span<const double> cond) {
  return denoise_traced(params, updates, x, sigma, cond).output;
}

FeatureFrame sample_with(const DenoiseFn& denoiser, std::size_t d_feat, const NoiseSchedule& schedule,
                        std::uint64_t seed) {
  schedule.validate();
  Rng rng(seed);
  FeatureFrame frame;
  frame.values = gaussian_vector(d_feat, rng);
  auto& x = frame.values;
  const std::size_t steps = schedule.levels.size();
  for (std::size_t t = 0; t < steps; ++t) {
    const double level = schedule.levels[t];
    const double next = t + 1 < steps ? schedule.levels[t + 1] : 0.0;
    const double step =
        schedule.rule == StepRule::kEuler ? 1.0 - next / level : 1.0 / static_cast<double>(steps);
    const auto predicted = denoiser(x, level);
    if (predicted.size() != x.size()) throw InvalidArgument("sample: denoiser changed the frame width");
    for (std::size_t d = 0; d < x.size(); ++d) x[d] = std::lerp(x[d], predicted[d], step);
  }
  return frame;
}

FeatureFrame sample(const BackboneParams& params, const LayerUpdates& updates, std::span<const double> cond,
                    const NoiseSchedule& schedule, std::uint64_t seed) {
  return sample_with([&](std::span<const double> x, double sigma) { return denoise(params, updates, x, sigma, cond); },
                     params.dims.d_feat, schedule, seed);
}

}  // namespace charcom
