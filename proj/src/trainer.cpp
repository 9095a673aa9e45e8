#include "charcom/trainer.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "charcom/errors.h"
#include "charcom/random.h"

namespace charcom {

namespace {

struct AdapterSlot {
  const LowRankUpdate* update = nullptr;
  double scale = 1.0;
};

// Gradient buffers laid out like flatten(); either pointer may be null.
struct GradientSink {
  std::vector<double>* backbone = nullptr;
  std::vector<double>* adapter = nullptr;
};

std::vector<std::size_t> backbone_offsets(const BackboneParams& params) {
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& layer : params.layers) {
    offsets.push_back(off);
    off += layer.weight.size() + layer.bias.size();
  }
  offsets.push_back(off);
  return offsets;
}

std::vector<std::size_t> adapter_offsets(const AdapterWeights& adapter) {
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& layer : adapter.layers) {
    offsets.push_back(off);
    off += layer.parameter_count();
  }
  offsets.push_back(off);
  return offsets;
}

// Accumulates d(loss)/d(params) for one sample given d(loss)/d(output).
void backpropagate(const BackboneParams& params, std::span<const AdapterSlot> adapters, const ForwardTrace& trace,
                   std::vector<double> delta, const GradientSink& sink, std::span<const std::size_t> bb_offsets,
                   std::span<const std::size_t> ad_offsets) {
  for (std::size_t l = BackboneParams::kLayerCount; l-- > 0;) {
    const auto& layer = params.layers[l];
    if (l < 3) {
      const auto& h = trace.hidden[l];
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0 - h[i] * h[i];
    }
    std::span<const double> in = l == 0 ? std::span<const double>(trace.input) : trace.hidden[l - 1];

    if (sink.backbone) {
      double* g = sink.backbone->data() + bb_offsets[l];
      for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        for (std::size_t c = 0; c < layer.weight.cols(); ++c) g[r * layer.weight.cols() + c] += d * in[c];
      }
      double* gb = g + layer.weight.size();
      for (std::size_t r = 0; r < delta.size(); ++r) gb[r] += delta[r];
    }

    const AdapterSlot* slot = nullptr;
    std::size_t slot_index = 0;
    for (std::size_t a = 0; a < BackboneParams::kAdaptedLayers.size() && a < adapters.size(); ++a) {
      if (BackboneParams::kAdaptedLayers[a] == l && adapters[a].update) {
        slot = &adapters[a];
        slot_index = a;
      }
    }

    if (l == 0 && !slot) break;

    std::vector<double> delta_in(in.size(), 0.0);
    for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const auto w = layer.weight.row(r);
      for (std::size_t c = 0; c < w.size(); ++c) delta_in[c] += w[c] * d;
    }

    if (slot) {
      const auto& b = slot->update->b_factor();
      const auto& a = slot->update->a_factor();
      const std::size_t rank = b.cols();
      // bt_delta = s * B^T delta ; projected = A in
      std::vector<double> bt_delta(rank, 0.0);
      for (std::size_t r = 0; r < b.rows(); ++r) {
        for (std::size_t k = 0; k < rank; ++k) bt_delta[k] += b(r, k) * delta[r];
      }
      for (double& v : bt_delta) v *= slot->scale;
      const std::vector<double> projected = a.multiply(in);
      if (sink.adapter) {
        double* gb = sink.adapter->data() + ad_offsets[slot_index];
        for (std::size_t r = 0; r < b.rows(); ++r) {
          const double d = slot->scale * delta[r];
          for (std::size_t k = 0; k < rank; ++k) gb[r * rank + k] += d * projected[k];
        }
        double* ga = gb + b.size();
        for (std::size_t k = 0; k < rank; ++k) {
          for (std::size_t c = 0; c < a.cols(); ++c) ga[k * a.cols() + c] += bt_delta[k] * in[c];
        }
      }
      for (std::size_t k = 0; k < rank; ++k) {
        for (std::size_t c = 0; c < a.cols(); ++c) delta_in[c] += a(k, c) * bt_delta[k];
      }
    }
    if (l == 0) break;
    delta = std::move(delta_in);
  }
}

double accumulate_batch(const BackboneParams& params, const LayerUpdates& updates, std::span<const AdapterSlot> slots,
                        std::span<const TrainingSample> batch, const GradientSink& sink,
                        std::span<const std::size_t> bb_offsets, std::span<const std::size_t> ad_offsets) {
  if (batch.empty()) throw InvalidArgument("empty training batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& s : batch) {
    const ForwardTrace trace = denoise_traced(params, updates, s.x, s.sigma, s.cond);
    if (s.target.size() != trace.output.size()) throw InvalidArgument("training target has wrong dimension");
    std::vector<double> delta(trace.output.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double diff = trace.output[i] - s.target[i];
      loss += diff * diff * inv;
      delta[i] = 2.0 * diff * inv;
    }
    if (sink.backbone || sink.adapter) backpropagate(params, slots, trace, std::move(delta), sink, bb_offsets, ad_offsets);
  }
  return loss;
}

std::vector<AdapterSlot> slots_for(const AdapterWeights& adapter, double rank_scale) {
  std::vector<AdapterSlot> slots;
  for (const auto& layer : adapter.layers) slots.push_back({&layer, rank_scale});
  return slots;
}

void check_adapter_shape(const BackboneParams& backbone, const AdapterWeights& adapter) {
  if (adapter.layers.size() != BackboneParams::kAdaptedLayers.size()) {
    throw InvalidArgument("adapter '" + adapter.character_id + "' has wrong layer count");
  }
  for (std::size_t a = 0; a < adapter.layers.size(); ++a) {
    const auto& w = backbone.layers[BackboneParams::kAdaptedLayers[a]].weight;
    if (adapter.layers[a].d_out() != w.rows() || adapter.layers[a].d_in() != w.cols()) {
      throw InvalidArgument("adapter '" + adapter.character_id + "' does not match backbone layer shapes");
    }
  }
}

double round_to_single(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("TrainConfig: learning_rate must be > 0");
  if (steps == 0) throw InvalidArgument("TrainConfig: steps must be >= 1");
  if (batch_size == 0) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  if (rank == 0) throw InvalidArgument("TrainConfig: rank must be >= 1");
}

std::size_t AdapterWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

std::vector<double> AdapterWeights::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.b_factor().data().begin(), l.b_factor().data().end());
    flat.insert(flat.end(), l.a_factor().data().begin(), l.a_factor().data().end());
  }
  return flat;
}

void AdapterWeights::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw InvalidArgument("AdapterWeights::assign: wrong parameter count");
  std::size_t off = 0;
  for (auto& l : layers) {
    for (auto* m : {&l.b_factor(), &l.a_factor()}) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), m->size(), m->data().begin());
      off += m->size();
    }
  }
}

bool AdapterWeights::same_factors(const AdapterWeights& other) const {
  return character_id == other.character_id && rank == other.rank && layers == other.layers;
}

AdapterWeights init_adapter(const BackboneParams& backbone, const std::string& character_id, std::size_t rank,
                            const InitSpec& init, std::uint64_t seed) {
  backbone.validate();
  AdapterWeights adapter;
  adapter.character_id = character_id;
  adapter.rank = rank;
  for (std::size_t a = 0; a < BackboneParams::kAdaptedLayers.size(); ++a) {
    const auto& w = backbone.layers[BackboneParams::kAdaptedLayers[a]].weight;
    adapter.layers.push_back(make_lowrank(w.rows(), w.cols(), rank, init, derive_seed(seed, "adapter-init", {a})));
  }
  return adapter;
}

LayerUpdates adapter_updates(const AdapterWeights& adapter, double weight, double rank_scale) {
  LayerUpdates updates;
  for (const auto& layer : adapter.layers) {
    WeightedUpdateSet set;
    set.rank_scale = rank_scale;
    set.entries.push_back({adapter.character_id, layer, weight});
    updates.push_back(std::move(set));
  }
  return updates;
}

double reconstruction_loss(const BackboneParams& backbone, const LayerUpdates& updates,
                           std::span<const TrainingSample> batch) {
  return accumulate_batch(backbone, updates, {}, batch, {}, {}, {});
}

LossAndGradient adapter_loss_and_gradient(const BackboneParams& backbone, const AdapterWeights& adapter,
                                          std::span<const TrainingSample> batch, double rank_scale) {
  check_adapter_shape(backbone, adapter);
  LossAndGradient out;
  out.gradient.assign(adapter.parameter_count(), 0.0);
  const auto slots = slots_for(adapter, rank_scale);
  const auto updates = adapter_updates(adapter, 1.0, rank_scale);
  const auto offsets = adapter_offsets(adapter);
  out.loss = accumulate_batch(backbone, updates, slots, batch, {nullptr, &out.gradient}, {}, offsets);
  return out;
}

LossAndGradient backbone_loss_and_gradient(const BackboneParams& backbone, std::span<const TrainingSample> batch) {
  LossAndGradient out;
  const auto offsets = backbone_offsets(backbone);
  out.gradient.assign(offsets.back(), 0.0);
  out.loss = accumulate_batch(backbone, {}, {}, batch, {&out.gradient, nullptr}, offsets, {});
  return out;
}

std::vector<double> flatten(const BackboneParams& params) {
  std::vector<double> flat;
  for (const auto& layer : params.layers) {
    flat.insert(flat.end(), layer.weight.data().begin(), layer.weight.data().end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

void assign(BackboneParams& params, std::span<const double> flat) {
  const auto offsets = backbone_offsets(params);
  if (flat.size() != offsets.back()) throw InvalidArgument("assign: wrong backbone parameter count");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    auto it = flat.begin() + static_cast<std::ptrdiff_t>(offsets[l]);
    std::copy_n(it, layer.weight.size(), layer.weight.data().begin());
    std::copy_n(it + static_cast<std::ptrdiff_t>(layer.weight.size()), layer.bias.size(), layer.bias.begin());
  }
}

std::vector<TrainingSample> draw_batch(std::span<const TrainingPair> data, std::size_t batch_size,
                                       std::uint64_t seed) {
  if (data.empty()) throw InvalidArgument("draw_batch: no training data");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<TrainingSample> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const auto& pair = data[pick(rng)];
    TrainingSample s;
    s.sigma = unit(rng);
    s.x = forward_noise(pair.target, s.sigma, rng());
    s.cond = pair.cond;
    s.target = pair.target;
    batch.push_back(std::move(s));
  }
  return batch;
}

TrainedBackbone train_backbone(std::span<const TrainingPair> data, const BackboneDims& dims,
                               const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw InvalidArgument("train_backbone: empty training data");
  for (const auto& pair : data) {
    if (pair.cond.size() != dims.d_cond || pair.target.size() != dims.d_feat) {
      throw InvalidArgument("train_backbone: training pair has wrong dimensions");
    }
  }
  TrainedBackbone result;
  result.params = init_backbone(dims, derive_seed(config.seed, "backbone"));
  std::vector<double> flat = flatten(result.params);
  result.loss_trace.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch = draw_batch(data, config.batch_size, derive_seed(config.seed, "backbone-batch", {step}));
    const auto lg = backbone_loss_and_gradient(result.params, batch);
    result.loss_trace.push_back(lg.loss);
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= config.learning_rate * lg.gradient[i];
    assign(result.params, flat);
  }
  result.params.validate();
  return result;
}

AdapterWeights train_adapter(const BackboneParams& backbone, const std::string& character_id,
                             std::span<const FeatureFrame> refs, std::span<const double> cond,
                             const TrainConfig& config) {
  config.validate();
  if (refs.empty()) throw InvalidArgument("train_adapter: empty reference set for '" + character_id + "'");
  if (cond.size() != backbone.dims.d_cond) throw InvalidArgument("train_adapter: cond has wrong dimension");
  std::vector<TrainingPair> data;
  data.reserve(refs.size());
  for (const auto& f : refs) {
    if (f.values.size() != backbone.dims.d_feat) throw InvalidArgument("train_adapter: reference has wrong dimension");
    data.push_back({std::vector<double>(cond.begin(), cond.end()), f.values});
  }

  AdapterWeights adapter =
      init_adapter(backbone, character_id, config.rank, config.init, derive_seed(config.seed, "adapter"));
  std::vector<double> flat = adapter.flatten();
  adapter.loss_trace.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch = draw_batch(data, config.batch_size, derive_seed(config.seed, "adapter-batch", {step}));
    const auto lg = adapter_loss_and_gradient(backbone, adapter, batch, config.rank_scale);
    adapter.loss_trace.push_back(lg.loss);
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= config.learning_rate * lg.gradient[i];
    adapter.assign(flat);
  }
  std::transform(flat.begin(), flat.end(), flat.begin(), round_to_single);
  adapter.assign(flat);
  adapter.steps = config.steps;
  adapter.final_loss = adapter.loss_trace.back();
  return adapter;
}

GradCheckResult grad_check(const std::function<LossAndGradient(std::span<const double>)>& loss_at,
                           std::span<const double> params, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw InvalidArgument("grad_check: epsilon must be in (0, 1e-2]");
  const LossAndGradient analytic = loss_at(params);
  if (analytic.gradient.size() != params.size()) throw InvalidArgument("grad_check: gradient size mismatch");
  GradCheckResult result;
  std::vector<double> probe(params.begin(), params.end());
  double norm2 = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + epsilon;
    const double up = loss_at(probe).loss;
    probe[i] = original - epsilon;
    const double down = loss_at(probe).loss;
    probe[i] = original;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic.gradient[i];
    const double abs_err = std::abs(a - numeric);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
    result.max_relative_error = std::max(result.max_relative_error, abs_err / denom);
    norm2 += a * a;
  }
  result.analytic_norm = std::sqrt(norm2);
  return result;
}

void write_loss_trace(std::ostream& out, std::span<const double> trace) {
  const auto old_precision = out.precision(9);
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << ' ' << trace[i] << '\n';
  out.precision(old_precision);
}

}  // namespace charcom
