#include "charcom/fusion.h"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "charcom/errors.h"
#include "charcom/random.h"

namespace charcom {

namespace {

void normalize(std::vector<double>& v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (n2 == 0.0) return;
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
}

std::string case_fold(std::string token) {
  std::transform(token.begin(), token.end(), token.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return token;
}

}  // namespace

void FusionCoefficients::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta)) throw InvalidArgument("FusionCoefficients: non-finite alpha/beta");
  if (!(weight_threshold >= 0.0 && weight_threshold <= 1.0)) {
    throw InvalidArgument("FusionCoefficients: weight_threshold outside [0,1]");
  }
  if (max_total_weight && !(*max_total_weight > 0.0)) {
    throw InvalidArgument("FusionCoefficients: max_total_weight must be > 0");
  }
}

double FusionPlan::total_weight() const {
  double s = 0.0;
  for (const auto& e : selected) s += e.weight;
  return s;
}

std::vector<double> embed_text(const TextEmbedder& embedder, std::string_view text) {
  if (embedder.dimension == 0) throw InvalidArgument("TextEmbedder: dimension must be >= 1");
  std::vector<double> v(embedder.dimension, 0.0);
  for (auto& token : tokenize(text)) {
    const std::uint64_t h = mix64(fnv1a64(case_fold(std::move(token))) ^ embedder.salt);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[(h & 0x7fffffffffffffffULL) % embedder.dimension] += sign;
  }
  normalize(v);
  return v;
}

std::vector<double> embed_references(const RefEmbedder& embedder, std::span<const FeatureFrame> frames) {
  if (frames.empty()) throw InvalidArgument("embed_references: empty reference set");
  std::vector<double> v(embedder.dimension, 0.0);
  for (const auto& f : frames) {
    const std::size_t n = std::min(f.values.size(), embedder.dimension);
    for (std::size_t i = 0; i < n; ++i) v[i] += f.values[i];
  }
  for (double& x : v) x /= static_cast<double>(frames.size());
  normalize(v);
  return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double relevance_from_cosines(double cos_text, double cos_ref, const FusionCoefficients& coeffs) {
  return logistic(coeffs.alpha * cos_text + coeffs.beta * cos_ref);
}

RelevanceTerms relevance_terms(std::string_view prompt_text, const CharacterCard& card, const FusionCoefficients& coeffs,
                               const DualEncoder& encoders) {
  if (card.references.empty()) {
    throw InvalidArgument("relevance_weight: '" + card.character_id + "' has no reference frames");
  }
  if (encoders.visual_text.dimension != encoders.visual_ref.dimension) {
    throw InvalidArgument("relevance_weight: visual towers disagree on dimension");
  }
  RelevanceTerms terms;
  terms.cos_text =
      cosine(embed_text(encoders.semantic, prompt_text), embed_text(encoders.semantic, card.attributes));
  terms.cos_ref = cosine(embed_text(encoders.visual_text, prompt_text),
                         embed_references(encoders.visual_ref, card.references));
  terms.weight = relevance_from_cosines(terms.cos_text, terms.cos_ref, coeffs);
  return terms;
}

double relevance_weight(std::string_view prompt_text, const CharacterCard& card, const FusionCoefficients& coeffs,
                        const DualEncoder& encoders) {
  return relevance_terms(prompt_text, card, coeffs, encoders).weight;
}

FusionPlan build_plan(ScenePrompt& prompt, std::span<const CharacterCard> registry, const FusionCoefficients& coeffs,
                      const DualEncoder& encoders, std::string prompt_id) {
  coeffs.validate();
  if (registry.empty()) throw InvalidArgument("build_plan: empty registry");
  if (prompt.embedding.empty()) prompt.embedding = embed_text(encoders.semantic, prompt.text);

  std::vector<const CharacterCard*> cards;
  for (const auto& c : registry) cards.push_back(&c);
  std::sort(cards.begin(), cards.end(),
            [](const CharacterCard* a, const CharacterCard* b) { return a->character_id < b->character_id; });

  FusionPlan plan;
  plan.prompt_id = std::move(prompt_id);
  for (const auto* card : cards) {
    const double w = relevance_weight(prompt.text, *card, coeffs, encoders);
    if (w >= coeffs.weight_threshold) {
      plan.selected.push_back({card->character_id, w, {}});
    } else {
      plan.excluded.push_back({card->character_id, w, "below threshold"});
    }
  }
  if (coeffs.max_total_weight) {
    const double total = plan.total_weight();
    if (total > *coeffs.max_total_weight) {
      const double scale = *coeffs.max_total_weight / total;
      for (auto& e : plan.selected) e.weight *= scale;
    }
  }
  return plan;
}

LayerUpdates plan_to_updates(const FusionPlan& plan, const std::map<std::string, AdapterWeights>& adapters,
                             double rank_scale) {
  if (plan.selected.empty()) return {};
  std::vector<const PlanEntry*> entries;
  for (const auto& e : plan.selected) entries.push_back(&e);
  std::sort(entries.begin(), entries.end(),
            [](const PlanEntry* a, const PlanEntry* b) { return a->character_id < b->character_id; });

  LayerUpdates updates(BackboneParams::kAdaptedLayers.size());
  for (auto& set : updates) set.rank_scale = rank_scale;
  for (const auto* e : entries) {
    const auto it = adapters.find(e->character_id);
    if (it == adapters.end()) throw NotFound("no adapter stored for character '" + e->character_id + "'");
    const auto& adapter = it->second;
    if (adapter.layers.size() != updates.size()) {
      throw InvalidArgument("adapter '" + e->character_id + "' has wrong layer count");
    }
    for (std::size_t l = 0; l < updates.size(); ++l) {
      updates[l].entries.push_back({e->character_id, adapter.layers[l], e->weight});
    }
  }
  return updates;
}

}  // namespace charcom
