#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charcom/backbone.h"
#include "charcom/promptc.h"
#include "charcom/trainer.h"

namespace charcom {

/// Signed feature hashing of case-folded tokens into `dimension` buckets,
/// L2-normalized. Token order is irrelevant. Different salts give independent
/// embedding spaces.
struct TextEmbedder {
  std::size_t dimension = 256;
  std::uint64_t salt = 0x5bd1e9955bd1e995ULL;
};

/// Reference frames enter the visual space unchanged, zero-padded or
/// truncated to `dimension`.
struct RefEmbedder {
  std::size_t dimension = 256;
};

/// Two-tower stand-in: a semantic text encoder, and a visual encoder with
/// text and reference towers sharing one space.
struct DualEncoder {
  TextEmbedder semantic{256, 0x5bd1e9955bd1e995ULL};
  TextEmbedder visual_text{256, 0x27d4eb2f165667c5ULL};
  RefEmbedder visual_ref{256};
};

struct FusionCoefficients {
  double alpha = 1.0;
  double beta = 1.0;
  double weight_threshold = 0.6;
  std::optional<double> max_total_weight;  // cap on the sum of selected weights

  void validate() const;
};

struct PlanEntry {
  std::string character_id;
  double weight = 0.0;
  std::string reason;  // exclusion reason; empty for selected entries
};

struct FusionPlan {
  std::string prompt_id;
  std::vector<PlanEntry> selected;  // ascending id order
  std::vector<PlanEntry> excluded;

  double total_weight() const;
};

std::vector<double> embed_text(const TextEmbedder& embedder, std::string_view text);
std::vector<double> embed_references(const RefEmbedder& embedder, std::span<const FeatureFrame> frames);

/// Cosine similarity; 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);
double logistic(double x);

/// sigma(alpha * cos_text + beta * cos_ref)
double relevance_from_cosines(double cos_text, double cos_ref, const FusionCoefficients& coeffs);

struct RelevanceTerms {
  double cos_text = 0.0;
  double cos_ref = 0.0;
  double weight = 0.0;
};

RelevanceTerms relevance_terms(std::string_view prompt_text, const CharacterCard& card, const FusionCoefficients& coeffs,
                               const DualEncoder& encoders);

double relevance_weight(std::string_view prompt_text, const CharacterCard& card, const FusionCoefficients& coeffs,
                        const DualEncoder& encoders);

/// Scores every registered character against the prompt and keeps those at
/// or above the threshold. Fills prompt.embedding when it is empty.
FusionPlan build_plan(ScenePrompt& prompt, std::span<const CharacterCard> registry, const FusionCoefficients& coeffs,
                      const DualEncoder& encoders, std::string prompt_id = {});

/// Per-layer weighted update sets for the selected adapters. Throws NotFound
/// naming the first selected character without a stored adapter.
LayerUpdates plan_to_updates(const FusionPlan& plan, const std::map<std::string, AdapterWeights>& adapters,
                             double rank_scale = 1.0);

}  // namespace charcom
