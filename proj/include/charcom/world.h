#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "charcom/backbone.h"
#include "charcom/fusion.h"
#include "charcom/metrics.h"
#include "charcom/promptc.h"
#include "charcom/trainer.h"

namespace charcom {

struct WorldConfig {
  BackboneDims dims;
  std::size_t n_characters = 4;
  std::size_t refs_per_character = 30;
  double spread = 0.1;
  std::size_t pretrain_pairs = 512;
  TrainConfig backbone_training = [] {
    TrainConfig c;
    c.learning_rate = 5e-2;
    c.steps = 3000;
    return c;
  }();
  TrainConfig adapter_training = [] {
    TrainConfig c;
    c.learning_rate = 5e-2;
    return c;
  }();
  std::size_t sampler_steps = 10;
  FusionCoefficients coefficients;
  DualEncoder encoders;
  // Prompt encoder feeding the denoiser's condition input (width d_cond).
  TextEmbedder condition_encoder{16, 0x165667b19e3779f9ULL};
  TokenBudget budget;

  void validate() const;
};

/// Everything a run needs: the frozen backbone, the character registry with
/// reference sets, one trained adapter per character, and the evaluation
/// references (kept at full size even when adapters are retrained on fewer).
struct World {
  WorldConfig config;
  std::uint64_t seed = 0;
  BackboneParams backbone;
  std::vector<double> backbone_loss_trace;
  std::vector<CharacterDistribution> distributions;
  std::vector<CharacterCard> registry;
  std::map<std::string, AdapterWeights> adapters;
  std::map<std::string, std::vector<FeatureFrame>> evaluation_references;
  std::size_t adapter_reference_count = 0;  // references per adapter; 0 = all

  std::vector<double> encode_condition(std::string_view prompt_text) const;
  NoiseSchedule schedule() const { return NoiseSchedule::uniform(config.sampler_steps); }
  /// Registry whose reference sets are the evaluation references.
  std::vector<CharacterCard> evaluation_registry() const;
  std::unique_ptr<IdentityEmbedder> identity_embedder() const;
};

/// Seeded character pool: random unit anchors and templated trigger and
/// attribute texts with no content words shared between characters.
std::vector<CharacterDistribution> make_distributions(std::size_t n, std::size_t d_feat, double spread,
                                                      std::uint64_t seed);
std::vector<CharacterCard> make_cards(std::span<const CharacterDistribution> distributions, std::size_t refs,
                                      std::uint64_t seed);

/// Pooled pre-training corpus: character samples paired with generic scene
/// prompts that never name a character.
std::vector<TrainingPair> pooled_pretraining_data(std::span<const CharacterDistribution> distributions,
                                                  const WorldConfig& config, std::uint64_t seed);

/// Condition used while training a character's adapter: its solo prompt.
std::vector<double> solo_condition(const World& world, const CharacterCard& card);

/// Builds characters, pre-trains the backbone and trains every adapter.
World build_world(const WorldConfig& config, std::uint64_t seed);

/// Creates characters and the backbone only (no adapters).
World build_base_world(const WorldConfig& config, std::uint64_t seed);

/// (Re)trains every adapter using the first `refs` reference frames of each
/// character; the fusion registry sees the same subset.
void train_all_adapters(World& world, std::size_t refs);

}  // namespace charcom
