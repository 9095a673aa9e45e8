#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charcom/backbone.h"

namespace charcom {

/// Registration unit for one character.
struct CharacterCard {
  std::string character_id;
  std::string trigger;     // unique token sequence that names the character in prompts
  std::string attributes;  // fixed visual traits, free text
  std::vector<FeatureFrame> references;
  std::vector<double> anchor;
};

/// Throws InvalidArgument on empty/duplicate triggers, empty attributes or
/// duplicate ids.
void validate_registry(std::span<const CharacterCard> registry);
const CharacterCard& find_card(std::span<const CharacterCard> registry, std::string_view character_id);

struct SceneSpec {
  std::string action;  // authored with trigger mentions; never rewritten
  std::string style;
  std::vector<std::string> cast;
  std::size_t scene_index = 0;
};

enum class SegmentKind { kCharacter, kAction, kStyle, kFlat };

struct PromptSegment {
  SegmentKind kind = SegmentKind::kCharacter;
  std::string character_id;  // kCharacter only
  std::string text;
  std::size_t token_count = 0;
};

struct ScenePrompt {
  std::string text;
  std::vector<PromptSegment> segments;
  std::vector<std::string> cast;  // order in which characters appear in `text`
  std::vector<double> embedding;  // filled by the fusion stage
  bool structured = true;

  /// Text of the localized unit for one cast member: its own segment plus
  /// the action and style segments. Unstructured prompts have no units and
  /// return the whole text.
  std::string unit_text(std::string_view character_id) const;
};

struct TokenBudget {
  std::size_t min_tokens = 15;  // advisory: shorter inputs pass through
  std::size_t max_tokens = 25;
};

inline constexpr std::string_view kSegmentDelimiter = "; ";
inline constexpr std::string_view kSectionDelimiter = ". ";

/// Whitespace-separated words with ASCII punctuation removed; words that are
/// pure punctuation are dropped.
std::vector<std::string> tokenize(std::string_view text);
std::size_t count_tokens(std::string_view text);

/// Keeps the leading words of `attributes` up to the token budget; text within
/// budget is returned unchanged.
std::string compress_attributes(std::string_view attributes, const TokenBudget& budget = {});

/// Canonical structured prompt: character segments "trigger attributes" in
/// ascending id order, then the action, then the style.
ScenePrompt compile(const SceneSpec& scene, std::span<const CharacterCard> registry, const TokenBudget& budget = {});

/// As compile, but the cast is shuffled with `seed` instead of sorted.
ScenePrompt scramble_order(const SceneSpec& scene, std::span<const CharacterCard> registry, std::uint64_t seed,
                           const TokenBudget& budget = {});

/// Unstructured baseline: raw attribute texts, action and style in a single
/// stream with no trigger tokens and no compression.
ScenePrompt flat_prompt(const SceneSpec& scene, std::span<const CharacterCard> registry);

}  // namespace charcom
