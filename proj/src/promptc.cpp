#include "charcom/promptc.h"

#include <algorithm>
#include <cctype>
#include <set>

#include "charcom/errors.h"
#include "charcom/random.h"

namespace charcom {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

bool has_token(std::string_view word) {
  return std::any_of(word.begin(), word.end(), [](char c) { return !is_punct(c); });
}

// Trims whitespace and trailing sentence punctuation so delimiters stay unambiguous.
std::string clean_section(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && is_space(text[begin])) ++begin;
  while (end > begin && (is_space(text[end - 1]) || text[end - 1] == '.' || text[end - 1] == ';')) --end;
  return std::string(text.substr(begin, end - begin));
}

std::string collapse_spaces(std::string_view text) {
  std::string out;
  for (auto w : split_words(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

ScenePrompt compile_in_order(const SceneSpec& scene, std::span<const CharacterCard> registry,
                             std::vector<std::string> order, const TokenBudget& budget) {
  ScenePrompt prompt;
  prompt.structured = true;
  std::string characters;
  for (const auto& id : order) {
    const auto& card = find_card(registry, id);
    PromptSegment seg;
    seg.kind = SegmentKind::kCharacter;
    seg.character_id = id;
    seg.text = clean_section(card.trigger) + " " + clean_section(compress_attributes(card.attributes, budget));
    seg.token_count = count_tokens(seg.text);
    if (!characters.empty()) characters += kSegmentDelimiter;
    characters += seg.text;
    prompt.segments.push_back(std::move(seg));
  }
  prompt.text = characters;
  auto append_section = [&](SegmentKind kind, std::string_view raw) {
    std::string text = clean_section(raw);
    if (text.empty()) return;
    if (!prompt.text.empty()) prompt.text += kSectionDelimiter;
    prompt.text += text;
    prompt.segments.push_back({kind, {}, text, count_tokens(text)});
  };
  append_section(SegmentKind::kAction, scene.action);
  append_section(SegmentKind::kStyle, scene.style);
  prompt.cast = std::move(order);
  return prompt;
}

std::vector<std::string> checked_cast(const SceneSpec& scene, std::span<const CharacterCard> registry) {
  std::set<std::string> seen;
  for (const auto& id : scene.cast) {
    if (!seen.insert(id).second) throw InvalidArgument("scene cast lists '" + id + "' twice");
    find_card(registry, id);
  }
  return {seen.begin(), seen.end()};  // ascending id order
}

}  // namespace

void validate_registry(std::span<const CharacterCard> registry) {
  std::set<std::string> ids;
  std::set<std::string> triggers;
  for (const auto& card : registry) {
    if (card.character_id.empty()) throw InvalidArgument("registry: empty character id");
    if (!ids.insert(card.character_id).second) throw InvalidArgument("registry: duplicate id '" + card.character_id + "'");
    if (count_tokens(card.trigger) == 0) throw InvalidArgument("registry: empty trigger for '" + card.character_id + "'");
    if (!triggers.insert(card.trigger).second) throw InvalidArgument("registry: duplicate trigger '" + card.trigger + "'");
    if (count_tokens(card.attributes) == 0) {
      throw InvalidArgument("registry: empty attributes for '" + card.character_id + "'");
    }
  }
}

const CharacterCard& find_card(std::span<const CharacterCard> registry, std::string_view character_id) {
  for (const auto& card : registry) {
    if (card.character_id == character_id) return card;
  }
  throw NotFound("unknown character '" + std::string(character_id) + "'");
}

std::string ScenePrompt::unit_text(std::string_view character_id) const {
  if (!structured) return text;
  const PromptSegment* own = nullptr;
  for (const auto& seg : segments) {
    if (seg.kind == SegmentKind::kCharacter && seg.character_id == character_id) own = &seg;
  }
  if (!own) throw NotFound("character '" + std::string(character_id) + "' is not in this prompt");
  std::string unit = own->text;
  for (const auto& seg : segments) {
    if (seg.kind == SegmentKind::kAction || seg.kind == SegmentKind::kStyle) {
      unit += kSectionDelimiter;
      unit += seg.text;
    }
  }
  return unit;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  for (auto word : split_words(text)) {
    std::string token;
    for (char c : word) {
      if (!is_punct(c)) token += c;
    }
    if (!token.empty()) tokens.push_back(std::move(token));
  }
  return tokens;
}

std::size_t count_tokens(std::string_view text) { return tokenize(text).size(); }

std::string compress_attributes(std::string_view attributes, const TokenBudget& budget) {
  if (budget.max_tokens == 0) throw InvalidArgument("compress_attributes: max_tokens must be >= 1");
  const std::size_t total = count_tokens(attributes);
  if (total == 0) throw InvalidArgument("compress_attributes: empty attribute text");
  if (total <= budget.max_tokens) return std::string(attributes);

  std::string out;
  std::size_t kept = 0;
  for (auto word : split_words(attributes)) {
    const bool counts = has_token(word);
    if (counts && kept == budget.max_tokens) break;
    if (!out.empty()) out += ' ';
    out += word;
    if (counts) ++kept;
  }
  while (!out.empty() && (out.back() == ',' || out.back() == ';' || out.back() == ':')) out.pop_back();
  return out;
}

ScenePrompt compile(const SceneSpec& scene, std::span<const CharacterCard> registry, const TokenBudget& budget) {
  return compile_in_order(scene, registry, checked_cast(scene, registry), budget);
}

ScenePrompt scramble_order(const SceneSpec& scene, std::span<const CharacterCard> registry, std::uint64_t seed,
                           const TokenBudget& budget) {
  auto order = checked_cast(scene, registry);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return compile_in_order(scene, registry, std::move(order), budget);
}

ScenePrompt flat_prompt(const SceneSpec& scene, std::span<const CharacterCard> registry) {
  ScenePrompt prompt;
  prompt.structured = false;
  prompt.cast = checked_cast(scene, registry);

  std::string action = scene.action;
  for (const auto& card : registry) {
    if (card.trigger.empty()) continue;
    for (auto pos = action.find(card.trigger); pos != std::string::npos; pos = action.find(card.trigger, pos)) {
      action.erase(pos, card.trigger.size());
    }
  }

  std::vector<std::string> parts;
  for (const auto& id : prompt.cast) parts.push_back(find_card(registry, id).attributes);
  parts.push_back(action);
  parts.push_back(scene.style);
  std::string joined;
  for (const auto& p : parts) {
    joined += ' ';
    joined += p;
  }
  prompt.text = collapse_spaces(joined);
  prompt.segments.push_back({SegmentKind::kFlat, {}, prompt.text, count_tokens(prompt.text)});
  return prompt;
}

}  // namespace charcom
