#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "charcom/promptc.h"

namespace charcom {

struct Story {
  std::size_t story_id = 0;
  std::string protagonist;
  std::vector<SceneSpec> scenes;
};

struct StoryBenchmark {
  std::uint64_t seed = 0;
  std::vector<Story> stories;

  std::size_t scene_count() const;
};

struct BenchmarkOptions {
  std::size_t n_stories = 20;
  std::size_t prompts_per_story = 5;
  std::size_t min_cast = 1;
  std::size_t max_cast = 3;
  std::optional<std::size_t> fixed_cast;  // overrides min/max when set
};

/// Templated story synthesis. Each story keeps one protagonist and one style;
/// every scene casts the protagonist plus seeded companions, and the action
/// text names the cast by trigger.
StoryBenchmark gen_benchmark(std::uint64_t seed, std::span<const CharacterCard> pool,
                             const BenchmarkOptions& options = {});

/// One JSON object per line: story_id, scene_index, cast, action, style.
void write_benchmark_jsonl(std::ostream& out, const StoryBenchmark& bench);
StoryBenchmark read_benchmark_jsonl(std::istream& in);

}  // namespace charcom
