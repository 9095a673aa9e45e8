#include "charcom/benchmark.h"

#include <algorithm>
#include <array>
#include <istream>
#include "json.hpp"
#include <ostream>
#include <string_view>

#include "charcom/errors.h"
#include "charcom/random.h"

namespace charcom {

namespace {

constexpr std::array<std::string_view, 16> kActivities = {
    "share a picnic on a checkered blanket in the park",
    "read a picture book together under a big oak tree",
    "plant sunflower seeds in the backyard garden",
    "bake cookies in a cozy kitchen",
    "fly a bright kite on a windy hill",
    "walk to the market carrying a woven basket",
    "build a sandcastle at the seaside",
    "feed the ducks beside a quiet pond",
    "paint a rainbow on a large sheet of paper",
    "wave goodbye at the train station",
    "watch the stars from the balcony at night",
    "splash through puddles after the rain",
    "set the table for a family dinner",
    "play a drum and a tambourine in the living room",
    "ride bicycles along the river path",
    "wrap a birthday present with shiny ribbon",
};

constexpr std::array<std::string_view, 6> kStyles = {
    "storybook style illustration, soft colors, for young children",
    "watercolor picture book style, warm morning light",
    "flat vector cartoon style, bold outlines, bright palette",
    "gentle pastel crayon style, rounded shapes",
    "cozy gouache style, muted earthy tones",
    "clean animated film style, soft shading, vivid sky",
};

std::string join_triggers(const std::vector<std::string>& triggers) {
  std::string out;
  for (std::size_t i = 0; i < triggers.size(); ++i) {
    if (i > 0) out += i + 1 == triggers.size() ? " and " : ", ";
    out += triggers[i];
  }
  return out;
}

}  // namespace

std::size_t StoryBenchmark::scene_count() const {
  std::size_t n = 0;
  for (const auto& s : stories) n += s.scenes.size();
  return n;
}

StoryBenchmark gen_benchmark(std::uint64_t seed, std::span<const CharacterCard> pool, const BenchmarkOptions& options) {
  if (pool.empty()) throw InvalidArgument("gen_benchmark: empty character pool");
  const std::size_t lo = options.fixed_cast.value_or(options.min_cast);
  const std::size_t hi = options.fixed_cast.value_or(options.max_cast);
  if (lo == 0 || lo > hi) throw InvalidArgument("gen_benchmark: invalid cast size range");
  if (hi > pool.size()) {
    throw InvalidArgument("gen_benchmark: cast size " + std::to_string(hi) + " exceeds pool of " +
                          std::to_string(pool.size()));
  }
  if (options.n_stories == 0 || options.prompts_per_story == 0) {
    throw InvalidArgument("gen_benchmark: need at least one story and one prompt");
  }

  std::vector<const CharacterCard*> cards;
  for (const auto& c : pool) cards.push_back(&c);
  std::sort(cards.begin(), cards.end(),
            [](const CharacterCard* a, const CharacterCard* b) { return a->character_id < b->character_id; });

  StoryBenchmark bench;
  bench.seed = seed;
  for (std::size_t s = 0; s < options.n_stories; ++s) {
    Rng rng(derive_seed(seed, "story", {s}));
    Story story;
    story.story_id = s;
    const std::size_t hero = std::uniform_int_distribution<std::size_t>(0, cards.size() - 1)(rng);
    story.protagonist = cards[hero]->character_id;
    const std::string style(kStyles[std::uniform_int_distribution<std::size_t>(0, kStyles.size() - 1)(rng)]);

    std::vector<std::size_t> activities(kActivities.size());
    for (std::size_t i = 0; i < activities.size(); ++i) activities[i] = i;
    std::shuffle(activities.begin(), activities.end(), rng);

    for (std::size_t p = 0; p < options.prompts_per_story; ++p) {
      const std::size_t size = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
      std::vector<std::size_t> others;
      for (std::size_t i = 0; i < cards.size(); ++i) {
        if (i != hero) others.push_back(i);
      }
      std::shuffle(others.begin(), others.end(), rng);
      SceneSpec scene;
      scene.scene_index = p;
      scene.style = style;
      std::vector<std::string> triggers;
      scene.cast.push_back(cards[hero]->character_id);
      triggers.push_back(cards[hero]->trigger);
      for (std::size_t k = 0; k + 1 < size; ++k) {
        scene.cast.push_back(cards[others[k]]->character_id);
        triggers.push_back(cards[others[k]]->trigger);
      }
      const auto activity = kActivities[activities[p % activities.size()]];
      scene.action = join_triggers(triggers) + " " + std::string(activity);
      story.scenes.push_back(std::move(scene));
    }
    bench.stories.push_back(std::move(story));
  }
  return bench;
}

void write_benchmark_jsonl(std::ostream& out, const StoryBenchmark& bench) {
  for (const auto& story : bench.stories) {
    for (const auto& scene : story.scenes) {
      nlohmann::ordered_json j;
      j["story_id"] = story.story_id;
      j["scene_index"] = scene.scene_index;
      j["protagonist"] = story.protagonist;
      j["cast"] = scene.cast;
      j["action"] = scene.action;
      j["style"] = scene.style;
      j["seed"] = bench.seed;
      out << j.dump() << '\n';
    }
  }
}

StoryBenchmark read_benchmark_jsonl(std::istream& in) {
  StoryBenchmark bench;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      SceneSpec scene;
      scene.scene_index = j.at("scene_index").get<std::size_t>();
      scene.cast = j.at("cast").get<std::vector<std::string>>();
      scene.action = j.at("action").get<std::string>();
      scene.style = j.at("style").get<std::string>();
      const auto story_id = j.at("story_id").get<std::size_t>();
      bench.seed = j.value("seed", bench.seed);
      if (bench.stories.empty() || bench.stories.back().story_id != story_id) {
        bench.stories.push_back({story_id, j.value("protagonist", std::string()), {}});
      }
      bench.stories.back().scenes.push_back(std::move(scene));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("benchmark line: ") + e.what(), line_start);
    }
  }
  return bench;
}

}  // namespace charcom
