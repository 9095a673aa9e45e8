#include "charcom/world.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <string_view>

#include "charcom/errors.h"
#include "charcom/random.h"

namespace charcom {

namespace {

constexpr std::array<std::string_view, 8> kNames = {"Mira", "Tobi", "Ansel", "Rosa", "Kenji", "Ola", "Bram", "Ines"};

// Comma-separated trait lists; no token is shared between two personas or with
// any scene template.
constexpr std::array<std::string_view, 8> kPersonas = {
    "small girl, six years, copper curls, twin puffs, yellow raincoat, lime rubber boots, freckles, hazel eyes, gap-toothed grin, ladybug backpack, scraped knees, striped socks, pink mittens",
    "cheerful woman, early thirties, jet ponytail, pearl earrings, lilac blouse, navy pencil skirt, almond gaze, dimpled smile, slim wristwatch, canvas tote, ballet flats, coral lipstick, silk scarf",
    "tall man, age forty, flaxen crewcut, trimmed beard, crimson sweater, faded jeans, tan loafers, bushy eyebrows, thick forearms, booming laugh, leather satchel, brass cufflinks, broad shoulders",
    "elderly grandfather, silver combover, bald crown, wire spectacles, hooked nose, tweed vest, corduroy trousers, suspenders, carved cane, pocket handkerchief, slow shuffle, bow tie, gold tooth, pipe",
    "teenage boy, chestnut mop, backwards cap, orange hoodie, cargo shorts, high-top sneakers, metal braces, gangly limbs, skateboard, earbuds, peeling sunburn, fidgety hands, scuffed knuckles, phone, lanyard",
    "kindly grandmother, snowy braids, rosy face, deep wrinkles, flowered apron, plum cardigan, knitting needles, cinnamon scent, reading glasses, beaded necklace, fuzzy slippers, cameo brooch, shawl, thimble",
    "sturdy toddler, blond tufts, chubby cheeks, teal onesie, gingham dungarees, plush rabbit, drool bib, tiny sandals, giggly babble, wobbly steps, dinosaur pacifier, sippy cup, rattle, bonnet",
    "lanky uncle, auburn bun, faint stubble, denim jacket, band patches, black combat shoes, battered ukulele, lopsided smirk, lip ring, tattooed arms, beanie, goofy jokes, ripped leggings",
};

constexpr std::array<std::string_view, 8> kGenericActivities = {
    "someone walks through a quiet street",  "a child plays in a sunny meadow",
    "a family sits around a kitchen table",  "a person waits at a bus stop",
    "friends gather near a campfire",        "a figure stands beside a window",
    "people stroll along a sandy beach",     "a visitor enters a busy bakery",
};

constexpr std::array<std::string_view, 4> kGenericStyles = {
    "storybook style illustration, soft colors",
    "watercolor picture book style",
    "flat vector cartoon style",
    "pastel crayon style",
};

std::vector<double> random_unit(std::size_t d, Rng& rng) {
  auto v = gaussian_vector(d, rng);
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

void WorldConfig::validate() const {
  if (n_characters == 0) throw InvalidArgument("WorldConfig: need at least one character");
  if (n_characters > kNames.size()) {
    throw InvalidArgument("WorldConfig: at most " + std::to_string(kNames.size()) + " characters supported");
  }
  if (refs_per_character == 0) throw InvalidArgument("WorldConfig: refs_per_character must be >= 1");
  if (pretrain_pairs == 0) throw InvalidArgument("WorldConfig: pretrain_pairs must be >= 1");
  if (condition_encoder.dimension != dims.d_cond) {
    throw InvalidArgument("WorldConfig: condition encoder width must equal d_cond");
  }
  if (sampler_steps == 0) throw InvalidArgument("WorldConfig: sampler_steps must be >= 1");
  backbone_training.validate();
  adapter_training.validate();
  coefficients.validate();
}

std::vector<double> World::encode_condition(std::string_view prompt_text) const {
  return embed_text(config.condition_encoder, prompt_text);
}

std::vector<CharacterCard> World::evaluation_registry() const {
  std::vector<CharacterCard> cards = registry;
  for (auto& card : cards) {
    const auto it = evaluation_references.find(card.character_id);
    if (it != evaluation_references.end()) card.references = it->second;
  }
  return cards;
}

std::unique_ptr<IdentityEmbedder> World::identity_embedder() const {
  std::vector<std::vector<double>> anchors;
  for (const auto& d : distributions) anchors.push_back(d.anchor);
  return std::make_unique<AnchorSubspaceEmbedder>(anchors);
}

std::vector<CharacterDistribution> make_distributions(std::size_t n, std::size_t d_feat, double spread,
                                                      std::uint64_t seed) {
  if (n > kNames.size()) throw InvalidArgument("make_distributions: too many characters");
  Rng rng(derive_seed(seed, "anchors"));
  std::vector<CharacterDistribution> out;
  for (std::size_t i = 0; i < n; ++i) {
    CharacterDistribution d;
    std::string id(kNames[i]);
    std::transform(id.begin(), id.end(), id.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    d.character_id = id;
    d.anchor = random_unit(d_feat, rng);
    d.spread = spread;
    d.validate();
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<CharacterCard> make_cards(std::span<const CharacterDistribution> distributions, std::size_t refs,
                                      std::uint64_t seed) {
  Rng rng(derive_seed(seed, "attributes"));
  std::array<std::size_t, kPersonas.size()> persona{};
  for (std::size_t i = 0; i < persona.size(); ++i) persona[i] = i;
  std::shuffle(persona.begin(), persona.end(), rng);
  std::vector<CharacterCard> cards;
  for (std::size_t i = 0; i < distributions.size(); ++i) {
    const auto& dist = distributions[i];
    CharacterCard card;
    card.character_id = dist.character_id;
    card.trigger = std::string(kNames[i]);
    card.attributes = std::string(kPersonas[persona[i]]);
    card.references = sample_reference_set(dist, refs, derive_seed(seed, "references", {i}));
    card.anchor = dist.anchor;
    cards.push_back(std::move(card));
  }
  validate_registry(cards);
  return cards;
}

std::vector<TrainingPair> pooled_pretraining_data(std::span<const CharacterDistribution> distributions,
                                                  const WorldConfig& config, std::uint64_t seed) {
  if (distributions.empty()) throw InvalidArgument("pooled_pretraining_data: no characters");
  Rng rng(derive_seed(seed, "pretrain"));
  std::uniform_int_distribution<std::size_t> who(0, distributions.size() - 1);
  std::uniform_int_distribution<std::size_t> activity(0, kGenericActivities.size() - 1);
  std::uniform_int_distribution<std::size_t> style(0, kGenericStyles.size() - 1);
  std::vector<TrainingPair> data;
  data.reserve(config.pretrain_pairs);
  for (std::size_t i = 0; i < config.pretrain_pairs; ++i) {
    const auto& dist = distributions[who(rng)];
    const auto frame = sample_reference_set(dist, 1, rng()).front();
    const std::string text =
        std::string(kGenericActivities[activity(rng)]) + ". " + std::string(kGenericStyles[style(rng)]);
    data.push_back({embed_text(config.condition_encoder, text), frame.values});
  }
  return data;
}

std::vector<double> solo_condition(const World& world, const CharacterCard& card) {
  SceneSpec solo;
  solo.cast = {card.character_id};
  return world.encode_condition(compile(solo, world.registry, world.config.budget).text);
}

World build_base_world(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  World world;
  world.config = config;
  world.seed = seed;
  world.distributions = make_distributions(config.n_characters, config.dims.d_feat, config.spread, seed);
  world.registry = make_cards(world.distributions, config.refs_per_character, seed);
  for (const auto& card : world.registry) world.evaluation_references[card.character_id] = card.references;

  TrainConfig bb = config.backbone_training;
  bb.seed = derive_seed(seed, "backbone-train");
  const auto data = pooled_pretraining_data(world.distributions, config, seed);
  auto trained = train_backbone(data, config.dims, bb);
  world.backbone = std::move(trained.params);
  world.backbone_loss_trace = std::move(trained.loss_trace);
  return world;
}

void train_all_adapters(World& world, std::size_t refs) {
  if (refs == 0) throw InvalidArgument("train_all_adapters: refs must be >= 1");
  world.adapters.clear();
  world.adapter_reference_count = refs;
  for (auto& card : world.registry) {
    const auto& full = world.evaluation_references.at(card.character_id);
    const std::size_t k = std::min(refs, full.size());
    card.references.assign(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(k));
  }
  for (std::size_t i = 0; i < world.registry.size(); ++i) {
    const auto& card = world.registry[i];
    TrainConfig cfg = world.config.adapter_training;
    cfg.seed = derive_seed(world.seed, "adapter-train", {i});
    world.adapters[card.character_id] =
        train_adapter(world.backbone, card.character_id, card.references, solo_condition(world, card), cfg);
  }
}

World build_world(const WorldConfig& config, std::uint64_t seed) {
  World world = build_base_world(config, seed);
  train_all_adapters(world, config.refs_per_character);
  return world;
}

}  // namespace charcom
