#include <cmath>
#include <random>

#include "charcom/errors.h"
#include "charcom/fusion.h"
#include "charcom/promptc.h"
#include "charcom/trainer.h"
#include "doctest.h"
#include "test_support.h"

using namespace charcom;

namespace {

CharacterCard card(const std::string& id, const std::string& trigger, const std::string& attributes,
                   std::uint64_t seed) {
  Rng rng(seed);
  CharacterCard c;
  c.character_id = id;
  c.trigger = trigger;
  c.attributes = attributes;
  c.anchor = gaussian_vector(16, rng);
  c.references = {FeatureFrame{gaussian_vector(16, rng), 0, {id}}, FeatureFrame{gaussian_vector(16, rng), 0, {id}}};
  return c;
}

std::string random_words(Rng& rng, std::size_t n, const std::string& prefix) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += prefix + std::to_string(rng() % 100000);
  }
  return out;
}

AdapterWeights adapter_for(const std::string& id, std::uint64_t seed) {
  const auto backbone = init_backbone(BackboneDims{}, 1);
  return init_adapter(backbone, id, 4, InitSpec{}, seed);
}

}  // namespace

TEST_CASE("logistic: reference values") {
  CHECK(logistic(0.0) == 0.5);
  CHECK(std::abs(logistic(2.0) - 0.8807970779778823) < 1e-15);
  CHECK(std::abs(logistic(-2.0) - 0.11920292202211755) < 1e-15);
  CHECK(logistic(-800.0) >= 0.0);
  CHECK(logistic(800.0) <= 1.0);
}

TEST_CASE("relevance_from_cosines: worked cases") {
  const FusionCoefficients unit;
  CHECK(std::abs(relevance_from_cosines(1.0, 1.0, unit) - 0.880797) < 1e-6);
  CHECK(relevance_from_cosines(0.0, 0.0, unit) == 0.5);
  CHECK(relevance_from_cosines(1.0, -1.0, unit) == 0.5);
}

TEST_CASE("relevance_from_cosines: monotone in each cosine, ranking invariant under joint scaling") {
  const FusionCoefficients unit;
  FusionCoefficients scaled;
  scaled.alpha = 3.0;
  scaled.beta = 3.0;
  Rng rng(7);
  std::uniform_real_distribution<double> cosd(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double t = cosd(rng), r = cosd(rng), t2 = cosd(rng), r2 = cosd(rng);
    if (t2 > t) CHECK(relevance_from_cosines(t2, r, unit) > relevance_from_cosines(t, r, unit));
    if (r2 > r) CHECK(relevance_from_cosines(t, r2, unit) > relevance_from_cosines(t, r, unit));
    const bool before = relevance_from_cosines(t, r, unit) < relevance_from_cosines(t2, r2, unit);
    const bool after = relevance_from_cosines(t, r, scaled) < relevance_from_cosines(t2, r2, scaled);
    CHECK(before == after);
  }
}

TEST_CASE("embed_text: deterministic, order-free, case-folded, empty is zero") {
  const TextEmbedder e;
  CHECK(embed_text(e, "red fox") == embed_text(e, "red fox"));
  CHECK(cosine(embed_text(e, "red fox"), embed_text(e, "fox red")) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(embed_text(e, "Red FOX") == embed_text(e, "red fox"));
  const auto empty = embed_text(e, "");
  for (double v : empty) CHECK(v == 0.0);
  double n = 0.0;
  for (double v : embed_text(e, "one two three")) n += v * v;
  CHECK(n == doctest::Approx(1.0));
}

TEST_CASE("embed_text: disjoint-token texts are nearly orthogonal") {
  const TextEmbedder e;
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_words(rng, 6, "a");
    const auto b = random_words(rng, 6, "b");
    CHECK(std::abs(cosine(embed_text(e, a), embed_text(e, b))) < 0.2);
  }
}

TEST_CASE("cosine: zero vectors and dimension mismatch") {
  CHECK(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 2}) == 0.0);
  CHECK_THROWS_AS(cosine(std::vector<double>{1}, std::vector<double>{1, 2}), InvalidArgument);
}

TEST_CASE("relevance_weight: equals the scalar formula on the computed cosines") {
  const DualEncoder enc;
  const auto c = card("a", "Ada", "red hat blue scarf", 1);
  const std::string prompt = "Ada red hat blue scarf; walking in rain";
  FusionCoefficients coeffs;
  coeffs.alpha = 0.7;
  coeffs.beta = 1.3;
  const double cos_t = cosine(embed_text(enc.semantic, prompt), embed_text(enc.semantic, c.attributes));
  const double cos_r = cosine(embed_text(enc.visual_text, prompt), embed_references(enc.visual_ref, c.references));
  const double want = 1.0 / (1.0 + std::exp(-(0.7 * cos_t + 1.3 * cos_r)));
  CHECK(std::abs(relevance_weight(prompt, c, coeffs, enc) - want) < 1e-12);
  const auto w = relevance_weight(prompt, c, coeffs, enc);
  CHECK(w > 0.0);
  CHECK(w < 1.0);
}

TEST_CASE("relevance_weight: empty reference set rejected") {
  auto c = card("a", "Ada", "red hat", 1);
  c.references.clear();
  CHECK_THROWS_AS(relevance_weight("Ada", c, FusionCoefficients{}, DualEncoder{}), InvalidArgument);
}

TEST_CASE("build_plan: thresholds 0 and 1") {
  const std::vector<CharacterCard> registry = {card("b", "Bo", "green boots", 2), card("a", "Ada", "red hat", 1)};
  ScenePrompt prompt;
  prompt.text = "Ada red hat";
  FusionCoefficients all;
  all.weight_threshold = 0.0;
  auto plan = build_plan(prompt, registry, all, DualEncoder{});
  CHECK(plan.selected.size() == 2);
  CHECK(plan.selected[0].character_id == "a");
  FusionCoefficients none;
  none.weight_threshold = 1.0;
  plan = build_plan(prompt, registry, none, DualEncoder{});
  CHECK(plan.selected.empty());
  CHECK(plan.excluded.size() == 2);
  for (const auto& e : plan.excluded) CHECK(e.reason == "below threshold");
}

TEST_CASE("build_plan: verbatim card text selects its character only") {
  const DualEncoder enc;
  const std::vector<CharacterCard> registry = {card("a", "Ada", "red hat blue scarf silver buttons", 1),
                                               card("b", "Bo", "green boots yellow cape wooden sword", 2)};
  ScenePrompt prompt;
  prompt.text = "Ada red hat blue scarf silver buttons";
  const auto wa = relevance_weight(prompt.text, registry[0], FusionCoefficients{}, enc);
  const auto wb = relevance_weight(prompt.text, registry[1], FusionCoefficients{}, enc);
  CHECK(wa >= 0.6);
  CHECK(wb < 0.6);
  const auto plan = build_plan(prompt, registry, FusionCoefficients{}, enc, "p0");
  CHECK(plan.prompt_id == "p0");
  REQUIRE(plan.selected.size() == 1);
  CHECK(plan.selected[0].character_id == "a");
  CHECK(plan.selected[0].weight == wa);
  REQUIRE(plan.excluded.size() == 1);
  CHECK(plan.excluded[0].weight == wb);
  CHECK_FALSE(prompt.embedding.empty());
}

TEST_CASE("build_plan: deterministic and independent of registry order") {
  std::vector<CharacterCard> registry = {card("c", "Cy", "tall grey coat", 3), card("a", "Ada", "red hat", 1),
                                         card("b", "Bo", "green boots", 2)};
  FusionCoefficients coeffs;
  coeffs.weight_threshold = 0.5;
  ScenePrompt p1;
  p1.text = "Ada red hat; Cy tall grey coat";
  ScenePrompt p2 = p1;
  const auto a = build_plan(p1, registry, coeffs, DualEncoder{});
  std::reverse(registry.begin(), registry.end());
  const auto b = build_plan(p2, registry, coeffs, DualEncoder{});
  REQUIRE(a.selected.size() == b.selected.size());
  for (std::size_t i = 0; i < a.selected.size(); ++i) {
    CHECK(a.selected[i].character_id == b.selected[i].character_id);
    CHECK(a.selected[i].weight == b.selected[i].weight);
  }
}

TEST_CASE("build_plan: weight cap rescales the selection") {
  const std::vector<CharacterCard> registry = {card("a", "Ada", "red hat", 1), card("b", "Bo", "green boots", 2)};
  FusionCoefficients coeffs;
  coeffs.weight_threshold = 0.0;
  coeffs.max_total_weight = 0.5;
  ScenePrompt p;
  p.text = "Ada red hat Bo green boots";
  CHECK(build_plan(p, registry, coeffs, DualEncoder{}).total_weight() == doctest::Approx(0.5));
}

TEST_CASE("build_plan: empty registry and bad coefficients rejected") {
  ScenePrompt p;
  p.text = "x";
  CHECK_THROWS_AS(build_plan(p, std::vector<CharacterCard>{}, FusionCoefficients{}, DualEncoder{}), InvalidArgument);
  FusionCoefficients bad;
  bad.weight_threshold = 1.5;
  const std::vector<CharacterCard> registry = {card("a", "Ada", "red hat", 1)};
  CHECK_THROWS_AS(build_plan(p, registry, bad, DualEncoder{}), InvalidArgument);
}

TEST_CASE("plan_to_updates: structure follows the plan") {
  std::map<std::string, AdapterWeights> adapters = {{"a", adapter_for("a", 1)}, {"b", adapter_for("b", 2)}};
  CHECK(plan_to_updates(FusionPlan{}, adapters).empty());

  FusionPlan one;
  one.selected = {{"a", 1.0, {}}};
  const auto single = plan_to_updates(one, adapters);
  REQUIRE(single.size() == 2);
  for (const auto& set : single) {
    REQUIRE(set.entries.size() == 1);
    CHECK(set.entries[0].weight == 1.0);
  }

  FusionPlan two;
  two.selected = {{"b", 0.7, {}}, {"a", 0.8, {}}};
  const auto both = plan_to_updates(two, adapters);
  for (std::size_t l = 0; l < both.size(); ++l) {
    REQUIRE(both[l].entries.size() == 2);
    CHECK(both[l].entries[0].character_id == "a");
    CHECK(both[l].entries[0].weight == 0.8);
    CHECK(both[l].entries[1].character_id == "b");
    CHECK(both[l].entries[1].weight == 0.7);
    CHECK(both[l].entries[0].update == adapters.at("a").layers[l]);
  }
}

TEST_CASE("plan_to_updates: missing adapter names the character") {
  FusionPlan plan;
  plan.selected = {{"ghost", 0.9, {}}};
  try {
    (void)plan_to_updates(plan, {});
    FAIL("expected NotFound");
  } catch (const NotFound& e) {
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
}

TEST_CASE("plan_to_updates: empty plan samples like the vanilla backbone") {
  const auto backbone = init_backbone(BackboneDims{}, 3);
  const std::vector<double> cond(16, 0.2);
  const auto updates = plan_to_updates(FusionPlan{}, {});
  CHECK(charcom::sample(backbone, updates, cond, NoiseSchedule::uniform(10), 4) ==
        charcom::sample(backbone, {}, cond, NoiseSchedule::uniform(10), 4));
}
