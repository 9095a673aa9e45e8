#include <algorithm>

#include "charcom/errors.h"
#include "charcom/promptc.h"
#include "doctest.h"

using namespace charcom;

namespace {

CharacterCard card(const std::string& id, const std::string& trigger, const std::string& attributes) {
  CharacterCard c;
  c.character_id = id;
  c.trigger = trigger;
  c.attributes = attributes;
  return c;
}

const std::string kForty =
    "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11 w12 w13 w14 w15 w16 w17 w18 w19 w20 "
    "w21 w22 w23 w24 w25 w26 w27 w28 w29 w30 w31 w32 w33 w34 w35 w36 w37 w38 w39 w40";

std::vector<CharacterCard> family() {
  return {card("lulu", "Lulu", "small girl, red bow, round glasses"),
          card("mama", "Mama", "tall woman, green apron, silver earrings"),
          card("baba", "Baba", "bearded man, plaid shirt, straw hat")};
}

std::size_t occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("tokenize: whitespace split, punctuation stripped") {
  CHECK(tokenize("red, fox. -- jumps!") == std::vector<std::string>{"red", "fox", "jumps"});
  CHECK(count_tokens("") == 0);
  CHECK(count_tokens("  a   b ") == 2);
}

TEST_CASE("compress_attributes: short input returned verbatim") {
  const std::string ten = "one two three four five six seven eight nine ten";
  CHECK(compress_attributes(ten) == ten);
}

TEST_CASE("compress_attributes: long input keeps the first 25 words") {
  const std::string want =
      "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11 w12 w13 w14 w15 w16 w17 w18 w19 w20 w21 w22 w23 w24 w25";
  CHECK(compress_attributes(kForty) == want);
  CHECK(count_tokens(compress_attributes(kForty)) == 25);
}

TEST_CASE("compress_attributes: trailing list punctuation trimmed at the cut") {
  std::string text;
  for (int i = 1; i <= 30; ++i) text += "t" + std::to_string(i) + ", ";
  CHECK(compress_attributes(text, TokenBudget{15, 3}) == "t1, t2, t3");
}

TEST_CASE("compress_attributes: idempotent") {
  for (const std::string& s : {kForty, std::string("a b c"), std::string("x, y, z, ") + kForty}) {
    const auto once = compress_attributes(s);
    CHECK(compress_attributes(once) == once);
  }
}

TEST_CASE("compress_attributes: empty input rejected") {
  CHECK_THROWS_AS(compress_attributes(""), InvalidArgument);
  CHECK_THROWS_AS(compress_attributes(" ,, "), InvalidArgument);
}

TEST_CASE("compile: single character with no action or style") {
  const auto registry = family();
  SceneSpec scene;
  scene.cast = {"mama"};
  const auto p = compile(scene, registry);
  CHECK(p.text == "Mama tall woman, green apron, silver earrings");
  REQUIRE(p.segments.size() == 1);
  CHECK(p.segments[0].kind == SegmentKind::kCharacter);
  CHECK(p.cast == std::vector<std::string>{"mama"});
}

TEST_CASE("compile: character segments, then action, then style") {
  const auto registry = family();
  SceneSpec scene;
  scene.cast = {"lulu", "mama", "baba"};
  scene.action = "Lulu and Mama bake bread while Baba reads";
  scene.style = "soft watercolor";
  const auto p = compile(scene, registry);
  CHECK(p.text ==
        "Baba bearded man, plaid shirt, straw hat; Lulu small girl, red bow, round glasses; "
        "Mama tall woman, green apron, silver earrings. Lulu and Mama bake bread while Baba reads. soft watercolor");
  REQUIRE(p.segments.size() == 5);
  CHECK(p.segments[0].character_id == "baba");
  CHECK(p.segments[1].character_id == "lulu");
  CHECK(p.segments[2].character_id == "mama");
  CHECK(p.segments[3].kind == SegmentKind::kAction);
  CHECK(p.segments[4].kind == SegmentKind::kStyle);
  CHECK(p.cast == std::vector<std::string>{"baba", "lulu", "mama"});
  CHECK(compile(scene, registry).text == p.text);
}

TEST_CASE("compile: invariant to registration and cast order") {
  auto registry = family();
  SceneSpec scene;
  scene.cast = {"mama", "lulu"};
  scene.action = "Mama hugs Lulu";
  const auto a = compile(scene, registry);
  std::reverse(registry.begin(), registry.end());
  std::reverse(scene.cast.begin(), scene.cast.end());
  CHECK(compile(scene, registry).text == a.text);
}

TEST_CASE("compile: each trigger once in the character section, segments within budget") {
  auto registry = family();
  registry[0].attributes = kForty;
  SceneSpec scene;
  scene.cast = {"lulu", "mama", "baba"};
  const auto p = compile(scene, registry);
  for (const auto& seg : p.segments) {
    if (seg.kind != SegmentKind::kCharacter) continue;
    const auto& c = find_card(registry, seg.character_id);
    CHECK(count_tokens(seg.text) - count_tokens(c.trigger) <= 25);
    CHECK(occurrences(p.text, c.trigger + " ") == 1);
  }
}

TEST_CASE("compile: unknown cast id and duplicates") {
  const auto registry = family();
  SceneSpec scene;
  scene.cast = {"zed"};
  try {
    (void)compile(scene, registry);
    FAIL("expected NotFound");
  } catch (const NotFound& e) {
    CHECK(std::string(e.what()).find("zed") != std::string::npos);
  }
  scene.cast = {"lulu", "lulu"};
  CHECK_THROWS_AS(compile(scene, registry), InvalidArgument);
}

TEST_CASE("unit_text: own segment plus action and style") {
  const auto registry = family();
  SceneSpec scene;
  scene.cast = {"lulu", "mama"};
  scene.action = "Lulu waves";
  scene.style = "ink";
  const auto p = compile(scene, registry);
  CHECK(p.unit_text("mama") == "Mama tall woman, green apron, silver earrings. Lulu waves. ink");
  CHECK_THROWS_AS((void)p.unit_text("baba"), NotFound);
  const auto flat = flat_prompt(scene, registry);
  CHECK(flat.unit_text("mama") == flat.text);
}

TEST_CASE("scramble_order: single cast equals compile, reproducible, eventually permutes") {
  const auto registry = family();
  SceneSpec solo;
  solo.cast = {"lulu"};
  solo.action = "Lulu sings";
  CHECK(scramble_order(solo, registry, 3).text == compile(solo, registry).text);

  SceneSpec duo;
  duo.cast = {"lulu", "mama"};
  CHECK(scramble_order(duo, registry, 5).text == scramble_order(duo, registry, 5).text);
  const auto canonical = compile(duo, registry).text;
  bool differs = false;
  for (std::uint64_t seed = 0; seed < 10; ++seed) differs |= scramble_order(duo, registry, seed).text != canonical;
  CHECK(differs);
}

TEST_CASE("flat_prompt: no triggers, uncompressed, deterministic") {
  auto registry = family();
  registry[1].attributes = kForty;
  SceneSpec scene;
  scene.cast = {"lulu", "mama"};
  scene.action = "Lulu and Mama paint a fence";
  scene.style = "pastel";
  const auto flat = flat_prompt(scene, registry);
  CHECK_FALSE(flat.structured);
  for (const auto& c : registry) CHECK(flat.text.find(c.trigger) == std::string::npos);
  CHECK(flat.text.find("w40") != std::string::npos);
  CHECK(count_tokens(flat.text) >= count_tokens(compile(scene, registry).text));
  CHECK(flat_prompt(scene, registry).text == flat.text);
  CHECK(flat.cast == std::vector<std::string>{"lulu", "mama"});
}

TEST_CASE("validate_registry: rejects malformed registries") {
  CHECK_NOTHROW(validate_registry(family()));
  auto dup_id = family();
  dup_id[1].character_id = "lulu";
  CHECK_THROWS_AS(validate_registry(dup_id), InvalidArgument);
  auto dup_trigger = family();
  dup_trigger[1].trigger = "Lulu";
  CHECK_THROWS_AS(validate_registry(dup_trigger), InvalidArgument);
  auto no_attr = family();
  no_attr[2].attributes = "";
  CHECK_THROWS_AS(validate_registry(no_attr), InvalidArgument);
  auto no_trigger = family();
  no_trigger[0].trigger = " ";
  CHECK_THROWS_AS(validate_registry(no_trigger), InvalidArgument);
}
