#include <cmath>

#include "charcom/errors.h"
#include "charcom/metrics.h"
#include "doctest.h"
#include "test_support.h"

using namespace charcom;

namespace {

// Embeds a frame as its own normalized values.
class RawEmbedder final : public IdentityEmbedder {
 public:
  std::vector<double> embed(const FeatureFrame& frame, std::string_view) const override {
    auto v = frame.values;
    double n = 0.0;
    for (double x : v) n += x * x;
    if (n > 0.0)
      for (double& x : v) x /= std::sqrt(n);
    return v;
  }
};

FeatureFrame frame(std::vector<double> v) { return FeatureFrame{std::move(v), 0, {}}; }

// Frame at angle theta in the first two coordinates.
FeatureFrame at_angle(double theta) { return frame({std::cos(theta), std::sin(theta), 0.0}); }

double brute_t_ics_emb(const std::vector<CharacterSequence>& seqs) {
  double total = 0.0;
  for (const auto& s : seqs) {
    double inner = 0.0;
    for (std::size_t i = 0; i + 1 < s.frames.size(); ++i) {
      const auto& a = s.frames[i].values;
      const auto& b = s.frames[i + 1].values;
      double ab = 0, aa = 0, bb = 0;
      for (std::size_t d = 0; d < a.size(); ++d) {
        ab += a[d] * b[d];
        aa += a[d] * a[d];
        bb += b[d] * b[d];
      }
      inner += ab / std::sqrt(aa * bb);
    }
    total += inner / static_cast<double>(s.frames.size() - 1);
  }
  return total / static_cast<double>(seqs.size());
}

CharacterCard card_with_refs(std::vector<std::vector<double>> refs) {
  CharacterCard c;
  c.character_id = "c";
  for (auto& r : refs) c.references.push_back(frame(std::move(r)));
  return c;
}

}  // namespace

TEST_CASE("cosine_to_score: affine map with clamp") {
  CHECK(cosine_to_score(1.0) == 5.0);
  CHECK(cosine_to_score(0.0) == 1.0);
  CHECK(cosine_to_score(-0.7) == 1.0);
  CHECK(cosine_to_score(0.5) == 3.0);
  CHECK(cosine_to_score(0.25) == 2.0);
}

TEST_CASE("proxy_is: reference mean, orthogonal and half-cosine frames") {
  const RawEmbedder e;
  const auto c = card_with_refs({{1, 0, 0}, {1, 0, 0}});
  CHECK(proxy_is(frame({2, 0, 0}), c, e) == 5.0);
  CHECK(proxy_is(frame({0, 3, 0}), c, e) == 1.0);
  CHECK(proxy_is(at_angle(std::acos(0.5)), c, e) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("proxy_pfs: mirrors proxy_is against the prompt target") {
  const RawEmbedder e;
  const std::vector<double> target = {1, 0, 0};
  CHECK(proxy_pfs(frame({1, 0, 0}), target, e) == 5.0);
  CHECK(proxy_pfs(frame({-1, 0, 0}), target, e) == 1.0);
  CHECK(proxy_pfs(at_angle(std::acos(0.25)), target, e) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(proxy_pfs(frame({1, 0, 0}), std::vector<double>{}, e), InvalidArgument);
}

TEST_CASE("prompt_target_embedding: normalized sum of cast reference embeddings") {
  const RawEmbedder e;
  CharacterCard a = card_with_refs({{1, 0, 0}});
  a.character_id = "a";
  CharacterCard b = card_with_refs({{0, 1, 0}});
  b.character_id = "b";
  const std::vector<CharacterCard> registry = {a, b};
  ScenePrompt p;
  p.cast = {"a", "b"};
  const auto t = prompt_target_embedding(p, registry, e);
  CHECK(t[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(t[1] == doctest::Approx(std::sqrt(0.5)));
  CHECK(t[2] == 0.0);
}

TEST_CASE("ics: normalized product and range") {
  CHECK(ics(1.0, 1.0) == 0.04);
  CHECK(ics(5.0, 5.0) == 1.0);
  CHECK(ics(4.0, 3.0) == doctest::Approx(0.48).epsilon(1e-15));
  CHECK_THROWS_AS(ics(0.9, 3.0), InvalidArgument);
  CHECK_THROWS_AS(ics(3.0, 5.1), InvalidArgument);
}

TEST_CASE("t_ics_emb: worked cases") {
  const RawEmbedder e;
  const std::vector<CharacterSequence> same = {{"a", {frame({1, 2, 3}), frame({1, 2, 3}), frame({2, 4, 6})}}};
  CHECK(t_ics_emb(same, e) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<CharacterSequence> ortho = {{"a", {frame({1, 0, 0}), frame({0, 1, 0})}}};
  CHECK(t_ics_emb(ortho, e) == 0.0);
  const double t = std::acos(0.5);
  const std::vector<CharacterSequence> three = {{"a", {at_angle(0.0), at_angle(t), at_angle(t)}}};
  CHECK(t_ics_emb(three, e) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("t_ics_emb: matches a double-loop oracle, reversal invariant, in range") {
  const RawEmbedder e;
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CharacterSequence> seqs;
    const std::size_t n_chars = 1 + rng() % 4;
    for (std::size_t c = 0; c < n_chars; ++c) {
      CharacterSequence s{"c" + std::to_string(c), {}};
      const std::size_t n = 2 + rng() % 6;
      for (std::size_t i = 0; i < n; ++i) s.frames.push_back(frame(gaussian_vector(8, rng)));
      seqs.push_back(s);
    }
    const double v = t_ics_emb(seqs, e);
    CHECK(std::abs(v - brute_t_ics_emb(seqs)) < 1e-9);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
    auto reversed = seqs;
    for (auto& s : reversed) std::reverse(s.frames.begin(), s.frames.end());
    CHECK(std::abs(t_ics_emb(reversed, e) - v) < 1e-12);
    CHECK(temporal_loss(seqs, e) >= 0.0);
  }
}

TEST_CASE("t_ics_emb: short sequences rejected") {
  const RawEmbedder e;
  const std::vector<CharacterSequence> one = {{"a", {frame({1, 0})}}};
  CHECK_THROWS_AS(t_ics_emb(one, e), InvalidArgument);
  CHECK_THROWS_AS(t_ics(one, embedding_pair_judge(e)), InvalidArgument);
  CHECK_THROWS_AS(temporal_loss(one, e), InvalidArgument);
}

TEST_CASE("t_ics: constant judges and the embedding judge") {
  const RawEmbedder e;
  Rng rng(9);
  std::vector<CharacterSequence> seqs = {{"a", {}}, {"b", {}}};
  for (auto& s : seqs)
    for (int i = 0; i < 4; ++i) s.frames.push_back(frame(gaussian_vector(5, rng)));
  CHECK(t_ics(seqs, [](const FeatureFrame&, const FeatureFrame&, std::string_view) { return 1.0; }) == 1.0);
  CHECK(t_ics(seqs, [](const FeatureFrame&, const FeatureFrame&, std::string_view) { return 0.0; }) == 0.0);
  CHECK(t_ics(seqs, embedding_pair_judge(e)) == t_ics_emb(seqs, e, PairClamp::kUnit));
}

TEST_CASE("t_ics: out-of-range judge is a contract violation") {
  const std::vector<CharacterSequence> seqs = {{"a", {frame({1, 0}), frame({0, 1})}}};
  CHECK_THROWS_AS(t_ics(seqs, [](const FeatureFrame&, const FeatureFrame&, std::string_view) { return 1.5; }),
                  ContractViolation);
  CHECK_THROWS_AS(t_ics(seqs, [](const FeatureFrame&, const FeatureFrame&, std::string_view) { return -0.1; }),
                  ContractViolation);
}

TEST_CASE("temporal_loss: worked cases") {
  const RawEmbedder e;
  const std::vector<CharacterSequence> same = {{"a", {frame({1, 1}), frame({1, 1}), frame({1, 1})}}};
  CHECK(temporal_loss(same, e) == doctest::Approx(0.0).scale(1.0));
  const std::vector<CharacterSequence> ortho = {{"a", {frame({1, 0}), frame({0, 1})}}};
  CHECK(temporal_loss(ortho, e) == 1.0);
}

TEST_CASE("total_objective: weighted sum") {
  CHECK(total_objective(1, 2, 3, 0, 0) == 1.0);
  CHECK(total_objective(1, 2, 3, 1, 1) == 6.0);
  CHECK(total_objective(1, 2, 3, 2, 1) - total_objective(1, 2, 3, 1, 1) == 2.0);
  CHECK_THROWS_AS(total_objective(1, 2, 3, -1, 0), InvalidArgument);
  CHECK_THROWS_AS(total_objective(1, 2, 3, 0, -1), InvalidArgument);
}

TEST_CASE("AnchorSubspaceEmbedder: projects onto the anchor span") {
  const std::vector<std::vector<double>> anchors = {{1, 0, 0}, {1, 1, 0}, {2, 2, 0}};
  const AnchorSubspaceEmbedder e(anchors);
  CHECK(e.subspace_rank() == 2);
  const auto v = e.embed(frame({3, 4, 12}), "x");
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[1] == doctest::Approx(0.8));
  CHECK(v[2] == doctest::Approx(0.0).scale(1.0));
  const auto zero = e.embed(frame({0, 0, 5}), "x");
  for (double x : zero) CHECK(x == doctest::Approx(0.0).scale(1.0));
  CHECK_THROWS_AS(e.embed(frame({1, 0}), "x"), InvalidArgument);
}

TEST_CASE("mean_std: population statistics and report merge") {
  const std::vector<double> v = {1, 2, 3, 4};
  const auto s = mean_std(v);
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.count == 4);
  MetricReport a;
  a.scenes.resize(2);
  a.story_t_ics_emb = {0.5};
  MetricReport b;
  b.scenes.resize(3);
  b.story_t_ics_emb = {0.7};
  a.merge(b);
  CHECK(a.scenes.size() == 5);
  CHECK(a.t_ics_emb().mean == doctest::Approx(0.6));
}

TEST_CASE("t_ics_emb: identity drift lowers the score") {
  Rng rng(21);
  std::vector<std::vector<double>> anchors;
  for (int i = 0; i < 4; ++i) anchors.push_back(gaussian_vector(16, rng));
  const AnchorSubspaceEmbedder e(anchors);
  CharacterSequence clean{"a", {}};
  for (int i = 0; i < 5; ++i) {
    auto v = anchors[0];
    for (double& x : v) x += 0.05 * std::normal_distribution<double>()(rng);
    clean.frames.push_back(frame(v));
  }
  auto drifted = clean;
  drifted.frames[2] = frame(anchors[1]);
  const std::vector<CharacterSequence> a = {clean};
  const std::vector<CharacterSequence> b = {drifted};
  CHECK(t_ics_emb(b, e) < t_ics_emb(a, e));
  CHECK(temporal_loss(b, e) > temporal_loss(a, e));
}
