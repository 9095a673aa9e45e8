#include "charcom/metrics.h"

#include <algorithm>
#include <cmath>

#include "charcom/errors.h"
#include "charcom/fusion.h"

namespace charcom {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (n == 0.0) return;
  for (double& x : v) x /= n;
}

template <typename PairFn>
double double_mean(std::span<const CharacterSequence> sequences, PairFn&& pair_value) {
  if (sequences.empty()) throw InvalidArgument("temporal metric: no character sequences");
  double outer = 0.0;
  for (const auto& seq : sequences) {
    if (seq.frames.size() < 2) {
      throw InvalidArgument("temporal metric: '" + seq.character_id + "' has fewer than 2 frames");
    }
    double inner = 0.0;
    for (std::size_t i = 0; i + 1 < seq.frames.size(); ++i) {
      inner += pair_value(seq.frames[i], seq.frames[i + 1], seq.character_id);
    }
    outer += inner / static_cast<double>(seq.frames.size() - 1);
  }
  return outer / static_cast<double>(sequences.size());
}

}  // namespace

AnchorSubspaceEmbedder::AnchorSubspaceEmbedder(std::span<const std::vector<double>> anchors) {
  if (anchors.empty()) throw InvalidArgument("AnchorSubspaceEmbedder: no anchors");
  dim_ = anchors.front().size();
  // Modified Gram-Schmidt; nearly dependent anchors are dropped.
  for (const auto& anchor : anchors) {
    if (anchor.size() != dim_) throw InvalidArgument("AnchorSubspaceEmbedder: anchor dimension mismatch");
    std::vector<double> v = anchor;
    for (const auto& q : basis_) {
      const double p = dot(v, q);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * q[i];
    }
    if (std::sqrt(dot(v, v)) < 1e-9) continue;
    normalize(v);
    basis_.push_back(std::move(v));
  }
}

std::vector<double> AnchorSubspaceEmbedder::embed(const FeatureFrame& frame, std::string_view) const {
  if (frame.values.size() != dim_) throw InvalidArgument("AnchorSubspaceEmbedder: frame dimension mismatch");
  std::vector<double> out(dim_, 0.0);
  for (const auto& q : basis_) {
    const double p = dot(frame.values, q);
    for (std::size_t i = 0; i < dim_; ++i) out[i] += p * q[i];
  }
  normalize(out);
  return out;
}

std::vector<double> reference_embedding(const CharacterCard& card, const IdentityEmbedder& embedder) {
  if (card.references.empty()) throw InvalidArgument("'" + card.character_id + "' has no reference frames");
  std::vector<double> mean;
  for (const auto& ref : card.references) {
    const auto e = embedder.embed(ref, card.character_id);
    if (mean.empty()) mean.assign(e.size(), 0.0);
    for (std::size_t i = 0; i < e.size(); ++i) mean[i] += e[i];
  }
  for (double& x : mean) x /= static_cast<double>(card.references.size());
  return mean;
}

std::vector<double> prompt_target_embedding(const ScenePrompt& prompt, std::span<const CharacterCard> registry,
                                            const IdentityEmbedder& embedder) {
  std::vector<double> target;
  for (const auto& id : prompt.cast) {
    auto e = reference_embedding(find_card(registry, id), embedder);
    normalize(e);
    if (target.empty()) target.assign(e.size(), 0.0);
    for (std::size_t i = 0; i < e.size(); ++i) target[i] += e[i];
  }
  normalize(target);
  return target;
}

double cosine_to_score(double cos) { return 1.0 + 4.0 * std::max(0.0, cos); }

double proxy_is(const FeatureFrame& frame, const CharacterCard& card, const IdentityEmbedder& embedder) {
  return cosine_to_score(cosine(embedder.embed(frame, card.character_id), reference_embedding(card, embedder)));
}

double proxy_pfs(const FeatureFrame& frame, std::span<const double> prompt_target, const IdentityEmbedder& embedder) {
  if (prompt_target.empty()) throw InvalidArgument("proxy_pfs: prompt target embedding not available");
  return cosine_to_score(cosine(embedder.embed(frame, {}), prompt_target));
}

double ics(double is_score, double pfs_score) {
  auto in_range = [](double v) { return v >= 1.0 && v <= 5.0; };
  if (!in_range(is_score) || !in_range(pfs_score)) throw InvalidArgument("ics: scores must lie in [1, 5]");
  return is_score * pfs_score / 25.0;
}

double t_ics_emb(std::span<const CharacterSequence> sequences, const IdentityEmbedder& embedder, PairClamp clamp) {
  return double_mean(sequences, [&](const FeatureFrame& a, const FeatureFrame& b, std::string_view id) {
    const double c = cosine(embedder.embed(a, id), embedder.embed(b, id));
    return clamp == PairClamp::kUnit ? std::clamp(c, 0.0, 1.0) : c;
  });
}

PairJudge embedding_pair_judge(const IdentityEmbedder& embedder) {
  return [&embedder](const FeatureFrame& a, const FeatureFrame& b, std::string_view id) {
    return std::clamp(cosine(embedder.embed(a, id), embedder.embed(b, id)), 0.0, 1.0);
  };
}

double t_ics(std::span<const CharacterSequence> sequences, const PairJudge& judge) {
  return double_mean(sequences, [&](const FeatureFrame& a, const FeatureFrame& b, std::string_view id) {
    const double v = judge(a, b, id);
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractViolation("temporal judge returned " + std::to_string(v) + " for '" + std::string(id) +
                              "', outside [0, 1]");
    }
    return v;
  });
}

double temporal_loss(std::span<const CharacterSequence> sequences, const IdentityEmbedder& embedder) {
  double total = 0.0;
  for (const auto& seq : sequences) {
    if (seq.frames.size() < 2) {
      throw InvalidArgument("temporal_loss: '" + seq.character_id + "' has fewer than 2 frames");
    }
    for (std::size_t i = 1; i < seq.frames.size(); ++i) {
      total += 1.0 - cosine(embedder.embed(seq.frames[i], seq.character_id),
                            embedder.embed(seq.frames[i - 1], seq.character_id));
    }
  }
  return total;
}

double total_objective(double id_term, double sem_term, double temp_term, double lambda, double mu) {
  if (!(lambda >= 0.0) || !(mu >= 0.0)) throw InvalidArgument("total_objective: lambda and mu must be >= 0");
  return id_term + lambda * sem_term + mu * temp_term;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  out.count = values.size();
  if (values.empty()) return out;
  double s = 0.0;
  for (double v : values) s += v;
  out.mean = s / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

namespace {

template <typename Field>
MeanStd scene_stat(const std::vector<SceneScores>& scenes, Field&& field) {
  std::vector<double> v;
  v.reserve(scenes.size());
  for (const auto& s : scenes) v.push_back(field(s));
  return mean_std(v);
}

}  // namespace

MeanStd MetricReport::is() const {
  return scene_stat(scenes, [](const SceneScores& s) { return s.judge.is_score; });
}

MeanStd MetricReport::pfs() const {
  return scene_stat(scenes, [](const SceneScores& s) { return s.judge.pfs_score; });
}

MeanStd MetricReport::ics_stats() const {
  return scene_stat(scenes, [](const SceneScores& s) { return s.ics; });
}

void MetricReport::merge(const MetricReport& other) {
  scenes.insert(scenes.end(), other.scenes.begin(), other.scenes.end());
  story_t_ics.insert(story_t_ics.end(), other.story_t_ics.begin(), other.story_t_ics.end());
  story_t_ics_emb.insert(story_t_ics_emb.end(), other.story_t_ics_emb.begin(), other.story_t_ics_emb.end());
}

}  // namespace charcom
