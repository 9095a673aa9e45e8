#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charcom/backbone.h"
#include "charcom/promptc.h"

namespace charcom {

/// f_emb: maps a frame (optionally a specific character within it) to an
/// identity descriptor of fixed dimension.
class IdentityEmbedder {
 public:
  virtual ~IdentityEmbedder() = default;
  virtual std::vector<double> embed(const FeatureFrame& frame, std::string_view character_id) const = 0;
};

/// Orthogonal projection onto span(anchors), L2-normalized. Frames with no
/// component in the span map to the zero vector.
class AnchorSubspaceEmbedder final : public IdentityEmbedder {
 public:
  explicit AnchorSubspaceEmbedder(std::span<const std::vector<double>> anchors);

  std::vector<double> embed(const FeatureFrame& frame, std::string_view character_id) const override;
  std::size_t subspace_rank() const noexcept { return basis_.size(); }

 private:
  std::size_t dim_ = 0;
  std::vector<std::vector<double>> basis_;  // orthonormal
};

struct JudgeScores {
  double is_score = 1.0;
  double pfs_score = 1.0;
};

/// Mean identity embedding of a character's references.
std::vector<double> reference_embedding(const CharacterCard& card, const IdentityEmbedder& embedder);

/// Normalized sum of the cast's reference embeddings: what the prompt asks
/// the frame to contain.
std::vector<double> prompt_target_embedding(const ScenePrompt& prompt, std::span<const CharacterCard> registry,
                                            const IdentityEmbedder& embedder);

/// 1 + 4 * max(0, cos)
double cosine_to_score(double cos);

double proxy_is(const FeatureFrame& frame, const CharacterCard& card, const IdentityEmbedder& embedder);
double proxy_pfs(const FeatureFrame& frame, std::span<const double> prompt_target, const IdentityEmbedder& embedder);

/// IS * PFS / 25; both inputs must lie in [1, 5].
double ics(double is_score, double pfs_score);

/// Frames of one character in story order.
struct CharacterSequence {
  std::string character_id;
  std::vector<FeatureFrame> frames;
};

enum class PairClamp { kNone, kUnit };

/// Mean over characters of the mean adjacent-pair cosine of identity
/// embeddings. With PairClamp::kUnit each pair cosine is clamped to [0, 1].
double t_ics_emb(std::span<const CharacterSequence> sequences, const IdentityEmbedder& embedder,
                 PairClamp clamp = PairClamp::kNone);

/// Temporal evaluator for a pair of consecutive frames of one character;
/// must return a value in [0, 1].
using PairJudge = std::function<double(const FeatureFrame&, const FeatureFrame&, std::string_view)>;

/// clamp(cos(f_emb(a), f_emb(b)), 0, 1)
PairJudge embedding_pair_judge(const IdentityEmbedder& embedder);

double t_ics(std::span<const CharacterSequence> sequences, const PairJudge& judge);

/// Sum over characters and adjacent pairs of (1 - cos) of identity embeddings.
double temporal_loss(std::span<const CharacterSequence> sequences, const IdentityEmbedder& embedder);

/// id + lambda * sem + mu * temp; lambda, mu >= 0.
double total_objective(double id_term, double sem_term, double temp_term, double lambda = 1.0, double mu = 1.0);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

/// Population standard deviation.
MeanStd mean_std(std::span<const double> values);

struct SceneScores {
  std::size_t story_id = 0;
  std::size_t scene_index = 0;
  std::size_t cast_size = 0;
  JudgeScores judge;
  double ics = 0.0;
};

struct MetricReport {
  std::string method;
  std::size_t cast_size = 0;  // 0 = mixed
  std::vector<SceneScores> scenes;
  std::vector<double> story_t_ics;
  std::vector<double> story_t_ics_emb;

  MeanStd is() const;
  MeanStd pfs() const;
  MeanStd ics_stats() const;
  MeanStd t_ics() const { return mean_std(story_t_ics); }
  MeanStd t_ics_emb() const { return mean_std(story_t_ics_emb); }

  /// Appends another report's scenes and story values.
  void merge(const MetricReport& other);
};

}  // namespace charcom
