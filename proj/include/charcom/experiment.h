#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charcom/benchmark.h"
#include "charcom/fusion.h"
#include "charcom/metrics.h"
#include "charcom/world.h"

namespace charcom {

enum class MethodName { kVanilla, kStaticAll, kCharCom };

/// Where charcom composes adapters. kScene merges one W* per scene from the
/// whole prompt; kUnit merges one W* per localized prompt unit (a cast
/// member's segment plus action and style), so each crop is rendered with the
/// adapters relevant to its own unit. Unstructured prompts have no units and
/// always compose per scene.
enum class CompositionScope { kScene, kUnit };

std::string to_string(MethodName name);
/// Accepts "vanilla", "static-all"/"static_all", "charcom".
MethodName parse_method(std::string_view text);

struct MethodSpec {
  MethodName name = MethodName::kCharCom;
  std::optional<FusionCoefficients> coefficients;  // overrides the world's
  bool flat_prompt = false;
  bool random_order = false;
  bool no_composition = false;  // keep only the top-weighted adapter, at weight 1
  CompositionScope scope = CompositionScope::kUnit;

  /// Ablation flags only make sense for charcom; flat and random order are
  /// mutually exclusive.
  void validate() const;
  /// "vanilla", "static_all", "charcom", or "charcom/<flag>".
  std::string label() const;

  static MethodSpec of(MethodName n) {
    MethodSpec m;
    m.name = n;
    return m;
  }
  static MethodSpec vanilla() { return of(MethodName::kVanilla); }
  static MethodSpec static_all() { return of(MethodName::kStaticAll); }
  static MethodSpec charcom() { return of(MethodName::kCharCom); }
};

struct SceneRecord {
  std::size_t scene_index = 0;
  ScenePrompt prompt;
  FusionPlan plan;                    // scene-level plan
  std::vector<FusionPlan> unit_plans;  // per crop when composing per unit
  std::vector<std::string> crop_ids;  // canonical cast order
  std::vector<std::uint64_t> crop_seeds;
  std::vector<FeatureFrame> crops;
  FeatureFrame composite;  // sum of crops
  SceneScores scores;
  double merge_seconds = 0.0;
  double sample_seconds = 0.0;
};

/// Everything produced for one story under one method. Reproducible from
/// (world seed, benchmark seed, eval seed, method).
struct ExperimentRecord {
  std::string method;
  std::size_t story_id = 0;
  std::uint64_t world_seed = 0;
  std::uint64_t benchmark_seed = 0;
  std::uint64_t eval_seed = 0;
  std::vector<SceneRecord> scenes;
  MetricReport report;
};

/// Plan for one prompt under a method (before any adapter lookup).
FusionPlan method_plan(const MethodSpec& method, ScenePrompt& prompt, const World& world,
                       const std::string& prompt_id);

/// Compiles the scene's prompt as the method's prompt flags require.
ScenePrompt method_prompt(const MethodSpec& method, const SceneSpec& scene, const World& world,
                          std::uint64_t order_seed);

std::vector<ExperimentRecord> run_method(const StoryBenchmark& bench, const MethodSpec& method, const World& world,
                                         std::uint64_t seed);

MetricReport aggregate(std::span<const ExperimentRecord> records, std::size_t cast_size = 0);

struct TableRow {
  std::string label;
  std::size_t cast_size = 0;  // 0 = mixed
  std::size_t reference_count = 0;  // 0 = world default
  MetricReport report;
};

struct Table {
  std::string title;
  std::vector<TableRow> rows;
};

/// Benchmark used by every table built from `seed`.
StoryBenchmark eval_benchmark(const World& world, std::uint64_t seed, const BenchmarkOptions& options = {});

/// One row per method on the default mixed-cast benchmark.
Table main_table(const World& world, std::uint64_t seed, std::span<const MethodSpec> methods,
                 const BenchmarkOptions& options = {});

/// One row per (method, cast size). Every size reuses the same story seeds, so
/// stories keep their protagonist, style and activities while the cast grows.
Table scaling_sweep(const World& world, std::span<const std::size_t> cast_sizes, std::uint64_t seed,
                    std::span<const MethodSpec> methods, const BenchmarkOptions& options = {});

/// Rows: full, flat_prompt, no_composition, random_order.
Table ablation_suite(const World& world, std::uint64_t seed, const BenchmarkOptions& options = {});

/// Retrains every adapter on the first k references for each count and
/// evaluates charcom on one fixed benchmark.
Table refcount_sweep(World world, std::span<const std::size_t> counts, std::uint64_t seed,
                     const BenchmarkOptions& options = {});

/// One-sided sign test: P(X >= wins) for X ~ Binomial(trials, 1/2).
double sign_test_p(std::size_t wins, std::size_t trials);

}  // namespace charcom
