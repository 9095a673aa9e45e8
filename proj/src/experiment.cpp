#include "charcom/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "charcom/errors.h"
#include "charcom/random.h"

namespace charcom {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

BackboneParams merged_backbone(const World& world, const LayerUpdates& updates) {
  BackboneParams merged = world.backbone;
  if (updates.empty()) return merged;
  for (std::size_t i = 0; i < BackboneParams::kAdaptedLayers.size(); ++i) {
    auto& layer = merged.layers[BackboneParams::kAdaptedLayers[i]];
    layer.weight = fuse(layer.weight, updates[i]);
  }
  return merged;
}

bool composes_per_unit(const MethodSpec& method, const ScenePrompt& prompt) {
  return method.name == MethodName::kCharCom && method.scope == CompositionScope::kUnit && prompt.structured &&
         !method.no_composition;
}

std::vector<std::string> sorted_cast(const SceneSpec& scene) {
  auto cast = scene.cast;
  std::sort(cast.begin(), cast.end());
  return cast;
}

}  // namespace

std::string to_string(MethodName name) {
  switch (name) {
    case MethodName::kVanilla:
      return "vanilla";
    case MethodName::kStaticAll:
      return "static_all";
    case MethodName::kCharCom:
      return "charcom";
  }
  return "unknown";
}

MethodName parse_method(std::string_view text) {
  if (text == "vanilla") return MethodName::kVanilla;
  if (text == "static-all" || text == "static_all") return MethodName::kStaticAll;
  if (text == "charcom") return MethodName::kCharCom;
  throw InvalidArgument("unknown method '" + std::string(text) + "'");
}

void MethodSpec::validate() const {
  const bool any_flag = flat_prompt || random_order || no_composition;
  if (any_flag && name != MethodName::kCharCom) {
    throw InvalidArgument("ablation flags apply to charcom only");
  }
  if (flat_prompt && random_order) throw InvalidArgument("flat_prompt and random_order are mutually exclusive");
  if (coefficients) coefficients->validate();
}

std::string MethodSpec::label() const {
  std::string out = to_string(name);
  if (flat_prompt) out += "/flat_prompt";
  if (random_order) out += "/random_order";
  if (no_composition) out += "/no_composition";
  if (name == MethodName::kCharCom && scope == CompositionScope::kScene) out += "/scene_scope";
  return out;
}

ScenePrompt method_prompt(const MethodSpec& method, const SceneSpec& scene, const World& world,
                          std::uint64_t order_seed) {
  if (method.flat_prompt) return flat_prompt(scene, world.registry);
  if (method.random_order) return scramble_order(scene, world.registry, order_seed, world.config.budget);
  return compile(scene, world.registry, world.config.budget);
}

FusionPlan method_plan(const MethodSpec& method, ScenePrompt& prompt, const World& world,
                       const std::string& prompt_id) {
  FusionPlan plan;
  plan.prompt_id = prompt_id;
  switch (method.name) {
    case MethodName::kVanilla:
      break;
    case MethodName::kStaticAll: {
      for (const auto& card : world.registry) plan.selected.push_back({card.character_id, 1.0, {}});
      std::sort(plan.selected.begin(), plan.selected.end(),
                [](const PlanEntry& a, const PlanEntry& b) { return a.character_id < b.character_id; });
      break;
    }
    case MethodName::kCharCom: {
      const auto& coeffs = method.coefficients ? *method.coefficients : world.config.coefficients;
      plan = build_plan(prompt, world.registry, coeffs, world.config.encoders, prompt_id);
      if (method.no_composition && !plan.selected.empty()) {
        auto top = *std::max_element(plan.selected.begin(), plan.selected.end(),
                                     [](const PlanEntry& a, const PlanEntry& b) {
                                       if (a.weight != b.weight) return a.weight < b.weight;
                                       return a.character_id > b.character_id;
                                     });
        for (const auto& e : plan.selected) {
          if (e.character_id != top.character_id) plan.excluded.push_back({e.character_id, e.weight, "not top-ranked"});
        }
        top.weight = 1.0;
        plan.selected = {top};
      }
      break;
    }
  }
  return plan;
}

std::vector<ExperimentRecord> run_method(const StoryBenchmark& bench, const MethodSpec& method, const World& world,
                                         std::uint64_t seed) {
  method.validate();
  if (method.name == MethodName::kStaticAll) {
    for (const auto& card : world.registry) {
      if (!world.adapters.contains(card.character_id)) {
        throw NotFound("no adapter stored for character '" + card.character_id + "'");
      }
    }
  }
  const auto eval_registry = world.evaluation_registry();
  const auto embedder = world.identity_embedder();
  const auto judge = embedding_pair_judge(*embedder);
  const auto schedule = world.schedule();
  const double rank_scale = world.config.adapter_training.rank_scale;

  std::vector<ExperimentRecord> records;
  for (const auto& story : bench.stories) {
    ExperimentRecord rec;
    rec.method = method.label();
    rec.story_id = story.story_id;
    rec.world_seed = world.seed;
    rec.benchmark_seed = bench.seed;
    rec.eval_seed = seed;
    rec.report.method = rec.method;

    std::map<std::string, std::vector<FeatureFrame>> appearances;
    for (const auto& scene : story.scenes) {
      SceneRecord sr;
      sr.scene_index = scene.scene_index;
      sr.prompt = method_prompt(method, scene, world, derive_seed(seed, "order", {story.story_id, scene.scene_index}));

      const auto merge_start = Clock::now();
      const std::string prompt_id = "s" + std::to_string(story.story_id) + "-p" + std::to_string(scene.scene_index);
      sr.plan = method_plan(method, sr.prompt, world, prompt_id);
      sr.crop_ids = sorted_cast(scene);
      std::vector<BackboneParams> models;  // one per crop, or a single shared model
      if (composes_per_unit(method, sr.prompt)) {
        for (const auto& id : sr.crop_ids) {
          ScenePrompt unit;
          unit.text = sr.prompt.unit_text(id);
          sr.unit_plans.push_back(method_plan(method, unit, world, prompt_id + "/" + id));
          models.push_back(merged_backbone(world, plan_to_updates(sr.unit_plans.back(), world.adapters, rank_scale)));
        }
      } else {
        models.push_back(merged_backbone(world, plan_to_updates(sr.plan, world.adapters, rank_scale)));
      }
      sr.merge_seconds = seconds_since(merge_start);

      const auto sample_start = Clock::now();
      sr.composite.values.assign(world.config.dims.d_feat, 0.0);
      sr.composite.scene_index = scene.scene_index;
      sr.composite.characters_present = sr.crop_ids;
      for (const auto& id : sr.crop_ids) {
        const auto crop_seed = derive_seed(seed, "crop", {story.story_id, scene.scene_index, fnv1a64(id)});
        const auto cond = world.encode_condition(sr.prompt.unit_text(id));
        const auto& model = models.size() == 1 ? models.front() : models[sr.crops.size()];
        FeatureFrame crop = charcom::sample(model, {}, cond, schedule, crop_seed);
        crop.scene_index = scene.scene_index;
        crop.characters_present = {id};
        for (std::size_t i = 0; i < crop.values.size(); ++i) sr.composite.values[i] += crop.values[i];
        sr.crop_seeds.push_back(crop_seed);
        sr.crops.push_back(std::move(crop));
      }
      sr.sample_seconds = seconds_since(sample_start);

      double is_sum = 0.0;
      for (std::size_t i = 0; i < sr.crops.size(); ++i) {
        const auto& card = find_card(eval_registry, sr.crop_ids[i]);
        is_sum += proxy_is(sr.crops[i], card, *embedder);
        appearances[sr.crop_ids[i]].push_back(sr.crops[i]);
      }
      sr.scores.story_id = story.story_id;
      sr.scores.scene_index = scene.scene_index;
      sr.scores.cast_size = sr.crops.size();
      if (sr.crops.empty()) {
        sr.scores.judge = {1.0, 1.0};
      } else {
        sr.scores.judge.is_score = is_sum / static_cast<double>(sr.crops.size());
        const auto target = prompt_target_embedding(sr.prompt, eval_registry, *embedder);
        sr.scores.judge.pfs_score = proxy_pfs(sr.composite, target, *embedder);
      }
      sr.scores.ics = ics(sr.scores.judge.is_score, sr.scores.judge.pfs_score);
      rec.report.scenes.push_back(sr.scores);
      rec.scenes.push_back(std::move(sr));
    }

    std::vector<CharacterSequence> sequences;
    for (auto& [id, frames] : appearances) {
      if (frames.size() >= 2) sequences.push_back({id, std::move(frames)});
    }
    if (!sequences.empty()) {
      rec.report.story_t_ics.push_back(t_ics(sequences, judge));
      rec.report.story_t_ics_emb.push_back(t_ics_emb(sequences, *embedder));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

MetricReport aggregate(std::span<const ExperimentRecord> records, std::size_t cast_size) {
  MetricReport out;
  out.cast_size = cast_size;
  for (const auto& r : records) {
    if (out.method.empty()) out.method = r.method;
    out.merge(r.report);
  }
  return out;
}

StoryBenchmark eval_benchmark(const World& world, std::uint64_t seed, const BenchmarkOptions& options) {
  return gen_benchmark(derive_seed(seed, "benchmark"), world.registry, options);
}

Table main_table(const World& world, std::uint64_t seed, std::span<const MethodSpec> methods,
                 const BenchmarkOptions& options) {
  const auto bench = eval_benchmark(world, seed, options);
  Table table{"Method comparison", {}};
  for (const auto& m : methods) {
    const auto records = run_method(bench, m, world, seed);
    table.rows.push_back({m.label(), 0, 0, aggregate(records)});
  }
  return table;
}

Table scaling_sweep(const World& world, std::span<const std::size_t> cast_sizes, std::uint64_t seed,
                    std::span<const MethodSpec> methods, const BenchmarkOptions& options) {
  Table table{"Scaling with cast size", {}};
  for (const std::size_t size : cast_sizes) {
    if (size > world.registry.size()) {
      throw InvalidArgument("scaling_sweep: cast size " + std::to_string(size) + " exceeds pool of " +
                            std::to_string(world.registry.size()));
    }
  }
  for (const auto& m : methods) {
    for (const std::size_t size : cast_sizes) {
      BenchmarkOptions opts = options;
      opts.fixed_cast = size;
      const auto bench = gen_benchmark(derive_seed(seed, "benchmark"), world.registry, opts);
      const auto records = run_method(bench, m, world, seed);
      table.rows.push_back({m.label(), size, 0, aggregate(records, size)});
    }
  }
  return table;
}

Table ablation_suite(const World& world, std::uint64_t seed, const BenchmarkOptions& options) {
  const auto bench = eval_benchmark(world, seed, options);
  MethodSpec full = MethodSpec::charcom();
  MethodSpec flat = full;
  flat.flat_prompt = true;
  MethodSpec single = full;
  single.no_composition = true;
  MethodSpec scrambled = full;
  scrambled.random_order = true;

  Table table{"Ablations", {}};
  const std::pair<const char*, MethodSpec> variants[] = {
      {"full", full}, {"flat_prompt", flat}, {"no_composition", single}, {"random_order", scrambled}};
  for (const auto& [label, spec] : variants) {
    const auto records = run_method(bench, spec, world, seed);
    table.rows.push_back({label, 0, 0, aggregate(records)});
  }
  return table;
}

Table refcount_sweep(World world, std::span<const std::size_t> counts, std::uint64_t seed,
                     const BenchmarkOptions& options) {
  const auto bench = eval_benchmark(world, seed, options);
  Table table{"Reference count", {}};
  for (const std::size_t k : counts) {
    train_all_adapters(world, k);
    const auto records = run_method(bench, MethodSpec::charcom(), world, seed);
    table.rows.push_back({"refs=" + std::to_string(k), 0, k, aggregate(records)});
  }
  return table;
}

double sign_test_p(std::size_t wins, std::size_t trials) {
  if (wins > trials) throw InvalidArgument("sign_test_p: wins exceed trials");
  // Sum of C(n, k) / 2^n for k >= wins, in log space.
  double p = 0.0;
  for (std::size_t k = wins; k <= trials; ++k) {
    const double log_c = std::lgamma(static_cast<double>(trials) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
                         std::lgamma(static_cast<double>(trials - k) + 1.0);
    p += std::exp(log_c - static_cast<double>(trials) * std::log(2.0));
  }
  return std::min(1.0, p);
}

}  // namespace charcom
