// Command-line front end: artifact training, generation, evaluation and the
// experiment tables.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "charcom/benchmark.h"
#include "charcom/errors.h"
#include "charcom/experiment.h"
#include "charcom/persistence.h"
#include "charcom/report.h"
#include "charcom/world.h"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace charcom;

namespace {

enum ExitCode { kOk = 0, kInvalidArgs = 2, kFormat = 3, kMissing = 4 };

struct Options {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out = "out";
  std::optional<std::size_t> rank;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> threshold;
  std::optional<std::size_t> refs;
  std::string method = "charcom";
  std::string scope = "unit";
  std::size_t stories = 20;
  std::size_t prompts = 5;
  std::vector<std::size_t> counts = {1, 5, 15, 30};
  std::vector<std::size_t> sizes = {1, 2, 3, 4};
  std::string character;
  std::string bench_path;
  std::vector<std::string> cast;
  std::string action;
  std::string style;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

WorldConfig apply_overrides(WorldConfig c, const Options& o) {
  if (o.rank) c.adapter_training.rank = *o.rank;
  if (o.alpha) c.coefficients.alpha = *o.alpha;
  if (o.beta) c.coefficients.beta = *o.beta;
  if (o.threshold) c.coefficients.weight_threshold = *o.threshold;
  if (o.refs) c.refs_per_character = *o.refs;
  c.validate();
  return c;
}

WorldConfig make_config(const Options& o) {
  WorldConfig c;
  if (!o.config_path.empty()) c = config_from_json(read_file(o.config_path));
  return apply_overrides(c, o);
}

BenchmarkOptions bench_options(const Options& o) {
  BenchmarkOptions b;
  b.n_stories = o.stories;
  b.prompts_per_story = o.prompts;
  return b;
}

MethodSpec method_spec(const Options& o, const WorldConfig& c) {
  MethodSpec m = MethodSpec::of(parse_method(o.method));
  if (o.scope == "scene") {
    m.scope = CompositionScope::kScene;
  } else if (o.scope != "unit") {
    throw InvalidArgument("--scope must be 'unit' or 'scene'");
  }
  m.coefficients = c.coefficients;
  return m;
}

/// World from --out when artifacts exist there, with CLI overrides applied.
World load_artifacts(const Options& o) {
  World w = load_world(o.out);
  w.config = apply_overrides(w.config, o);
  return w;
}

void log_timings(const std::vector<ExperimentRecord>& records) {
  const auto t = summarize_timings(records);
  std::fprintf(stderr, "scenes: %zu  median merge: %.3f ms  median sampling: %.3f ms\n", t.scenes,
               t.median_merge_seconds * 1e3, t.median_sample_seconds * 1e3);
}

int cmd_train_backbone(const Options& o) {
  const World w = build_base_world(make_config(o), o.seed);
  save_world(w, o.out);
  std::ofstream trace(fs::path(o.out) / "backbone_loss.txt");
  write_loss_trace(trace, w.backbone_loss_trace);
  std::printf("backbone trained: final loss %.6f, hash %016llx\n",
              w.backbone_loss_trace.empty() ? 0.0 : w.backbone_loss_trace.back(),
              static_cast<unsigned long long>(parameter_hash(w.backbone)));
  return kOk;
}

int cmd_train_adapter(const Options& o) {
  World w = load_artifacts(o);
  const std::size_t k = o.refs.value_or(w.config.refs_per_character);
  World trained = w;
  train_all_adapters(trained, k);
  for (const auto& [id, adapter] : trained.adapters) {
    if (!o.character.empty() && id != o.character) continue;
    save_adapter(adapter, fs::path(o.out) / "adapters" / (id + ".chad"));
    std::ofstream trace(fs::path(o.out) / "adapters" / (id + ".loss.txt"));
    write_loss_trace(trace, adapter.loss_trace);
    std::printf("%s: %zu parameters, final loss %.6f\n", id.c_str(), adapter.parameter_count(), adapter.final_loss);
  }
  if (!o.character.empty() && !trained.adapters.contains(o.character)) {
    throw NotFound("unknown character '" + o.character + "'");
  }
  // Record the reference count the adapters were trained on.
  w.adapter_reference_count = k;
  w.adapters.clear();
  save_world(w, o.out);
  return kOk;
}

int cmd_generate(const Options& o) {
  World w = load_artifacts(o);
  if (o.cast.empty()) throw InvalidArgument("generate: --cast is required");
  StoryBenchmark bench;
  bench.seed = o.seed;
  SceneSpec scene{o.action, o.style, o.cast, 0};
  bench.stories.push_back({0, o.cast.front(), {scene}});
  const auto records = run_method(bench, method_spec(o, w.config), w, o.seed);
  const auto& sr = records.front().scenes.front();

  nlohmann::ordered_json j;
  j["prompt"] = sr.prompt.text;
  auto plan_json = [](const FusionPlan& plan) {
    nlohmann::ordered_json p;
    p["prompt_id"] = plan.prompt_id;
    p["selected"] = nlohmann::ordered_json::array();
    for (const auto& e : plan.selected) p["selected"].push_back({{"character_id", e.character_id}, {"weight", e.weight}});
    p["excluded"] = nlohmann::ordered_json::array();
    for (const auto& e : plan.excluded) {
      p["excluded"].push_back({{"character_id", e.character_id}, {"weight", e.weight}, {"reason", e.reason}});
    }
    return p;
  };
  j["plan"] = plan_json(sr.plan);
  j["unit_plans"] = nlohmann::ordered_json::array();
  for (const auto& p : sr.unit_plans) j["unit_plans"].push_back(plan_json(p));
  j["crops"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < sr.crops.size(); ++i) {
    j["crops"].push_back({{"character_id", sr.crop_ids[i]}, {"seed", sr.crop_seeds[i]}, {"values", sr.crops[i].values}});
  }
  j["scores"] = {{"IS", sr.scores.judge.is_score}, {"PFS", sr.scores.judge.pfs_score}, {"ICS", sr.scores.ics}};
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_evaluate(const Options& o) {
  World w = load_artifacts(o);
  StoryBenchmark bench;
  if (!o.bench_path.empty()) {
    std::ifstream in(o.bench_path);
    if (!in) throw NotFound("cannot open '" + o.bench_path + "'");
    bench = read_benchmark_jsonl(in);
  } else {
    bench = eval_benchmark(w, o.seed, bench_options(o));
  }
  const MethodSpec m = method_spec(o, w.config);
  const auto records = run_method(bench, m, w, o.seed);
  log_timings(records);
  Table t{"Evaluation", {{m.label(), 0, 0, aggregate(records)}}};
  emit_report(t, o.out, "evaluate_" + to_string(m.name));
  write_csv(std::cout, t);
  return kOk;
}

int cmd_bench(const Options& o) {
  const World w = build_world(make_config(o), o.seed);
  const auto bench = eval_benchmark(w, o.seed, bench_options(o));
  fs::create_directories(o.out);
  {
    std::ofstream out(fs::path(o.out) / "benchmark.jsonl");
    write_benchmark_jsonl(out, bench);
  }
  Table t{"Method comparison", {}};
  std::vector<ExperimentRecord> all;
  for (const auto name : {MethodName::kVanilla, MethodName::kStaticAll, MethodName::kCharCom}) {
    MethodSpec m = MethodSpec::of(name);
    m.coefficients = w.config.coefficients;
    auto records = run_method(bench, m, w, o.seed);
    t.rows.push_back({m.label(), 0, 0, aggregate(records)});
    all.insert(all.end(), records.begin(), records.end());
  }
  log_timings(all);
  emit_report(t, o.out, "bench");
  write_csv(std::cout, t);
  return kOk;
}

int cmd_sweep_chars(const Options& o) {
  const World w = build_world(make_config(o), o.seed);
  std::vector<MethodSpec> methods;
  for (const auto name : {MethodName::kVanilla, MethodName::kStaticAll, MethodName::kCharCom}) {
    methods.push_back(MethodSpec::of(name));
    methods.back().coefficients = w.config.coefficients;
  }
  const Table t = scaling_sweep(w, o.sizes, o.seed, methods, bench_options(o));
  emit_report(t, o.out, "sweep_chars");
  write_csv(std::cout, t);
  return kOk;
}

int cmd_sweep_refs(const Options& o) {
  const World w = build_base_world(make_config(o), o.seed);
  const Table t = refcount_sweep(w, o.counts, o.seed, bench_options(o));
  emit_report(t, o.out, "sweep_refs");
  write_csv(std::cout, t);
  return kOk;
}

int cmd_ablate(const Options& o) {
  const World w = build_world(make_config(o), o.seed);
  const Table t = ablation_suite(w, o.seed, bench_options(o));
  emit_report(t, o.out, "ablation");
  write_csv(std::cout, t);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-character low-rank adapter composition on a miniature diffusion backbone"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--seed", o.seed, "Base seed for worlds, benchmarks and sampling");
  app.add_option("--config", o.config_path, "World configuration JSON");
  app.add_option("--out", o.out, "Artifact and report directory")->capture_default_str();

  auto add_model_flags = [&](CLI::App* sub) {
    sub->add_option("--rank", o.rank, "Adapter rank (default 4)");
    sub->add_option("--alpha", o.alpha, "Text cosine coefficient (default 1.0)");
    sub->add_option("--beta", o.beta, "Reference cosine coefficient (default 1.0)");
    sub->add_option("--weight-threshold", o.threshold, "Minimum relevance weight (default 0.6)");
  };
  auto add_bench_flags = [&](CLI::App* sub) {
    sub->add_option("--stories", o.stories, "Stories in the generated benchmark")->capture_default_str();
    sub->add_option("--prompts", o.prompts, "Prompts per story")->capture_default_str();
  };
  auto add_method_flags = [&](CLI::App* sub) {
    sub->add_option("--method", o.method, "vanilla | static-all | charcom")
        ->check(CLI::IsMember({"vanilla", "static-all", "static_all", "charcom"}))
        ->capture_default_str();
    sub->add_option("--scope", o.scope, "charcom composition scope: unit | scene")
        ->check(CLI::IsMember({"unit", "scene"}))
        ->capture_default_str();
  };

  auto* train_backbone = app.add_subcommand("train-backbone", "Create characters and pre-train the backbone");
  auto* train_adapter = app.add_subcommand("train-adapter", "Train per-character adapters on stored artifacts");
  train_adapter->add_option("--character", o.character, "Only write this character's adapter");
  train_adapter->add_option("--refs", o.refs, "References per character");
  auto* generate = app.add_subcommand("generate", "Generate one scene and print plan, crops and scores as JSON");
  generate->add_option("--cast", o.cast, "Character ids")->delimiter(',');
  generate->add_option("--action", o.action, "Action text (mention characters by trigger)");
  generate->add_option("--style", o.style, "Style note");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate one method on stored artifacts");
  evaluate->add_option("--bench", o.bench_path, "Benchmark JSONL (generated from --seed when omitted)");
  auto* bench = app.add_subcommand("bench", "Build a world and compare vanilla, static_all and charcom");
  bench->add_option("--refs", o.refs, "References per character");
  auto* sweep_chars = app.add_subcommand("sweep-chars", "Metrics versus cast size");
  sweep_chars->add_option("--sizes", o.sizes, "Cast sizes")->delimiter(',');
  sweep_chars->add_option("--refs", o.refs, "References per character");
  auto* sweep_refs = app.add_subcommand("sweep-refs", "Charcom metrics versus reference count");
  sweep_refs->add_option("--counts", o.counts, "Reference counts")->delimiter(',');
  auto* ablate = app.add_subcommand("ablate", "Structured prompt, composition and ordering ablations");
  ablate->add_option("--refs", o.refs, "References per character");

  for (auto* sub : {train_backbone, train_adapter, generate, evaluate, bench, sweep_chars, sweep_refs, ablate}) {
    add_model_flags(sub);
  }
  for (auto* sub : {evaluate, bench, sweep_chars, sweep_refs, ablate}) add_bench_flags(sub);
  for (auto* sub : {generate, evaluate}) add_method_flags(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalidArgs;
  }

  try {
    if (*train_backbone) return cmd_train_backbone(o);
    if (*train_adapter) return cmd_train_adapter(o);
    if (*generate) return cmd_generate(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*bench) return cmd_bench(o);
    if (*sweep_chars) return cmd_sweep_chars(o);
    if (*sweep_refs) return cmd_sweep_refs(o);
    if (*ablate) return cmd_ablate(o);
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kFormat;
  } catch (const NotFound& e) {
    std::fprintf(stderr, "missing artifact: %s\n", e.what());
    return kMissing;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return kInvalidArgs;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kInvalidArgs;
}
