#include "charcom/persistence.h"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "charcom/errors.h"
#include "json.hpp"

namespace charcom {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'C', 'H', 'A', 'D'};

static_assert(std::endian::native == std::endian::little, "adapter files assume a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(double v) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw InvalidArgument("adapter factor does not fit in single precision");
    bytes(&f, 4);
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::size_t offset() const { return pos_; }
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) throw FormatError(std::string("truncated adapter file reading ") + what, pos_);
  }
  void bytes(void* p, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint16_t u16(const char* what) {
    std::uint16_t v;
    bytes(&v, 2, what);
    return v;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  double f32(const char* what) {
    float f;
    const std::size_t at = pos_;
    bytes(&f, 4, what);
    if (!std::isfinite(f)) throw FormatError("non-finite adapter factor", at);
    return f;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  out << text;
}

json parse_json(const fs::path& path) {
  const auto text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

template <typename Fn>
auto with_json_errors(const fs::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
}

void write_matrix(Writer& w, const DenseMatrix& m) {
  for (double v : m.data()) w.f32(v);
}

DenseMatrix read_matrix(Reader& r, std::size_t rows, std::size_t cols, const char* what) {
  r.need(rows * cols * 4, what);
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = r.f32(what);
  return {rows, cols, std::move(data)};
}

}  // namespace

std::size_t adapter_file_size(std::size_t id_length, std::span<const LowRankUpdate> layers) {
  std::size_t n = 4 + 2 + 2 + id_length + 2 + 2;
  for (const auto& l : layers) n += 10 + 4 * (l.d_out() * l.rank() + l.rank() * l.d_in());
  return n + 4;
}

std::vector<std::uint8_t> encode_adapter(const AdapterWeights& adapter) {
  if (adapter.character_id.empty()) throw InvalidArgument("encode_adapter: empty character id");
  if (adapter.character_id.size() > 0xffff) throw InvalidArgument("encode_adapter: character id too long");
  if (adapter.layers.size() != BackboneParams::kAdaptedLayers.size()) {
    throw InvalidArgument("encode_adapter: expected one update per adapted layer");
  }
  if (adapter.rank == 0 || adapter.rank > 0xffff) throw InvalidArgument("encode_adapter: rank out of range");
  Writer w;
  w.bytes(kMagic, 4);
  w.u16(kAdapterFormatVersion);
  w.u16(static_cast<std::uint16_t>(adapter.character_id.size()));
  w.bytes(adapter.character_id.data(), adapter.character_id.size());
  w.u16(static_cast<std::uint16_t>(adapter.rank));
  w.u16(static_cast<std::uint16_t>(adapter.layers.size()));
  for (std::size_t i = 0; i < adapter.layers.size(); ++i) {
    const auto& l = adapter.layers[i];
    if (l.rank() != adapter.rank) throw InvalidArgument("encode_adapter: layer rank differs from adapter rank");
    w.u16(static_cast<std::uint16_t>(BackboneParams::kAdaptedLayers[i]));
    w.u32(static_cast<std::uint32_t>(l.d_out()));
    w.u32(static_cast<std::uint32_t>(l.d_in()));
    write_matrix(w, l.b_factor());
    write_matrix(w, l.a_factor());
  }
  const std::uint32_t crc = crc_of(w.data());
  w.u32(crc);
  return std::move(w.data());
}

AdapterWeights decode_adapter(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an adapter file (bad magic)", 0);
  }
  if (bytes.size() < 8) throw FormatError("truncated adapter file", bytes.size());
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + body, 4);

  Reader r(bytes.first(body));
  std::uint8_t magic[4];
  r.bytes(magic, 4, "magic");
  const std::size_t version_at = r.offset();
  const auto version = r.u16("version");
  if (version != kAdapterFormatVersion) {
    throw FormatError("unsupported adapter format version " + std::to_string(version), version_at);
  }
  const auto id_len = r.u16("id length");
  std::string id(id_len, '\0');
  r.bytes(id.data(), id_len, "character id");
  if (id.empty()) throw FormatError("empty character id", r.offset());
  const std::size_t rank_at = r.offset();
  const auto rank = r.u16("rank");
  if (rank == 0) throw FormatError("rank must be >= 1", rank_at);
  const std::size_t count_at = r.offset();
  const auto layer_count = r.u16("layer count");
  if (layer_count != BackboneParams::kAdaptedLayers.size()) {
    throw FormatError("expected " + std::to_string(BackboneParams::kAdaptedLayers.size()) + " layers, found " +
                          std::to_string(layer_count),
                      count_at);
  }

  AdapterWeights out;
  out.character_id = std::move(id);
  out.rank = rank;
  for (std::size_t i = 0; i < layer_count; ++i) {
    const std::size_t layer_at = r.offset();
    const auto index = r.u16("layer index");
    if (index != BackboneParams::kAdaptedLayers[i]) {
      throw FormatError("unexpected layer index " + std::to_string(index), layer_at);
    }
    const std::size_t dims_at = r.offset();
    const auto d_out = r.u32("d_out");
    const auto d_in = r.u32("d_in");
    if (d_out == 0 || d_in == 0) throw FormatError("zero layer dimension", dims_at);
    auto b = read_matrix(r, d_out, rank, "B factor");
    auto a = read_matrix(r, rank, d_in, "A factor");
    out.layers.emplace_back(std::move(b), std::move(a));
  }
  if (r.offset() != body) throw FormatError("unexpected trailing bytes", r.offset());
  if (crc_of(bytes.first(body)) != stored_crc) throw FormatError("checksum mismatch", body);
  return out;
}

void save_adapter(const AdapterWeights& adapter, const fs::path& path) {
  const auto bytes = encode_adapter(adapter);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

AdapterWeights load_adapter(const fs::path& path) {
  const auto text = read_text(path);
  return decode_adapter({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void save_backbone(const BackboneParams& params, const fs::path& path) {
  ordered_json j;
  j["d_feat"] = params.dims.d_feat;
  j["d_hidden"] = params.dims.d_hidden;
  j["d_cond"] = params.dims.d_cond;
  j["layers"] = json::array();
  for (const auto& layer : params.layers) {
    ordered_json l;
    l["rows"] = layer.weight.rows();
    l["cols"] = layer.weight.cols();
    l["weight"] = std::vector<double>(layer.weight.data().begin(), layer.weight.data().end());
    l["bias"] = layer.bias;
    j["layers"].push_back(std::move(l));
  }
  write_text(path, j.dump() + "\n");
}

BackboneParams load_backbone(const fs::path& path) {
  const auto j = parse_json(path);
  return with_json_errors(path, [&] {
    BackboneParams p;
    p.dims.d_feat = j.at("d_feat").get<std::size_t>();
    p.dims.d_hidden = j.at("d_hidden").get<std::size_t>();
    p.dims.d_cond = j.at("d_cond").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
      const auto rows = l.at("rows").get<std::size_t>();
      const auto cols = l.at("cols").get<std::size_t>();
      auto data = l.at("weight").get<std::vector<double>>();
      if (data.size() != rows * cols) throw FormatError(path.string() + ": layer weight size mismatch", 0);
      p.layers.push_back({DenseMatrix(rows, cols, std::move(data)), l.at("bias").get<std::vector<double>>()});
    }
    try {
      p.validate();
    } catch (const InvalidArgument& e) {
      throw FormatError(path.string() + ": " + e.what(), 0);
    }
    return p;
  });
}

void save_references(const std::string& character_id, std::span<const double> anchor,
                     std::span<const FeatureFrame> frames, const fs::path& path) {
  ordered_json j;
  j["character_id"] = character_id;
  j["anchor"] = std::vector<double>(anchor.begin(), anchor.end());
  j["frames"] = json::array();
  for (const auto& f : frames) j["frames"].push_back(f.values);
  write_text(path, j.dump() + "\n");
}

ReferenceFile load_references(const fs::path& path) {
  const auto j = parse_json(path);
  return with_json_errors(path, [&] {
    ReferenceFile out;
    out.character_id = j.at("character_id").get<std::string>();
    out.anchor = j.at("anchor").get<std::vector<double>>();
    for (const auto& f : j.at("frames")) {
      FeatureFrame frame;
      frame.values = f.get<std::vector<double>>();
      frame.characters_present = {out.character_id};
      out.frames.push_back(std::move(frame));
    }
    return out;
  });
}

void save_manifest(std::span<const ManifestEntry> entries, const fs::path& path) {
  auto j = ordered_json::array();
  for (const auto& e : entries) {
    ordered_json o;
    o["character_id"] = e.character_id;
    o["trigger"] = e.trigger;
    o["attributes"] = e.attributes;
    o["adapter_path"] = e.adapter_path;
    o["reference_path"] = e.reference_path;
    j.push_back(std::move(o));
  }
  write_text(path, j.dump(2) + "\n");
}

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  const auto j = parse_json(path);
  return with_json_errors(path, [&] {
    std::vector<ManifestEntry> out;
    for (const auto& o : j) {
      out.push_back({o.at("character_id").get<std::string>(), o.at("trigger").get<std::string>(),
                     o.at("attributes").get<std::string>(), o.at("adapter_path").get<std::string>(),
                     o.at("reference_path").get<std::string>()});
    }
    return out;
  });
}

namespace {

ordered_json train_to_json(const TrainConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["rank"] = c.rank;
  j["a_stddev"] = c.init.a_stddev;
  j["rank_scale"] = c.rank_scale;
  return j;
}

void train_from_json(const json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.rank = j.value("rank", c.rank);
  c.init.a_stddev = j.value("a_stddev", c.init.a_stddev);
  c.rank_scale = j.value("rank_scale", c.rank_scale);
}

}  // namespace

std::string config_to_json(const WorldConfig& c) {
  ordered_json j;
  j["d_feat"] = c.dims.d_feat;
  j["d_hidden"] = c.dims.d_hidden;
  j["d_cond"] = c.dims.d_cond;
  j["n_characters"] = c.n_characters;
  j["refs_per_character"] = c.refs_per_character;
  j["spread"] = c.spread;
  j["pretrain_pairs"] = c.pretrain_pairs;
  j["sampler_steps"] = c.sampler_steps;
  j["backbone_training"] = train_to_json(c.backbone_training);
  j["adapter_training"] = train_to_json(c.adapter_training);
  j["alpha"] = c.coefficients.alpha;
  j["beta"] = c.coefficients.beta;
  j["weight_threshold"] = c.coefficients.weight_threshold;
  j["min_tokens"] = c.budget.min_tokens;
  j["max_tokens"] = c.budget.max_tokens;
  return j.dump(2) + "\n";
}

WorldConfig config_from_json(const std::string& text, WorldConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config: ") + e.what(), e.byte);
  }
  try {
    if (!j.is_object()) throw FormatError("config: expected a JSON object", 0);
    c.dims.d_feat = j.value("d_feat", c.dims.d_feat);
    c.dims.d_hidden = j.value("d_hidden", c.dims.d_hidden);
    c.dims.d_cond = j.value("d_cond", c.dims.d_cond);
    c.condition_encoder.dimension = c.dims.d_cond;
    c.n_characters = j.value("n_characters", c.n_characters);
    c.refs_per_character = j.value("refs_per_character", c.refs_per_character);
    c.spread = j.value("spread", c.spread);
    c.pretrain_pairs = j.value("pretrain_pairs", c.pretrain_pairs);
    c.sampler_steps = j.value("sampler_steps", c.sampler_steps);
    if (j.contains("backbone_training")) train_from_json(j.at("backbone_training"), c.backbone_training);
    if (j.contains("adapter_training")) train_from_json(j.at("adapter_training"), c.adapter_training);
    c.coefficients.alpha = j.value("alpha", c.coefficients.alpha);
    c.coefficients.beta = j.value("beta", c.coefficients.beta);
    c.coefficients.weight_threshold = j.value("weight_threshold", c.coefficients.weight_threshold);
    c.budget.min_tokens = j.value("min_tokens", c.budget.min_tokens);
    c.budget.max_tokens = j.value("max_tokens", c.budget.max_tokens);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what(), 0);
  }
  return c;
}

void save_world(const World& world, const fs::path& dir) {
  fs::create_directories(dir);
  ordered_json meta;
  meta["seed"] = world.seed;
  meta["adapter_references"] = world.adapter_reference_count;
  meta["config"] = json::parse(config_to_json(world.config));
  write_text(dir / "world.json", meta.dump(2) + "\n");
  save_backbone(world.backbone, dir / "backbone.json");

  std::vector<ManifestEntry> manifest;
  for (const auto& card : world.registry) {
    const std::string ref_rel = "references/" + card.character_id + ".json";
    const auto& refs = world.evaluation_references.at(card.character_id);
    save_references(card.character_id, card.anchor, refs, dir / ref_rel);
    manifest.push_back({card.character_id, card.trigger, card.attributes, "adapters/" + card.character_id + ".chad",
                        ref_rel});
  }
  save_manifest(manifest, dir / "registry.json");
}

void save_adapters(const World& world, const fs::path& dir) {
  for (const auto& [id, adapter] : world.adapters) save_adapter(adapter, dir / "adapters" / (id + ".chad"));
}

World load_world(const fs::path& dir) {
  const auto meta = parse_json(dir / "world.json");
  World world;
  with_json_errors(dir / "world.json", [&] {
    world.seed = meta.at("seed").get<std::uint64_t>();
    world.adapter_reference_count = meta.value("adapter_references", std::size_t{0});
    world.config = config_from_json(meta.at("config").dump());
    return 0;
  });
  world.config.validate();
  world.backbone = load_backbone(dir / "backbone.json");
  if (!(world.backbone.dims == world.config.dims)) {
    throw FormatError("backbone.json dimensions disagree with world.json", 0);
  }
  for (const auto& entry : load_manifest(dir / "registry.json")) {
    auto refs = load_references(dir / entry.reference_path);
    if (refs.character_id != entry.character_id) {
      throw FormatError(entry.reference_path + ": holds references for '" + refs.character_id + "'", 0);
    }
    CharacterDistribution dist;
    dist.character_id = entry.character_id;
    dist.anchor = refs.anchor;
    dist.spread = world.config.spread;
    world.distributions.push_back(dist);

    CharacterCard card;
    card.character_id = entry.character_id;
    card.trigger = entry.trigger;
    card.attributes = entry.attributes;
    card.anchor = refs.anchor;
    const std::size_t k = world.adapter_reference_count == 0
                              ? refs.frames.size()
                              : std::min(world.adapter_reference_count, refs.frames.size());
    card.references.assign(refs.frames.begin(), refs.frames.begin() + static_cast<std::ptrdiff_t>(k));
    world.evaluation_references[entry.character_id] = std::move(refs.frames);
    world.registry.push_back(std::move(card));

    const auto adapter_path = dir / entry.adapter_path;
    if (fs::exists(adapter_path)) {
      auto adapter = load_adapter(adapter_path);
      if (adapter.character_id != entry.character_id) {
        throw FormatError(entry.adapter_path + ": holds the adapter of '" + adapter.character_id + "'", 0);
      }
      world.adapters[entry.character_id] = std::move(adapter);
    }
  }
  validate_registry(world.registry);
  return world;
}

}  // namespace charcom
