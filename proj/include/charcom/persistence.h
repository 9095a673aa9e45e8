#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "charcom/backbone.h"
#include "charcom/promptc.h"
#include "charcom/trainer.h"
#include "charcom/world.h"

namespace charcom {

inline constexpr std::uint16_t kAdapterFormatVersion = 1;

/// Adapter file layout (little-endian):
///   "CHAD" | u16 version | u16 id length | id bytes | u16 rank | u16 layers
///   per layer: u16 backbone layer index | u32 d_out | u32 d_in | B f32[] | A f32[]
///   u32 CRC-32 of every preceding byte
/// Factors are stored in single precision; values that are not exactly
/// representable are rounded.
std::vector<std::uint8_t> encode_adapter(const AdapterWeights& adapter);

/// Throws FormatError (with the offending byte offset) on bad magic, version,
/// truncation, inconsistent shapes, trailing bytes or checksum mismatch.
AdapterWeights decode_adapter(std::span<const std::uint8_t> bytes);

/// Expected encoded size for the given shapes.
std::size_t adapter_file_size(std::size_t id_length, std::span<const LowRankUpdate> layers);

void save_adapter(const AdapterWeights& adapter, const std::filesystem::path& path);
/// NotFound if the file is missing.
AdapterWeights load_adapter(const std::filesystem::path& path);

void save_backbone(const BackboneParams& params, const std::filesystem::path& path);
BackboneParams load_backbone(const std::filesystem::path& path);

/// Anchor and frames of one character.
void save_references(const std::string& character_id, std::span<const double> anchor,
                     std::span<const FeatureFrame> frames, const std::filesystem::path& path);
struct ReferenceFile {
  std::string character_id;
  std::vector<double> anchor;
  std::vector<FeatureFrame> frames;
};
ReferenceFile load_references(const std::filesystem::path& path);

struct ManifestEntry {
  std::string character_id;
  std::string trigger;
  std::string attributes;
  std::string adapter_path;    // relative to the manifest's directory
  std::string reference_path;  // relative to the manifest's directory
};

void save_manifest(std::span<const ManifestEntry> entries, const std::filesystem::path& path);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

/// WorldConfig as JSON; missing keys keep their defaults.
std::string config_to_json(const WorldConfig& config);
WorldConfig config_from_json(const std::string& text, WorldConfig base = {});

/// Artifact directory layout:
///   world.json          seed and config
///   backbone.json
///   registry.json       manifest
///   references/<id>.json
///   adapters/<id>.chad  (written by save_adapters)
void save_world(const World& world, const std::filesystem::path& dir);
void save_adapters(const World& world, const std::filesystem::path& dir);
/// Loads whatever adapters exist; a manifest entry whose adapter file is
/// missing is simply left untrained.
World load_world(const std::filesystem::path& dir);

}  // namespace charcom
