#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "medkg/metrics.hpp"
#include "medkg/train.hpp"

namespace medkg {

// FNV-1a over the canonical (sorted-key) JSON rendering; stable across runs
// and platforms, printed as 16 lowercase hex digits.
std::uint64_t fnv1a64(const std::string& bytes);
std::string config_digest(const nlohmann::json& resolved);

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::json medkg_config_to_json(const MedKGConfig& cfg);
MedKGConfig medkg_config_from_json(const nlohmann::json& j);

// Checkpoint directory layout: manifest.json (format version, model kind,
// config, seed, parameter names and shapes) plus params.bin holding every
// parameter as little-endian float32, concatenated in manifest order.
void save_checkpoint(const ModelBundle& model, const std::string& dir);
ModelBundle load_checkpoint(const std::string& dir);

nlohmann::json metrics_report_json(const std::string& model,
                                   const EvalResult& result,
                                   const std::string& digest,
                                   std::uint64_t seed);

}  // namespace medkg
