#include "medkg/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "medkg/attention.hpp"
#include "medkg/kg.hpp"

namespace medkg {
namespace {

constexpr int kFormatVersion = 1;

std::string mode_name(EncoderMode mode) {
  return mode == EncoderMode::causal ? "causal" : "bidirectional";
}

EncoderMode mode_from_name(const std::string& s) {
  if (s == "causal") return EncoderMode::causal;
  if (s == "bidirectional") return EncoderMode::bidirectional;
  throw std::runtime_error("checkpoint: unknown encoder mode '" + s + "'");
}

void append_le_float(std::string& out, double v) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

double read_le_float(const std::string& bytes, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int b = 3; b >= 0; --b) {
    bits = (bits << 8) |
           static_cast<std::uint8_t>(bytes[offset + static_cast<std::size_t>(b)]);
  }
  return static_cast<double>(std::bit_cast<float>(bits));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: short write to " + path);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string config_digest(const nlohmann::json& resolved) {
  const std::uint64_t h = fnv1a64(resolved.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg) {
  return {{"vocab_size", cfg.vocab_size},
          {"max_seq_len", cfg.max_seq_len},
          {"dim", cfg.dim},
          {"layers", cfg.layers},
          {"heads", cfg.heads},
          {"ffn_mult", cfg.ffn_mult},
          {"mode", mode_name(cfg.mode)},
          {"num_classes", cfg.num_classes},
          {"truncate_long_inputs", cfg.truncate_long_inputs},
          {"tie_lm_head", cfg.tie_lm_head},
          {"pad_id", cfg.pad_id},
          {"bos_id", cfg.bos_id}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.max_seq_len = j.at("max_seq_len").get<int>();
  cfg.dim = j.at("dim").get<int>();
  cfg.layers = j.at("layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.ffn_mult = j.at("ffn_mult").get<int>();
  cfg.mode = mode_from_name(j.at("mode").get<std::string>());
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.truncate_long_inputs = j.at("truncate_long_inputs").get<bool>();
  cfg.tie_lm_head = j.at("tie_lm_head").get<bool>();
  cfg.pad_id = j.at("pad_id").get<int>();
  cfg.bos_id = j.at("bos_id").get<int>();
  return cfg;
}

nlohmann::json medkg_config_to_json(const MedKGConfig& cfg) {
  return {{"encoder", encoder_config_to_json(cfg.encoder)},
          {"entity_dim", cfg.entity_dim},
          {"kg_attention", to_string(cfg.kg_attention)},
          {"smooth_rounds", cfg.smooth_rounds}};
}

MedKGConfig medkg_config_from_json(const nlohmann::json& j) {
  MedKGConfig cfg;
  cfg.encoder = encoder_config_from_json(j.at("encoder"));
  cfg.entity_dim = j.at("entity_dim").get<int>();
  cfg.kg_attention = scoring_kind_from_string(j.at("kg_attention").get<std::string>());
  cfg.smooth_rounds = j.at("smooth_rounds").get<int>();
  return cfg;
}

void save_checkpoint(const ModelBundle& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto named = model.named_params();

  nlohmann::json config = medkg_config_to_json(model.cfg);
  nlohmann::json manifest = {
      {"format_version", kFormatVersion},
      {"model", to_string(model.kind)},
      {"medg_strict", model.medg_strict},
      {"seed", model.seed},
      {"config", config},
      {"config_digest", config_digest(config)},
  };
  nlohmann::json params = nlohmann::json::array();
  std::string bin;
  for (const auto& [name, t] : named) {
    params.push_back({{"name", name}, {"shape", t.shape}});
    for (double v : *t.data) append_le_float(bin, v);
  }
  manifest["params"] = params;

  write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
  write_file(dir + "/params.bin", bin);
}

ModelBundle load_checkpoint(const std::string& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir + "/manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: bad manifest in " + dir + ": " +
                             e.what());
  }
  if (manifest.at("format_version").get<int>() != kFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format version");
  }

  ModelBundle model;
  model.kind = model_kind_from_string(manifest.at("model").get<std::string>());
  model.medg_strict = manifest.at("medg_strict").get<bool>();
  model.seed = manifest.at("seed").get<std::uint64_t>();
  model.cfg = medkg_config_from_json(manifest.at("config"));

  const nlohmann::json& params = manifest.at("params");
  Rng rng(0);  // placeholder values, overwritten below
  if (model.kind == ModelKind::medkg) {
    KnowledgeGraph skeleton;
    for (const auto& p : params) {
      const std::string name = p.at("name").get<std::string>();
      if (name.rfind("entity.", 0) == 0) {
        const std::string id = name.substr(7);
        skeleton.entities[id] =
            Entity{id, entity_type_from_id(id), {}, false};
      }
    }
    model.medkg = MedKGParams::init(model.cfg, skeleton, rng);
  } else {
    model.enc = EncoderParams::init(model.cfg.encoder, rng);
  }

  auto named = model.named_params();
  if (named.size() != params.size()) {
    throw std::runtime_error("checkpoint: parameter count mismatch");
  }
  const std::string bin = read_file(dir + "/params.bin");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    if (params[i].at("name").get<std::string>() != name) {
      throw std::runtime_error("checkpoint: parameter order mismatch at '" +
                               name + "'");
    }
    if (params[i].at("shape").get<std::vector<int>>() != t.shape) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    }
    if (offset + 4 * t.data->size() > bin.size()) {
      throw std::runtime_error("checkpoint: params.bin truncated");
    }
    for (double& v : *t.data) {
      v = read_le_float(bin, offset);
      offset += 4;
    }
  }
  if (offset != bin.size()) {
    throw std::runtime_error("checkpoint: params.bin has trailing bytes");
  }
  return model;
}

nlohmann::json metrics_report_json(const std::string& model,
                                   const EvalResult& result,
                                   const std::string& digest,
                                   std::uint64_t seed) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const ClassMetrics& c : result.metrics.per_class) {
    per_class.push_back({{"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1}});
  }
  nlohmann::json confusion = nlohmann::json::array();
  for (int g = 0; g < result.cm.num_classes; ++g) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < result.cm.num_classes; ++p) {
      row.push_back(result.cm.at(g, p));
    }
    confusion.push_back(row);
  }
  return {{"model", model},
          {"accuracy", result.metrics.accuracy},
          {"macro_f1", result.metrics.macro_f1},
          {"per_class", per_class},
          {"confusion", confusion},
          {"config_digest", digest},
          {"seed", seed}};
}

}  // namespace medkg
