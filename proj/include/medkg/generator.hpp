#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medkg/corpus.hpp"
#include "medkg/kg.hpp"

namespace medkg {

struct GeneratorConfig {
  int num_docs = 1000;
  int num_classes = 4;       // 2..8 (curated disease/symptom name pool)
  int vocab_noise = 200;     // distinct filler tokens sprinkled across docs
  std::uint64_t seed = 7;
  // Fraction of documents whose label is inferable only through the
  // drug -> treats -> disease mapping (the text never names the disease).
  double kg_signal_fraction = 0.5;
  // Fraction of those signal documents whose drug is a one-off: it appears in
  // exactly one record, so no text model can learn it from co-occurrence, yet
  // the gazetteer still links it and the gold triples still resolve it.
  double kg_holdout = 0.0;

  void validate() const;
};

struct SyntheticData {
  std::vector<Document> docs;
  Gazetteer gazetteer;             // covers every planted mention
  std::vector<Triple> gold_triples;  // sorted by (head, relation, tail)
  // Canonical entity ids planted in each document, aligned with docs.
  std::vector<std::vector<std::string>> planted;
};

SyntheticData generate_synthetic(const GeneratorConfig& cfg);

}  // namespace medkg
