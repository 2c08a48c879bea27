#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "medkg/corpus.hpp"

namespace medkg {

enum class EntityType { disease, drug, symptom, other };

std::string to_string(EntityType type);
EntityType entity_type_from_string(const std::string& s);

// Canonical ids follow the "type:name" convention ("drug:aspirin"); ids
// without a recognized prefix type as `other`.
EntityType entity_type_from_id(const std::string& canonical_id);

struct Entity {
  std::string canonical_id;
  EntityType type = EntityType::other;
  std::set<std::string> surface_forms;
  bool gazetteer_anchor = false;

  bool operator==(const Entity&) const = default;
};

struct Triple {
  std::string head;
  std::string relation;
  std::string tail;
  long long support = 1;

  bool operator==(const Triple&) const = default;
};

struct Mention {
  std::string doc_id;
  int start = 0;
  int end = 0;  // token span [start, end)
  std::string surface;  // normalized tokens joined with single spaces
  EntityType type = EntityType::other;
};

class Gazetteer {
 public:
  struct Row {
    EntityType type;
    std::string canonical_id;
  };

  // Surfaces must already be normalized (corpus pipeline). A duplicate
  // surface with a different canonical id is a data conflict.
  void add(const std::string& surface, EntityType type,
           const std::string& canonical_id);

  std::optional<Row> lookup(const std::string& surface) const;
  int max_surface_tokens() const { return max_surface_tokens_; }
  std::size_t size() const { return rows_.size(); }
  const std::map<std::string, Row>& rows() const { return rows_; }

  static Gazetteer read_tsv(const std::string& path);
  void write_tsv(const std::string& path) const;

 private:
  std::map<std::string, Row> rows_;  // surface -> row, ordered for output
  int max_surface_tokens_ = 0;
};

struct KnowledgeGraph {
  std::map<std::string, Entity> entities;
  std::vector<Triple> triples;  // sorted by (head, relation, tail), unique

  void validate() const;
  bool operator==(const KnowledgeGraph&) const = default;
};

inline constexpr const char* kCoOccursRelation = "co_occurs_with";
inline constexpr int kMaxMentionTokens = 5;

// Leftmost-longest gazetteer matching over token n-grams (n <= 5); matched
// spans never overlap and come back sorted by start.
std::vector<Mention> extract_mentions(const std::vector<std::string>& tokens,
                                      const Gazetteer& gazetteer,
                                      const std::string& doc_id = "");

// Mentions -> canonical ids, deduplicated preserving first occurrence.
std::vector<std::string> link_mentions(const std::vector<Mention>& mentions,
                                       const Gazetteer& gazetteer);

// Pairwise co-occurrence triples: distinct entities whose spans sit within
// `window` tokens of each other (gap measured end-to-start); head/tail in
// lexicographic order; support = number of distinct evidencing documents.
std::vector<Triple> extract_relations(
    const std::vector<std::vector<Mention>>& mentions_per_doc,
    const Gazetteer& gazetteer, int window);

// Entities from the gazetteer (anchored) plus stubs for triple endpoints.
KnowledgeGraph graph_from(const Gazetteer& gazetteer,
                          std::vector<Triple> triples);

// Full pipeline: normalize each document, match mentions, build co-occurrence
// triples, assemble the graph.
KnowledgeGraph build_graph(const std::vector<Document>& corpus,
                           const PreprocessConfig& pre,
                           const Gazetteer& gazetteer, int window);

KnowledgeGraph merge_graphs(const KnowledgeGraph& g1, const KnowledgeGraph& g2);

// Jaccard similarity over the {(relation, neighbor)} sets of a and b, both
// directions, with a/b excluded from each other's neighborhoods.
double entity_similarity(const std::string& a, const std::string& b,
                         const KnowledgeGraph& g);

// Keeps triples with support >= min_support; drops entities left without
// triples unless the gazetteer anchored them.
KnowledgeGraph quality_filter(const KnowledgeGraph& g, int min_support);

std::vector<Triple> read_triples_tsv(const std::string& path);
void write_triples_tsv(const std::vector<Triple>& triples,
                       const std::string& path);

}  // namespace medkg
