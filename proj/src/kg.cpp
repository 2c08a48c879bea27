#include "medkg/kg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace medkg {

std::string to_string(EntityType type) {
  switch (type) {
    case EntityType::disease: return "disease";
    case EntityType::drug: return "drug";
    case EntityType::symptom: return "symptom";
    case EntityType::other: return "other";
  }
  throw std::domain_error("entity type: unknown enum value");
}

EntityType entity_type_from_string(const std::string& s) {
  if (s == "disease") return EntityType::disease;
  if (s == "drug") return EntityType::drug;
  if (s == "symptom") return EntityType::symptom;
  if (s == "other") return EntityType::other;
  throw std::runtime_error("entity type: unknown name '" + s + "'");
}

EntityType entity_type_from_id(const std::string& canonical_id) {
  const auto colon = canonical_id.find(':');
  if (colon == std::string::npos) return EntityType::other;
  const std::string prefix = canonical_id.substr(0, colon);
  if (prefix == "disease") return EntityType::disease;
  if (prefix == "drug") return EntityType::drug;
  if (prefix == "symptom") return EntityType::symptom;
  return EntityType::other;
}

void Gazetteer::add(const std::string& surface, EntityType type,
                    const std::string& canonical_id) {
  if (surface.empty()) throw std::invalid_argument("gazetteer: empty surface");
  auto it = rows_.find(surface);
  if (it != rows_.end()) {
    if (it->second.canonical_id != canonical_id) {
      throw std::runtime_error("gazetteer: surface '" + surface +
                               "' maps to both '" + it->second.canonical_id +
                               "' and '" + canonical_id + "'");
    }
    return;
  }
  rows_[surface] = {type, canonical_id};
  const int tokens =
      1 + static_cast<int>(std::count(surface.begin(), surface.end(), ' '));
  max_surface_tokens_ = std::max(max_surface_tokens_, tokens);
}

std::optional<Gazetteer::Row> Gazetteer::lookup(const std::string& surface) const {
  auto it = rows_.find(surface);
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

Gazetteer Gazetteer::read_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("gazetteer: cannot open " + path);
  Gazetteer g;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string surface, type, id;
    if (!std::getline(row, surface, '\t') || !std::getline(row, type, '\t') ||
        !std::getline(row, id, '\t') || surface.empty() || id.empty()) {
      throw std::runtime_error("gazetteer: " + path + ":" +
                               std::to_string(lineno) +
                               ": expected surface<TAB>type<TAB>canonical_id");
    }
    g.add(surface, entity_type_from_string(type), id);
  }
  return g;
}

void Gazetteer::write_tsv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("gazetteer: cannot open " + path);
  for (const auto& [surface, row] : rows_) {
    out << surface << "\t" << to_string(row.type) << "\t" << row.canonical_id
        << "\n";
  }
  if (!out) throw std::runtime_error("gazetteer: write failed on " + path);
}

void KnowledgeGraph::validate() const {
  for (const auto& [id, entity] : entities) {
    if (entity.canonical_id != id) {
      throw std::runtime_error("graph: entity keyed '" + id + "' carries id '" +
                               entity.canonical_id + "'");
    }
    if (entity.surface_forms.empty()) {
      throw std::runtime_error("graph: entity '" + id + "' has no surface forms");
    }
  }
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const Triple& t = triples[i];
    if (t.support < 1) {
      throw std::runtime_error("graph: triple " + t.head + " " + t.relation +
                               " " + t.tail + " has support < 1");
    }
    if (!entities.count(t.head) || !entities.count(t.tail)) {
      throw std::runtime_error("graph: triple endpoint missing for " + t.head +
                               " " + t.relation + " " + t.tail);
    }
    if (i > 0) {
      const Triple& prev = triples[i - 1];
      const auto key = std::tie(t.head, t.relation, t.tail);
      const auto pkey = std::tie(prev.head, prev.relation, prev.tail);
      if (!(pkey < key)) {
        throw std::runtime_error("graph: triples not sorted/unique at " +
                                 t.head + " " + t.relation + " " + t.tail);
      }
    }
  }
}

std::vector<Mention> extract_mentions(const std::vector<std::string>& tokens,
                                      const Gazetteer& gazetteer,
                                      const std::string& doc_id) {
  std::vector<Mention> out;
  const int n = static_cast<int>(tokens.size());
  const int max_len = std::min(kMaxMentionTokens, gazetteer.max_surface_tokens());
  int i = 0;
  while (i < n) {
    int matched = 0;
    Gazetteer::Row matched_row{};
    std::string matched_surface;
    std::string surface;
    for (int len = 1; len <= max_len && i + len <= n; ++len) {
      if (len > 1) surface += ' ';
      surface += tokens[i + len - 1];
      if (auto row = gazetteer.lookup(surface)) {
        matched = len;  // longest match wins
        matched_row = *row;
        matched_surface = surface;
      }
    }
    if (matched > 0) {
      out.push_back({doc_id, i, i + matched, matched_surface, matched_row.type});
      i += matched;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<std::string> link_mentions(const std::vector<Mention>& mentions,
                                       const Gazetteer& gazetteer) {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& m : mentions) {
    auto row = gazetteer.lookup(m.surface);
    if (!row) {
      throw std::runtime_error("link_mentions: surface '" + m.surface +
                               "' not in gazetteer");
    }
    if (seen.insert(row->canonical_id).second) ids.push_back(row->canonical_id);
  }
  return ids;
}

std::vector<Triple> extract_relations(
    const std::vector<std::vector<Mention>>& mentions_per_doc,
    const Gazetteer& gazetteer, int window) {
  if (window < 1) {
    throw std::invalid_argument("extract_relations: window must be >= 1, got " +
                                std::to_string(window));
  }
  // (head, tail) -> distinct evidencing document indices
  std::map<std::pair<std::string, std::string>, std::set<std::size_t>> evidence;
  for (std::size_t d = 0; d < mentions_per_doc.size(); ++d) {
    const auto& mentions = mentions_per_doc[d];
    for (std::size_t a = 0; a < mentions.size(); ++a) {
      auto row_a = gazetteer.lookup(mentions[a].surface);
      if (!row_a) {
        throw std::runtime_error("extract_relations: surface '" +
                                 mentions[a].surface + "' not in gazetteer");
      }
      for (std::size_t b = a + 1; b < mentions.size(); ++b) {
        auto row_b = gazetteer.lookup(mentions[b].surface);
        if (!row_b) {
          throw std::runtime_error("extract_relations: surface '" +
                                   mentions[b].surface + "' not in gazetteer");
        }
        if (row_a->canonical_id == row_b->canonical_id) continue;
        const Mention& first =
            mentions[a].start <= mentions[b].start ? mentions[a] : mentions[b];
        const Mention& second =
            mentions[a].start <= mentions[b].start ? mentions[b] : mentions[a];
        const int gap = second.start - first.end;
        if (gap > window) continue;
        auto pair = std::minmax(row_a->canonical_id, row_b->canonical_id);
        evidence[{pair.first, pair.second}].insert(d);
      }
    }
  }
  std::vector<Triple> triples;
  triples.reserve(evidence.size());
  for (const auto& [pair, docs] : evidence) {
    triples.push_back({pair.first, kCoOccursRelation, pair.second,
                       static_cast<long long>(docs.size())});
  }
  return triples;
}

namespace {

void sort_triples(std::vector<Triple>& triples) {
  std::sort(triples.begin(), triples.end(), [](const Triple& a, const Triple& b) {
    return std::tie(a.head, a.relation, a.tail) <
           std::tie(b.head, b.relation, b.tail);
  });
}

Entity stub_entity(const std::string& id) {
  Entity e;
  e.canonical_id = id;
  e.type = entity_type_from_id(id);
  e.surface_forms = {id};
  e.gazetteer_anchor = false;
  return e;
}

}  // namespace

KnowledgeGraph graph_from(const Gazetteer& gazetteer,
                          std::vector<Triple> triples) {
  KnowledgeGraph g;
  for (const auto& [surface, row] : gazetteer.rows()) {
    Entity& e = g.entities[row.canonical_id];
    if (e.canonical_id.empty()) {
      e.canonical_id = row.canonical_id;
      e.type = row.type;
      e.gazetteer_anchor = true;
    } else if (e.type != row.type) {
      throw std::runtime_error("graph: entity '" + row.canonical_id +
                               "' typed both " + to_string(e.type) + " and " +
                               to_string(row.type));
    }
    e.surface_forms.insert(surface);
  }
  // Collapse duplicate (head, relation, tail) rows by summing support.
  sort_triples(triples);
  std::vector<Triple> merged;
  for (const auto& t : triples) {
    if (t.support < 1) {
      throw std::runtime_error("graph: triple " + t.head + " " + t.relation +
                               " " + t.tail + " has support < 1");
    }
    if (!merged.empty() && merged.back().head == t.head &&
        merged.back().relation == t.relation && merged.back().tail == t.tail) {
      merged.back().support += t.support;
    } else {
      merged.push_back(t);
    }
  }
  g.triples = std::move(merged);
  for (const auto& t : g.triples) {
    for (const std::string& id : {t.head, t.tail}) {
      if (!g.entities.count(id)) g.entities[id] = stub_entity(id);
    }
  }
  g.validate();
  return g;
}

KnowledgeGraph build_graph(const std::vector<Document>& corpus,
                           const PreprocessConfig& pre,
                           const Gazetteer& gazetteer, int window) {
  std::vector<std::vector<Mention>> mentions_per_doc;
  mentions_per_doc.reserve(corpus.size());
  for (const auto& doc : corpus) {
    mentions_per_doc.push_back(
        extract_mentions(normalize(doc.text, pre), gazetteer, doc.id));
  }
  return graph_from(gazetteer,
                    extract_relations(mentions_per_doc, gazetteer, window));
}

KnowledgeGraph merge_graphs(const KnowledgeGraph& g1, const KnowledgeGraph& g2) {
  KnowledgeGraph out = g1;
  for (const auto& [id, entity] : g2.entities) {
    auto it = out.entities.find(id);
    if (it == out.entities.end()) {
      out.entities[id] = entity;
      continue;
    }
    Entity& mine = it->second;
    if (mine.type != entity.type) {
      // `other` is an unknown placeholder; a concrete type refines it.
      if (mine.type == EntityType::other) {
        mine.type = entity.type;
      } else if (entity.type != EntityType::other) {
        throw std::runtime_error("merge_graphs: entity '" + id +
                                 "' typed both " + to_string(mine.type) +
                                 " and " + to_string(entity.type));
      }
    }
    mine.surface_forms.insert(entity.surface_forms.begin(),
                              entity.surface_forms.end());
    mine.gazetteer_anchor = mine.gazetteer_anchor || entity.gazetteer_anchor;
  }
  std::vector<Triple> all = out.triples;
  all.insert(all.end(), g2.triples.begin(), g2.triples.end());
  sort_triples(all);
  std::vector<Triple> merged;
  for (const auto& t : all) {
    if (!merged.empty() && merged.back().head == t.head &&
        merged.back().relation == t.relation && merged.back().tail == t.tail) {
      merged.back().support += t.support;
    } else {
      merged.push_back(t);
    }
  }
  out.triples = std::move(merged);
  out.validate();
  return out;
}

double entity_similarity(const std::string& a, const std::string& b,
                         const KnowledgeGraph& g) {
  for (const std::string& id : {a, b}) {
    if (!g.entities.count(id)) {
      throw std::out_of_range("entity_similarity: unknown entity '" + id + "'");
    }
  }
  auto neighborhood = [&](const std::string& self, const std::string& excluded) {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& t : g.triples) {
      if (t.head == self && t.tail != excluded) out.insert({t.relation, t.tail});
      if (t.tail == self && t.head != excluded) out.insert({t.relation, t.head});
    }
    return out;
  };
  const auto na = neighborhood(a, b);
  const auto nb = neighborhood(b, a);
  if (na.empty() && nb.empty()) return 0.0;
  std::size_t intersection = 0;
  for (const auto& item : na) intersection += nb.count(item);
  const std::size_t unions = na.size() + nb.size() - intersection;
  return static_cast<double>(intersection) / static_cast<double>(unions);
}

KnowledgeGraph quality_filter(const KnowledgeGraph& g, int min_support) {
  if (min_support < 1) {
    throw std::invalid_argument("quality_filter: min_support must be >= 1");
  }
  KnowledgeGraph out;
  std::set<std::string> referenced;
  for (const auto& t : g.triples) {
    if (t.support >= min_support) {
      out.triples.push_back(t);
      referenced.insert(t.head);
      referenced.insert(t.tail);
    }
  }
  for (const auto& [id, entity] : g.entities) {
    if (entity.gazetteer_anchor || referenced.count(id)) {
      out.entities[id] = entity;
    }
  }
  out.validate();
  return out;
}

std::vector<Triple> read_triples_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("triples: cannot open " + path);
  std::vector<Triple> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string head, relation, tail, support;
    if (!std::getline(row, head, '\t') || !std::getline(row, relation, '\t') ||
        !std::getline(row, tail, '\t') || !std::getline(row, support, '\t') ||
        head.empty() || relation.empty() || tail.empty()) {
      throw std::runtime_error(
          "triples: " + path + ":" + std::to_string(lineno) +
          ": expected head<TAB>relation<TAB>tail<TAB>support");
    }
    long long value = 0;
    try {
      std::size_t used = 0;
      value = std::stoll(support, &used);
      if (used != support.size()) throw std::invalid_argument(support);
    } catch (const std::exception&) {
      throw std::runtime_error("triples: " + path + ":" +
                               std::to_string(lineno) + ": bad support '" +
                               support + "'");
    }
    if (value < 1) {
      throw std::runtime_error("triples: " + path + ":" +
                               std::to_string(lineno) + ": support must be >= 1");
    }
    out.push_back({head, relation, tail, value});
  }
  return out;
}

void write_triples_tsv(const std::vector<Triple>& triples,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("triples: cannot open " + path);
  std::vector<Triple> sorted = triples;
  sort_triples(sorted);
  for (const auto& t : sorted) {
    out << t.head << "\t" << t.relation << "\t" << t.tail << "\t" << t.support
        << "\n";
  }
  if (!out) throw std::runtime_error("triples: write failed on " + path);
}

}  // namespace medkg
