#include "medkg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace medkg {

std::string stem(const std::string& token) {
  static const std::vector<std::string> suffixes{"ing", "edly", "ed", "es", "s"};
  constexpr std::size_t kFloor = 3;
  for (const auto& suffix : suffixes) {
    if (token.size() < suffix.size()) continue;
    if (token.compare(token.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    const std::size_t full = token.size() - suffix.size();
    if (full >= kFloor) return token.substr(0, full);
    if (token.size() > kFloor) return token.substr(0, kFloor);
    return token;  // too short to strip anything
  }
  return token;
}

std::vector<std::string> normalize(const std::string& text,
                                   const PreprocessConfig& cfg) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cleaned.push_back(cfg.lowercase ? static_cast<char>(std::tolower(c))
                                      : static_cast<char>(c));
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && cleaned[i] == ' ') ++i;
    std::size_t j = i;
    while (j < cleaned.size() && cleaned[j] != ' ') ++j;
    if (j > i) {
      std::string token = cleaned.substr(i, j - i);
      if (!cfg.stopwords.count(token)) {
        out.push_back(cfg.stemmer == StemmerKind::suffix ? stem(token) : token);
      }
    }
    i = j;
  }
  return out;
}

Vocabulary::Vocabulary() {
  id_to_token_ = {"<pad>", "<unk>", "<bos>"};
  for (int i = 0; i < static_cast<int>(id_to_token_.size()); ++i) {
    token_to_id_[id_to_token_[i]] = i;
  }
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& docs,
                             const PreprocessConfig& cfg) {
  if (docs.empty()) throw std::runtime_error("build_vocab: empty corpus");
  if (cfg.min_token_freq < 1) {
    throw std::invalid_argument("build_vocab: min_token_freq must be >= 1");
  }
  std::map<std::string, long long> freq;
  for (const auto& doc : docs) {
    for (const auto& token : doc) ++freq[token];
  }
  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [token, count] : freq) {
    if (count >= cfg.min_token_freq) kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [token, count] : kept) {
    v.token_to_id_[token] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(token);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("vocabulary: id " + std::to_string(id) +
                            " outside [0," + std::to_string(size()) + ")");
  }
  return id_to_token_[id];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_stopwords: cannot open " + path);
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.insert(line);
  }
  return words;
}

std::vector<Document> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_corpus: cannot open " + path);
  std::vector<Document> docs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("read_corpus: " + path + ":" +
                               std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("text") || !j.contains("label")) {
      throw std::runtime_error("read_corpus: " + path + ":" +
                               std::to_string(lineno) +
                               ": record needs id, text, and label");
    }
    docs.push_back({j["id"].get<std::string>(), j["text"].get<std::string>(),
                    j["label"].get<std::string>()});
  }
  return docs;
}

void write_corpus(const std::vector<Document>& docs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_corpus: cannot open " + path);
  for (const auto& doc : docs) {
    nlohmann::json j{{"id", doc.id}, {"text", doc.text}, {"label", doc.label}};
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write_corpus: write failed on " + path);
}

LabelMap::LabelMap(const std::vector<Document>& docs) {
  std::set<std::string> unique;
  for (const auto& doc : docs) unique.insert(doc.label);
  if (unique.empty()) throw std::runtime_error("label map: no documents");
  labels_.assign(unique.begin(), unique.end());
  for (int i = 0; i < static_cast<int>(labels_.size()); ++i) {
    index_[labels_[i]] = i;
  }
}

int LabelMap::index(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) {
    throw std::out_of_range("label map: unknown label '" + label + "'");
  }
  return it->second;
}

}  // namespace medkg
