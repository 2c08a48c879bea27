#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace medkg {

enum class StemmerKind { none, suffix };

struct PreprocessConfig {
  bool lowercase = true;
  std::set<std::string> stopwords;
  StemmerKind stemmer = StemmerKind::suffix;
  int min_token_freq = 2;
  int max_seq_len = 64;
};

struct Document {
  std::string id;
  std::string text;
  std::string label;
};

// Suffix stripping, one pass, first matching rule of: ing, edly, ed, es, s.
// Never leaves fewer than 3 characters: a match that would cut deeper strips
// only down to the 3-character floor ("aged" -> "age"; "is" stays "is").
std::string stem(const std::string& token);

// Strip punctuation/special characters, lowercase (per config), split on
// whitespace, drop stopwords, stem. Empty output is valid.
std::vector<std::string> normalize(const std::string& text,
                                   const PreprocessConfig& cfg);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;

  // Tokens with corpus frequency >= min_token_freq get dense ids starting at
  // 3, ordered by (frequency desc, token asc). Everything else maps to UNK.
  static Vocabulary build(const std::vector<std::vector<std::string>>& docs,
                          const PreprocessConfig& cfg);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;          // UNK when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;          // throws on bad id
  std::vector<int> encode(const std::vector<std::string>& tokens) const;

 private:
  Vocabulary();
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// One stopword per line; blank lines ignored.
std::set<std::string> load_stopwords(const std::string& path);

// JSONL with one {"id","text","label"} object per line.
std::vector<Document> read_corpus(const std::string& path);
void write_corpus(const std::vector<Document>& docs, const std::string& path);

// Distinct labels in lexicographic order; classifier class c is labels()[c].
class LabelMap {
 public:
  explicit LabelMap(const std::vector<Document>& docs);
  int size() const { return static_cast<int>(labels_.size()); }
  int index(const std::string& label) const;  // throws on unknown label
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace medkg
