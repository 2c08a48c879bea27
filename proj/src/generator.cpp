#include "medkg/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <tuple>

#include "medkg/rng.hpp"

namespace medkg {
namespace {

// Every curated name below is a fixed point of the suffix stemmer, so the
// normalized corpus re-normalizes to itself and gazetteer surfaces match
// tokens exactly.
const std::vector<std::string> kDiseases = {
    "migraine", "glaucoma", "anemia", "asthma",
    "eczema",   "vertigo",  "malaria", "pneumonia"};

// Two per class, in order.
const std::vector<std::string> kClassSymptoms = {
    "headache", "nausea", "tremor", "fever", "cough",  "rash",
    "pallor",   "wheeze", "thirst", "sweat", "spasm",  "twitch",
    "itch",     "tingle", "edema",  "cramp"};

// Shared across classes; carry no label information.
const std::vector<std::string> kNeutralSymptoms = {"fatigue", "chill", "ache",
                                                   "blur"};

const std::vector<std::string> kDrugPre = {"lor", "vex", "dar", "mel", "tor",
                                           "sil", "kav", "rum", "bax", "nol"};
const std::vector<std::string> kDrugMid = {"a", "o", "i", "u", "e"};
const std::vector<std::string> kDrugEnd = {"vin", "dol", "mab", "nib",
                                           "pril", "zol", "tan", "fen"};

const std::vector<std::string> kNoisePre = {
    "bran", "crel", "dof", "gim", "hap", "jun", "kel", "mon",
    "pif",  "quab", "ril", "sot", "tev", "wex", "yun", "zor"};
const std::vector<std::string> kNoiseEnd = {"ar", "on", "il", "um",
                                            "ex", "ot", "an", "or"};

const std::vector<std::string> kAges = {"25", "34", "41", "47",
                                        "52", "58", "63", "76"};
const std::vector<std::string> kDoses = {"10", "20", "40", "50", "100", "250"};
const std::vector<std::string> kDays = {"3", "5", "7", "10", "14"};

template <typename T>
const T& pick_one(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng.uniform_int(v.size()))];
}

std::string fresh_name(const std::vector<std::string>& pre,
                       const std::vector<std::string>& mid,
                       const std::vector<std::string>& end,
                       std::set<std::string>& used, Rng& rng) {
  for (int attempt = 0; attempt < 20; ++attempt) {
    std::string name = pick_one(pre, rng) + pick_one(mid, rng) + pick_one(end, rng);
    if (used.insert(name).second) return name;
  }
  // Syllable space exhausted; a numeric suffix keeps the token unique while
  // staying stemmer-safe.
  std::string base = pick_one(pre, rng) + pick_one(mid, rng) + pick_one(end, rng);
  std::string name = base + std::to_string(used.size());
  used.insert(name);
  return name;
}

long long quota(double fraction, long long total) {
  return std::llround(fraction * static_cast<double>(total));
}

}  // namespace

void GeneratorConfig::validate() const {
  if (num_classes < 2 ||
      num_classes > static_cast<int>(kDiseases.size())) {
    throw std::invalid_argument("generator: num_classes must be in [2, 8]");
  }
  if (num_docs < num_classes) {
    throw std::invalid_argument(
        "generator: need at least one document per class");
  }
  if (vocab_noise < 0) {
    throw std::invalid_argument("generator: vocab_noise must be >= 0");
  }
  if (!(kg_signal_fraction >= 0.0 && kg_signal_fraction <= 1.0)) {
    throw std::invalid_argument(
        "generator: kg_signal_fraction must be in [0, 1]");
  }
  if (!(kg_holdout >= 0.0 && kg_holdout <= 1.0)) {
    throw std::invalid_argument("generator: kg_holdout must be in [0, 1]");
  }
}

SyntheticData generate_synthetic(const GeneratorConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int classes = cfg.num_classes;

  std::set<std::string> used;
  for (const auto& w : kDiseases) used.insert(w);
  for (const auto& w : kClassSymptoms) used.insert(w);
  for (const auto& w : kNeutralSymptoms) used.insert(w);
  const std::vector<std::string> template_words = {
      "patient", "aged", "presents", "reports", "confirmed", "prescribed",
      "daily",   "follow", "up",     "in",      "days",      "mg",
      "and",     "also",   "taking", "with",    "rest"};
  for (const std::string& w : template_words) used.insert(w);

  // Three recurring drugs per class; text models can memorize these.
  std::vector<std::vector<std::string>> shared(classes);
  for (int c = 0; c < classes; ++c) {
    for (int j = 0; j < 3; ++j) {
      shared[c].push_back(fresh_name(kDrugPre, kDrugMid, kDrugEnd, used, rng));
    }
  }
  // Classless drugs: gazetteer entries with no gold triples.
  std::vector<std::string> distractors;
  for (int j = 0; j < 4; ++j) {
    distractors.push_back(fresh_name(kDrugPre, kDrugMid, kDrugEnd, used, rng));
  }
  std::vector<std::string> noise;
  for (int j = 0; j < cfg.vocab_noise; ++j) {
    noise.push_back(fresh_name(kNoisePre, kDrugMid, kNoiseEnd, used, rng));
  }

  // Per-class document counts under the round-robin class assignment.
  std::vector<long long> per_class(classes, 0);
  for (int i = 0; i < cfg.num_docs; ++i) per_class[i % classes] += 1;
  std::vector<long long> signal_quota(classes), holdout_quota(classes);
  for (int c = 0; c < classes; ++c) {
    signal_quota[c] = quota(cfg.kg_signal_fraction, per_class[c]);
    holdout_quota[c] = quota(cfg.kg_holdout, signal_quota[c]);
  }

  SyntheticData out;
  std::vector<std::vector<std::string>> class_singletons(classes);
  std::vector<long long> seen_in_class(classes, 0);
  std::vector<long long> shared_cursor(classes, 0);

  for (int i = 0; i < cfg.num_docs; ++i) {
    const int c = i % classes;
    const long long k = seen_in_class[c]++;
    const bool signal = k < signal_quota[c];
    const bool holdout = signal && k < holdout_quota[c];

    std::string drug;
    if (holdout) {
      drug = fresh_name(kDrugPre, kDrugMid, kDrugEnd, used, rng);
      class_singletons[c].push_back(drug);
    } else {
      drug = shared[c][static_cast<std::size_t>(shared_cursor[c]++ % 3)];
    }

    std::vector<std::string> ids = {"drug:" + drug};
    std::string text = "patient aged " + pick_one(kAges, rng);
    if (signal) {
      std::size_t a = static_cast<std::size_t>(rng.uniform_int(kNeutralSymptoms.size()));
      std::size_t b = static_cast<std::size_t>(rng.uniform_int(kNeutralSymptoms.size() - 1));
      if (b >= a) ++b;
      text += " reports " + kNeutralSymptoms[a] + " and " + kNeutralSymptoms[b];
      ids.push_back("symptom:" + kNeutralSymptoms[a]);
      ids.push_back("symptom:" + kNeutralSymptoms[b]);
    } else {
      const std::string& s1 = kClassSymptoms[static_cast<std::size_t>(2 * c)];
      const std::string& s2 = kClassSymptoms[static_cast<std::size_t>(2 * c + 1)];
      text += " presents " + s1 + " and " + s2 + " confirmed " + kDiseases[c];
      ids.push_back("symptom:" + s1);
      ids.push_back("symptom:" + s2);
      ids.push_back("disease:" + kDiseases[c]);
    }
    text += " prescribed " + drug + " " + pick_one(kDoses, rng) +
            " mg daily follow up in " + pick_one(kDays, rng) + " days";
    if (rng.uniform_int(100) < 15) {
      const std::string& d = pick_one(distractors, rng);
      text += " also taking " + d;
      ids.push_back("drug:" + d);
    }
    if (!noise.empty()) {
      const int extra = 2 + static_cast<int>(rng.uniform_int(2));
      for (int j = 0; j < extra; ++j) text += " " + pick_one(noise, rng);
    }

    Document doc;
    doc.text = text;
    doc.label = kDiseases[c];
    out.docs.push_back(std::move(doc));
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    out.planted.push_back(std::move(ids));
  }

  // Shuffle documents and planted ids in lockstep, then assign stable ids.
  std::vector<std::size_t> order(out.docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<Document> docs;
  std::vector<std::vector<std::string>> planted;
  docs.reserve(order.size());
  planted.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    docs.push_back(std::move(out.docs[order[i]]));
    planted.push_back(std::move(out.planted[order[i]]));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "rec-%06zu", i);
    docs.back().id = buf;
  }
  out.docs = std::move(docs);
  out.planted = std::move(planted);

  for (int c = 0; c < classes; ++c) {
    out.gazetteer.add(kDiseases[c], EntityType::disease,
                      "disease:" + kDiseases[c]);
    for (int j = 0; j < 2; ++j) {
      const std::string& s = kClassSymptoms[static_cast<std::size_t>(2 * c + j)];
      out.gazetteer.add(s, EntityType::symptom, "symptom:" + s);
    }
    for (const std::string& d : shared[c]) {
      out.gazetteer.add(d, EntityType::drug, "drug:" + d);
    }
    for (const std::string& d : class_singletons[c]) {
      out.gazetteer.add(d, EntityType::drug, "drug:" + d);
    }
  }
  for (const std::string& s : kNeutralSymptoms) {
    out.gazetteer.add(s, EntityType::symptom, "symptom:" + s);
  }
  for (const std::string& d : distractors) {
    out.gazetteer.add(d, EntityType::drug, "drug:" + d);
  }

  for (int c = 0; c < classes; ++c) {
    const std::string disease = "disease:" + kDiseases[c];
    for (const std::string& d : shared[c]) {
      out.gold_triples.push_back({"drug:" + d, "treats", disease, 1});
    }
    for (const std::string& d : class_singletons[c]) {
      out.gold_triples.push_back({"drug:" + d, "treats", disease, 1});
    }
    for (int j = 0; j < 2; ++j) {
      const std::string& s = kClassSymptoms[static_cast<std::size_t>(2 * c + j)];
      out.gold_triples.push_back({disease, "causes", "symptom:" + s, 1});
    }
  }
  std::sort(out.gold_triples.begin(), out.gold_triples.end(),
            [](const Triple& a, const Triple& b) {
              return std::tie(a.head, a.relation, a.tail) <
                     std::tie(b.head, b.relation, b.tail);
            });
  return out;
}

}  // namespace medkg
