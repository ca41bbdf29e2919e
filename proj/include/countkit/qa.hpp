#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "countkit/data/annotations.hpp"
#include "countkit/data/embeddings.hpp"
#include "countkit/json_io.hpp"
#include "countkit/metrics.hpp"
#include "countkit/rng.hpp"

namespace countkit {

struct CountQuestion {
  ImageId image_id = 0;
  std::string question;
  std::optional<std::string> noun;  // pre-resolved noun, used instead of extraction
  int answer = 0;

  friend bool operator==(const CountQuestion&, const CountQuestion&) = default;
};

enum class TargetKind { category, supercategory };

struct ResolvedTarget {
  TargetKind kind = TargetKind::category;
  std::string name;
  std::vector<std::size_t> members;  // category indices
  double similarity = 0.0;
};

// ---- noun extraction -------------------------------------------------------

inline const std::set<std::string>& interrogatives() {
  static const std::set<std::string> words = {"how", "many", "what", "which", "number", "count", "total",
                                              "much", "amount", "quantity"};
  return words;
}

inline const std::set<std::string>& stop_words() {
  static const std::set<std::string> words = {
      "a",     "an",    "the",   "are",   "is",    "was",   "were",  "be",    "been",  "there", "here",
      "in",    "on",    "at",    "of",    "to",    "for",   "with",  "by",    "from",  "into",  "onto",
      "do",    "does",  "did",   "you",   "your",  "we",    "they",  "it",    "its",   "this",  "that",
      "these", "those", "can",   "could", "see",   "seen",  "visible", "shown", "show", "pictured",
      "have",  "has",   "and",   "or",    "any",   "all",   "some",  "i",     "me",    "my",   "s"};
  return words;
}

inline const std::map<std::string, std::string>& irregular_plurals() {
  static const std::map<std::string, std::string> words = {
      {"people", "person"}, {"men", "man"},       {"women", "woman"},   {"children", "child"},
      {"mice", "mouse"},    {"geese", "goose"},   {"feet", "foot"},     {"teeth", "tooth"},
      {"oxen", "ox"},       {"knives", "knife"},  {"leaves", "leaf"},   {"wolves", "wolf"},
      {"shelves", "shelf"}, {"halves", "half"},   {"sheep", "sheep"},   {"fish", "fish"},
      {"deer", "deer"},     {"skis", "skis"},     {"scissors", "scissors"}, {"series", "series"},
      {"species", "species"}, {"bus", "bus"},     {"buses", "bus"},     {"glasses", "glasses"}};
  return words;
}

inline std::string singularize(const std::string& w) {
  const auto& irregular = irregular_plurals();
  if (auto it = irregular.find(w); it != irregular.end()) return it->second;
  auto ends = [&](const char* suffix) {
    const std::string s(suffix);
    return w.size() > s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0;
  };
  if (ends("ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends("sses") || ends("shes") || ends("ches") || ends("xes") || ends("zes")) return w.substr(0, w.size() - 2);
  if (ends("ss") || ends("us") || ends("is")) return w;
  if (ends("s")) return w.substr(0, w.size() - 1);
  return w;
}

// Lowercased alphanumeric runs.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// First token that is neither an interrogative, a stop word nor a number,
/// singularized.
inline std::string extract_noun(const std::string& question) {
  for (const auto& tok : tokenize(question)) {
    if (interrogatives().count(tok) || stop_words().count(tok)) continue;
    if (std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) continue;
    return singularize(tok);
  }
  throw ResolutionError("no candidate noun in question '" + question + "'");
}

// ---- resolution ------------------------------------------------------------

/// Multi-word names ("potted plant") embed as the mean of their word vectors.
inline std::vector<double> phrase_vector(const std::string& phrase, const EmbeddingTable& emb) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : phrase) {
    if (c == ' ' || c == '_') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  if (words.empty()) throw ResolutionError("empty name cannot be embedded");
  std::vector<double> v(static_cast<std::size_t>(emb.dim()), 0.0);
  for (const auto& w : words) {
    const auto* e = emb.find(w);
    if (!e) throw ResolutionError("'" + w + "' is not in the embedding table");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += (*e)[i];
  }
  for (auto& x : v) x /= static_cast<double>(words.size());
  return v;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Most cosine-similar category or super-category name. Ties prefer
/// categories, then the lexicographically smaller name.
inline ResolvedTarget resolve_category(const std::string& noun, const EmbeddingTable& emb, const CategoryTable& categories) {
  const auto* nv = emb.find(noun);
  if (!nv) throw ResolutionError("noun '" + noun + "' is not in the embedding table");
  std::optional<ResolvedTarget> best;
  auto consider = [&](ResolvedTarget cand) {
    cand.similarity = cosine(*nv, phrase_vector(cand.name, emb));
    if (!best) {
      best = std::move(cand);
      return;
    }
    if (cand.similarity != best->similarity) {
      if (cand.similarity > best->similarity) best = std::move(cand);
      return;
    }
    if (cand.kind != best->kind) {
      if (cand.kind == TargetKind::category) best = std::move(cand);
      return;
    }
    if (cand.name < best->name) best = std::move(cand);
  };
  for (std::size_t k = 0; k < categories.size(); ++k) consider({TargetKind::category, categories[k].name, {k}, 0.0});
  for (const auto& sc : categories.supercategories()) {
    consider({TargetKind::supercategory, sc, categories.members_of(sc), 0.0});
  }
  if (!best) throw ResolutionError("no categories to resolve '" + noun + "' against");
  return *best;
}

/// Count for the resolved target: the category's count, or the sum over the
/// super-category's members. `counts` should already be post-processed.
inline long long answer_count(const ResolvedTarget& target, const ImageCounts& counts) {
  double sum = 0.0;
  for (std::size_t k : target.members) sum += counts.at(k);
  return std::llround(sum);
}

inline std::string question_noun(const CountQuestion& q) { return q.noun ? *q.noun : extract_noun(q.question); }

inline std::map<ImageId, const SceneAnnotation*> scene_index(const std::vector<SceneAnnotation>& scenes) {
  std::map<ImageId, const SceneAnnotation*> out;
  for (const auto& s : scenes) out.emplace(s.image_id, &s);
  return out;
}

/// Keeps the questions whose resolved target has a ground-truth count equal
/// to the question's answer. Questions that cannot be resolved are dropped.
inline std::vector<CountQuestion> build_countqa(const std::vector<CountQuestion>& questions,
                                                const std::vector<SceneAnnotation>& scenes, const EmbeddingTable& emb,
                                                const CategoryTable& categories) {
  const auto index = scene_index(scenes);
  std::vector<CountQuestion> out;
  for (const auto& q : questions) {
    auto it = index.find(q.image_id);
    if (it == index.end()) throw SchemaError("question refers to unknown image id " + std::to_string(q.image_id));
    try {
      const auto target = resolve_category(question_noun(q), emb, categories);
      if (answer_count(target, instance_counts(*it->second, categories)) == q.answer) out.push_back(q);
    } catch (const ResolutionError&) {
    }
  }
  return out;
}

struct QaEntry {
  CountQuestion question;
  std::string noun;
  ResolvedTarget target;
  long long predicted = 0;
};

struct QaReport {
  std::vector<QaEntry> entries;
  double rmse = 0.0;
};

/// Answers every question from per-image predicted counts (raw; rounded
/// here). Unresolvable nouns raise ResolutionError.
inline QaReport answer_questions(const std::vector<CountQuestion>& questions, const std::vector<ImageId>& image_ids,
                                 const std::vector<ImageCounts>& predicted, const EmbeddingTable& emb,
                                 const CategoryTable& categories) {
  if (image_ids.size() != predicted.size()) throw SchemaError("qa: image ids and predictions are not aligned");
  if (questions.empty()) throw SchemaError("qa: no questions");
  std::map<ImageId, std::size_t> slot;
  for (std::size_t i = 0; i < image_ids.size(); ++i) slot.emplace(image_ids[i], i);
  QaReport rep;
  double se = 0.0;
  for (const auto& q : questions) {
    auto it = slot.find(q.image_id);
    if (it == slot.end()) throw SchemaError("question refers to unknown image id " + std::to_string(q.image_id));
    QaEntry e{q, question_noun(q), {}, 0};
    e.target = resolve_category(e.noun, emb, categories);
    e.predicted = answer_count(e.target, postprocess(predicted[it->second]));
    const double d = static_cast<double>(e.predicted - q.answer);
    se += d * d;
    rep.entries.push_back(std::move(e));
  }
  rep.rmse = std::sqrt(se / static_cast<double>(questions.size()));
  return rep;
}

// ---- files -----------------------------------------------------------------

inline Json questions_to_json(const std::vector<CountQuestion>& qs) {
  Json arr = Json::array();
  for (const auto& q : qs) {
    Json j = {{"image_id", q.image_id}, {"question", q.question}, {"answer", q.answer}};
    if (q.noun) j["noun"] = *q.noun;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<CountQuestion> questions_from_json(const Json& arr) {
  if (!arr.is_array()) throw SchemaError("questions: expected a JSON array");
  std::vector<CountQuestion> out;
  for (std::size_t n = 0; n < arr.size(); ++n) {
    const std::string where = "questions[" + std::to_string(n) + "]";
    CountQuestion q;
    q.image_id = json_field<ImageId>(arr[n], "image_id", where);
    q.question = json_field<std::string>(arr[n], "question", where);
    q.answer = json_field<int>(arr[n], "answer", where);
    if (q.answer < 0) throw SchemaError(where + ": answer must be >= 0");
    if (arr[n].contains("noun") && !arr[n]["noun"].is_null()) q.noun = json_field<std::string>(arr[n], "noun", where);
    out.push_back(std::move(q));
  }
  return out;
}

inline Json to_json(const QaReport& rep) {
  Json entries = Json::array();
  for (const auto& e : rep.entries) {
    entries.push_back({{"image_id", e.question.image_id},
                       {"question", e.question.question},
                       {"noun", e.noun},
                       {"target", e.target.name},
                       {"target_kind", e.target.kind == TargetKind::category ? "category" : "supercategory"},
                       {"similarity", e.target.similarity},
                       {"answer", e.question.answer},
                       {"predicted", e.predicted}});
  }
  return {{"questions", rep.entries.size()}, {"rmse", rep.rmse}, {"entries", entries}};
}

// ---- synthetic Count-QA ----------------------------------------------------

/// Random unit-scale vectors for every category and super-category word plus
/// a few distractors.
inline EmbeddingTable synthetic_embeddings(const CategoryTable& categories, int dim, std::uint64_t seed) {
  if (dim < 2) throw SchemaError("synthetic embeddings: dimension must be >= 2");
  Rng rng = stream(seed, "embeddings");
  EmbeddingTable table;
  std::vector<std::string> words;
  for (const auto& c : categories) words.push_back(c.name);
  for (const auto& s : categories.supercategories()) words.push_back(s);
  for (const char* w : {"thing", "object", "item", "picture", "scene"}) words.emplace_back(w);
  for (const auto& w : words) {
    if (table.contains(w)) continue;
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (auto& x : v) x = rng.normal();
    table.set(w, std::move(v));
  }
  return table;
}

inline std::string pluralize(const std::string& w) {
  auto ends = [&](const char* s) { return w.size() >= std::string(s).size() && w.substr(w.size() - std::string(s).size()) == s; };
  std::string p = (ends("s") || ends("x") || ends("z") || ends("ch") || ends("sh")) ? w + "es" : w + "s";
  return singularize(p) == w ? p : w;
}

/// Questions whose answers are read off the ground truth: per scene one
/// category question and one super-category question.
inline std::vector<CountQuestion> synthetic_questions(const std::vector<SceneAnnotation>& scenes,
                                                      const CategoryTable& categories, std::uint64_t seed) {
  static const char* templates[] = {"how many %s are there?", "how many %s are in the picture?",
                                    "how many %s can you see?"};
  Rng rng = stream(seed, "questions");
  const auto supers = categories.supercategories();
  std::vector<CountQuestion> out;
  auto phrase = [&](const std::string& noun) {
    std::string t = templates[rng.uniform_int(0, 2)];
    return t.replace(t.find("%s"), 2, pluralize(noun));
  };
  for (const auto& s : scenes) {
    if (categories.empty()) break;
    const auto counts = instance_counts(s, categories);
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(categories.size()) - 1));
    out.push_back({s.image_id, phrase(categories[k].name), std::nullopt, static_cast<int>(counts[k])});
    const auto& sc = supers[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(supers.size()) - 1))];
    double total = 0.0;
    for (std::size_t m : categories.members_of(sc)) total += counts[m];
    out.push_back({s.image_id, phrase(sc), std::nullopt, static_cast<int>(total)});
  }
  return out;
}

}  // namespace countkit
