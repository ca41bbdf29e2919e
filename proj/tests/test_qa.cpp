#include <gtest/gtest.h>

#include <cmath>

#include "countkit/data/synth.hpp"
#include "countkit/qa.hpp"

using namespace countkit;

namespace {

CategoryTable kitchen() {
  return CategoryTable({{1, "bottle", "kitchen"}, {2, "cup", "kitchen"}, {3, "cat", "animal"},
                        {4, "dog", "animal"}, {5, "sheep", "animal"}, {6, "potted plant", "furniture"}});
}

EmbeddingTable kitchen_embeddings() {
  EmbeddingTable e;
  e.set("bottle", {1, 0, 0, 0, 0});
  e.set("cup", {0.8, 0.6, 0, 0, 0});
  e.set("kitchen", {0.6, 0.6, 0.1, 0, 0});
  e.set("cat", {0, 0, 1, 0, 0});
  e.set("dog", {0, 0, 0.8, 0.6, 0});
  e.set("sheep", {0, 0, 0.5, 0.5, 0.7});
  e.set("animal", {0, 0, 0.7, 0.7, 0.2});
  e.set("pet", {0, 0.05, 0.7, 0.7, 0.15});
  e.set("potted", {0, 0, 0, 0, 1});
  e.set("plant", {0.2, 0, 0, 0, 1});
  e.set("furniture", {0.3, 0.3, 0, 0, 0.5});
  e.set("fridge", {0.5, 0.5, 0.5, 0.5, 0});
  return e;
}

}  // namespace

TEST(Nouns, ExtractionSkipsQuestionWords) {
  EXPECT_EQ(extract_noun("How many bottles are there in the fridge?"), "bottle");
  EXPECT_EQ(extract_noun("how many sheep are in the field"), "sheep");
  EXPECT_EQ(extract_noun("How many PEOPLE are visible?"), "person");
  EXPECT_EQ(extract_noun("how many 3 buses"), "bus");
  EXPECT_THROW(extract_noun("how many are there?"), ResolutionError);
}

TEST(Nouns, Singularize) {
  EXPECT_EQ(singularize("bottles"), "bottle");
  EXPECT_EQ(singularize("puppies"), "puppy");
  EXPECT_EQ(singularize("boxes"), "box");
  EXPECT_EQ(singularize("glass"), "glass");
  EXPECT_EQ(singularize("bus"), "bus");
  EXPECT_EQ(singularize("children"), "child");
}

TEST(Resolution, CosineHandValue) {
  EXPECT_NEAR(cosine({1, 0}, {1, 1}), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(cosine({1, 2, 3}, {-2, -4, -6}), -1.0, 1e-15);
}

TEST(Resolution, ExactNameAndSupercategory) {
  const auto e = kitchen_embeddings();
  const auto cats = kitchen();
  auto t = resolve_category("bottle", e, cats);
  EXPECT_EQ(t.kind, TargetKind::category);
  EXPECT_EQ(t.name, "bottle");
  EXPECT_NEAR(t.similarity, 1.0, 1e-12);
  t = resolve_category("pet", e, cats);
  EXPECT_EQ(t.kind, TargetKind::supercategory);
  EXPECT_EQ(t.name, "animal");
  EXPECT_EQ(t.members, (std::vector<std::size_t>{2, 3, 4}));
  EXPECT_THROW(resolve_category("zebra", e, cats), ResolutionError);
}

TEST(Resolution, MultiWordNamesUseTheMeanVector) {
  const auto e = kitchen_embeddings();
  const auto v = phrase_vector("potted plant", e);
  EXPECT_EQ(v, (std::vector<double>{0.1, 0, 0, 0, 1}));
}

TEST(Resolution, TiesPreferCategoriesThenSmallerNames) {
  const CategoryTable cats({{1, "b", "a"}, {2, "c", "a"}});
  EmbeddingTable e;
  e.set("a", {1, 0});
  e.set("b", {1, 0});
  e.set("c", {1, 0});
  e.set("q", {2, 0});
  const auto t = resolve_category("q", e, cats);
  EXPECT_EQ(t.kind, TargetKind::category);
  EXPECT_EQ(t.name, "b");
}

TEST(Resolution, InvariantToEmbeddingRescaling) {
  const auto cats = kitchen();
  const auto base = kitchen_embeddings();
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    EmbeddingTable scaled;
    for (const auto& [w, v] : base.entries()) {
      const double s = rng.uniform(0.01, 100.0);
      std::vector<double> u = v;
      for (auto& x : u) x *= s;
      scaled.set(w, u);
    }
    for (const auto& [w, v] : base.entries()) {
      const auto a = resolve_category(w, base, cats), b = resolve_category(w, scaled, cats);
      EXPECT_EQ(a.name, b.name) << w;
      EXPECT_EQ(a.kind, b.kind) << w;
    }
  }
}

TEST(Answers, SupercategorySumsMembers) {
  const auto cats = kitchen();
  const auto t = resolve_category("animal", kitchen_embeddings(), cats);
  EXPECT_EQ(answer_count(t, {0, 0, 1, 2, 0, 0}), 3);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    ImageCounts c;
    for (int k = 0; k < 6; ++k) c.push_back(static_cast<double>(rng.uniform_int(0, 9)));
    EXPECT_EQ(answer_count(t, c), static_cast<long long>(c[2] + c[3] + c[4]));
  }
}

TEST(Answers, ReportRmseOverQuestions) {
  const auto cats = kitchen();
  const std::vector<CountQuestion> qs{{1, "how many bottles?", std::nullopt, 2},
                                      {1, "how many animals?", std::nullopt, 3}};
  EmbeddingTable e = kitchen_embeddings();
  const auto rep = answer_questions(qs, {1}, {{1.6, 0, 0.4, 0.6, 1.2, 0}}, e, cats);
  ASSERT_EQ(rep.entries.size(), 2u);
  EXPECT_EQ(rep.entries[0].predicted, 2);
  EXPECT_EQ(rep.entries[1].predicted, 2);  // 0 + 1 + 1 after rounding each category
  EXPECT_NEAR(rep.rmse, std::sqrt(0.5), 1e-12);
}

TEST(CountQa, KeepsOnlyConsistentQuestions) {
  const auto cats = kitchen();
  const auto e = kitchen_embeddings();
  const std::vector<SceneAnnotation> scenes{{1, 100, 100, {{3, {0, 0, 5, 5}}, {4, {10, 10, 5, 5}}, {1, {30, 30, 5, 5}}}}};
  const std::vector<CountQuestion> qs{{1, "how many animals are there?", std::nullopt, 2},
                                      {1, "how many bottles are there in the fridge?", std::nullopt, 1},
                                      {1, "how many cups?", std::nullopt, 4},
                                      {1, "how many zebras?", std::nullopt, 0},
                                      {1, "how many things?", std::string("sheep"), 0}};
  const auto kept = build_countqa(qs, scenes, e, cats);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0], qs[0]);
  EXPECT_EQ(kept[1], qs[1]);
  EXPECT_EQ(kept[2], qs[4]);
  // Idempotent, and never grows.
  EXPECT_EQ(build_countqa(kept, scenes, e, cats), kept);
}

TEST(CountQa, SyntheticQuestionsAreAllRetained) {
  SynthConfig sc;
  sc.scene_count = 300;
  sc.seed = 12;
  const auto ann = generate_synthetic(sc).annotations;
  const auto e = synthetic_embeddings(ann.categories, 16, 12);
  const auto qs = synthetic_questions(ann.scenes, ann.categories, 12);
  ASSERT_EQ(qs.size(), 600u);
  EXPECT_EQ(build_countqa(qs, ann.scenes, e, ann.categories).size(), qs.size());
}

TEST(CountQa, QuestionFileRoundTrip) {
  const std::vector<CountQuestion> qs{{4, "how many cups?", std::nullopt, 2}, {5, "x", std::string("cup"), 0}};
  EXPECT_EQ(questions_from_json(questions_to_json(qs)), qs);
  Json bad = questions_to_json(qs);
  bad[0]["answer"] = -1;
  EXPECT_THROW(questions_from_json(bad), SchemaError);
}
