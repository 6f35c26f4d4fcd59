#include "geouq/curation.hpp"

#include <doctest.h>

#include <filesystem>

#include "geouq/error.hpp"
#include "geouq/jsonl.hpp"
#include "geouq/rng.hpp"

using namespace geouq;
using namespace geouq::curation;

namespace {

clients::ClientConfig cfg() {
  clients::ClientConfig c;
  c.base_url = "http://mock";
  c.model_name = "m";
  return c;
}

ResponseBatch batch_of(std::string def, std::vector<std::string> samples) {
  ResponseBatch b;
  b.question_id = "q";
  b.default_response = std::move(def);
  b.samples = std::move(samples);
  return b;
}

QueryRecord record(std::string ref) { return QueryRecord{"q", "question?", std::move(ref), {}}; }

std::string words(geouq::Rng& rng, int n) {
  static const char* vocab[] = {"a", "b", "c", "d", "e", "f"};
  std::string s;
  for (int i = 0; i < n; ++i) s += std::string(i ? " " : "") + vocab[rng.below(6)];
  return s;
}

}  // namespace

TEST_CASE("tokenizer lowercases, strips punctuation, splits on whitespace") {
  CHECK(tokenize("The CAT, sat!") == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(tokenize("  ...  ").empty());
  CHECK(tokenize("don't") == std::vector<std::string>{"dont"});
  CHECK(tokenize("café") == std::vector<std::string>{"café"});
}

TEST_CASE("rouge_l_f1 examples") {
  CHECK(rouge_l_f1("the cat", "the cat sat") == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(rouge_l_f1("x", "x") == 1.0);
  CHECK(rouge_l_f1("a b", "c d") == 0.0);
  CHECK(rouge_l_f1("", "c d") == 0.0);
  CHECK(lcs_length({"a", "b", "c", "d"}, {"b", "d", "a"}) == 2);
}

TEST_CASE("rouge_l_f1 equals 2 LCS / (|c| + |r|) on random token strings") {
  geouq::Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const auto c = words(rng, 1 + static_cast<int>(rng.below(8)));
    const auto r = words(rng, 1 + static_cast<int>(rng.below(8)));
    const auto tc = tokenize(c), tr = tokenize(r);
    const double expected = 2.0 * static_cast<double>(lcs_length(tc, tr)) / static_cast<double>(tc.size() + tr.size());
    CHECK(rouge_l_f1(c, r) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(rouge_l_f1(c, r) >= 0.0);
    CHECK(rouge_l_f1(c, r) <= 1.0);
    if (tc.size() == tr.size()) CHECK(rouge_l_f1(c, r) == rouge_l_f1(r, c));
  }
}

TEST_CASE("rouge labels use a strict threshold") {
  // 3 shared tokens over 10 + 10 -> F1 exactly 0.3 -> correct
  const std::string ref = "a b c d e f g h i j";
  const std::string at = "a b c x x x x x x x";
  CHECK(rouge_l_f1(at, ref) == 0.3);
  // 2 shared over 7 + 7 -> 0.2857 -> hallucination
  const std::string below = "a b x x x x x";
  const auto l = label_batch(batch_of(at, {below, at}), record(ref), LabelSource::rouge);
  CHECK(l.default_label == 0);
  CHECK(l.sample_labels == std::vector<int>{1, 0});
  REQUIRE(l.rouge_scores);
  CHECK(l.rouge_scores->size() == 3);
  CHECK(l.rouge_scores->at(0) == 0.3);
}

TEST_CASE("label_batch errors") {
  CHECK_THROWS_AS(label_batch(batch_of("a", {"a", "b"}), QueryRecord{"q", "?", std::nullopt, {}}, LabelSource::rouge),
                  MissingReference);
  CHECK_THROWS_AS(label_batch(batch_of("a", {"a", "b"}), record("a"), LabelSource::judge, nullptr), PreconditionError);
}

TEST_CASE("judge labels with a mock judge that always says CORRECT") {
  clients::MockOptions mo;
  mo.fixed_reply = "CORRECT";
  clients::LlmClient judge(cfg(), std::make_shared<clients::MockTransport>(mo));
  const auto l = label_batch(batch_of("x", {"y", "z", "w"}), record("r"), LabelSource::judge, &judge);
  CHECK(l.default_label == 0);
  CHECK(l.sample_labels == std::vector<int>{0, 0, 0});
  CHECK_FALSE(l.rouge_scores);
  CHECK(l.label_source == LabelSource::judge);
}

TEST_CASE("curate: cardinality, determinism and n >= 2") {
  std::vector<QueryRecord> corpus{{"q1", "What is one?", "one", {}}, {"q2", "What is two?", "two", {}}};
  clients::LlmClient gen(cfg(), std::make_shared<clients::MockTransport>());
  CurateOptions o;
  o.n_samples = 3;
  const auto r = curate(corpus, gen, o);
  REQUIRE(r.items.size() == 2);
  for (const auto& item : r.items) {
    CHECK(item.responses.samples.size() == 3);
    CHECK_FALSE(item.responses.default_response.empty());
    CHECK(item.labels.sample_labels.size() == 3);
  }
  CHECK(r.items[0].responses.question_id == "q1");

  clients::LlmClient gen2(cfg(), std::make_shared<clients::MockTransport>());
  o.workers = 4;
  const auto again = curate(corpus, gen2, o);
  CHECK(nlohmann::json(again.items[1].labels) == nlohmann::json(r.items[1].labels));
  CHECK(nlohmann::json(again.items[1].responses) == nlohmann::json(r.items[1].responses));

  o.n_samples = 1;
  CHECK_THROWS_AS(curate(corpus, gen, o), PreconditionError);
}

TEST_CASE("curate input validation") {
  clients::LlmClient gen(cfg(), std::make_shared<clients::MockTransport>());
  CHECK_THROWS_AS(curate({}, gen, {}), PreconditionError);
  CHECK_THROWS_AS(curate({{"a", "q", "r", {}}, {"a", "q2", "r", {}}}, gen, {}), PreconditionError);
  CHECK_THROWS_AS(curate({{"a", "", "r", {}}}, gen, {}), PreconditionError);
}

TEST_CASE("curate resumes from its checkpoint") {
  const auto path = std::filesystem::temp_directory_path() / "geouq_curate_ckpt.jsonl";
  std::filesystem::remove(path);
  std::vector<QueryRecord> corpus{{"q1", "What is one?", "one", {}}, {"q2", "What is two?", "two", {}}};
  CurateOptions o;
  o.n_samples = 3;
  o.checkpoint = path;

  auto first = std::make_shared<clients::MockTransport>();
  clients::LlmClient gen1(cfg(), first);
  const auto partial = curate({corpus[0]}, gen1, o);  // "interrupted" after question 1
  CHECK(first->requests() == 2);

  auto second = std::make_shared<clients::MockTransport>();
  clients::LlmClient gen2(cfg(), second);
  const auto full = curate(corpus, gen2, o);
  CHECK(full.resumed == 1);
  CHECK(full.items.size() == 2);
  CHECK(second->requests() == 2);  // only q2 generated
  CHECK(nlohmann::json(full.items[0].responses) == nlohmann::json(partial.items[0].responses));
  CHECK(io::read_jsonl(path).size() == 2);
  std::filesystem::remove(path);
}

TEST_CASE("curate reports failures and keeps going") {
  std::vector<QueryRecord> corpus{{"q1", "What?", std::nullopt, {}}, {"q2", "Why?", "because", {}}};
  clients::LlmClient gen(cfg(), std::make_shared<clients::MockTransport>());
  CurateOptions o;
  o.n_samples = 2;
  const auto r = curate(corpus, gen, o);
  CHECK(r.items.size() == 1);
  CHECK(r.failed_ids == std::vector<std::string>{"q1"});
}

TEST_CASE("mixed_only keeps questions with both label classes") {
  std::vector<QueryRecord> corpus;
  clients::MockOptions mo;
  for (int i = 0; i < 6; ++i) {
    const std::string q = "Question " + std::to_string(i) + "?";
    corpus.push_back({"q" + std::to_string(i), q, "answer" + std::to_string(i), {}});
    mo.knowledge[q] = {"answer" + std::to_string(i), i % 3 == 0 ? 0.0 : 0.5};
  }
  clients::LlmClient gen(cfg(), std::make_shared<clients::MockTransport>(mo));
  CurateOptions o;
  o.n_samples = 10;
  o.mixed_only = true;
  const auto r = curate(corpus, gen, o);
  CHECK(r.filtered_out >= 2);
  CHECK(r.items.size() + r.filtered_out == corpus.size());
  for (const auto& item : r.items) {
    const double rate = item.labels.sampled_rate();
    CHECK(rate > 0.0);
    CHECK(rate < 1.0);
  }
}
