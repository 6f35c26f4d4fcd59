#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>

#include <json.hpp>

#include "geouq/curation.hpp"
#include "geouq/llm_clients.hpp"
#include "geouq/rng.hpp"

namespace geouq::clients {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 48> kVocabulary = {
    "paris",    "berlin",   "copper",   "nineteen", "eighteen", "violet",  "glacier",
    "neptune",  "saturn",   "marble",   "orchid",   "falcon",   "lisbon",  "tokyo",
    "granite",  "emerald",  "sapphire", "harbor",   "meadow",   "canyon",  "thunder",
    "lantern",  "compass",  "velvet",   "amber",    "quartz",   "tundra",  "monsoon",
    "basil",    "cedar",    "walrus",   "pelican",  "tiger",    "nickel",  "cobalt",
    "argon",    "helium",   "sonnet",   "ballad",   "sparta",   "carthage", "byzantium",
    "oslo",     "cairo",    "lima",     "quito",    "plato",    "euclid"};

constexpr std::array<std::string_view, 5> kTemplates = {
    "{a}", "{a}.", "The answer is {a}.", "It is {a}.", "Surely {a}."};

// Optional trailing word, so samples rarely repeat verbatim.
constexpr std::array<std::string_view, 24> kFillers = {
    "indeed",  "certainly", "clearly",  "definitely", "probably", "likely",
    "obviously", "basically", "actually", "exactly",  "naturally", "simply",
    "truly",   "really",    "surely",   "plainly",    "honestly", "frankly",
    "evidently", "apparently", "undoubtedly", "presumably", "precisely", "admittedly"};

// Function words barely move the mock embedding; content words dominate it.
constexpr std::array<std::string_view, 8> kFunctionWords = {
    "the", "answer", "is", "it", "surely", "a", "an", "of"};

bool is_function_word(std::string_view t) {
  return std::find(kFunctionWords.begin(), kFunctionWords.end(), t) != kFunctionWords.end() ||
         std::find(kFillers.begin(), kFillers.end(), t) != kFillers.end();
}

std::string apply_template(std::string_view tmpl, const std::string& answer) {
  std::string out(tmpl);
  out.replace(out.find("{a}"), 3, answer);
  return out;
}

std::string random_words(Rng& rng, int count) {
  std::string out;
  for (int i = 0; i < count; ++i) {
    if (i) out += ' ';
    out += kVocabulary[rng.below(kVocabulary.size())];
  }
  return out;
}

std::string line_after(const std::string& text, const std::string& label) {
  const auto pos = text.find(label);
  if (pos == std::string::npos) return {};
  const auto start = pos + label.size();
  const auto end = text.find('\n', start);
  return text.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

}  // namespace

MockTransport::MockTransport(MockOptions options) : options_(std::move(options)) {}

std::string MockTransport::judge_reply(const std::string& prompt) const {
  const std::string reference = line_after(prompt, "Reference answer: ");
  const std::string candidate = line_after(prompt, "Candidate answer: ");
  if (reference.empty() || candidate.empty()) return "UNSURE";
  return curation::rouge_l_f1(candidate, reference) < options_.judge_rouge_threshold
             ? "INCORRECT"
             : "CORRECT";
}

std::string MockTransport::complete(const std::string& prompt, int index,
                                    double temperature) const {
  if (options_.fixed_reply) return *options_.fixed_reply;
  if (options_.act_as_judge) return judge_reply(prompt);

  // Greedy decoding ignores the sample index.
  const std::uint64_t slot = temperature == 0.0 ? ~std::uint64_t{0}
                                                : static_cast<std::uint64_t>(index);
  Rng rng(hash_combine(hash_combine(options_.seed, fnv1a(prompt)), slot));

  const auto known = options_.knowledge.find(prompt);
  if (known == options_.knowledge.end())
    return "mock reply " + random_words(rng, 3 + static_cast<int>(rng.below(4)));

  const MockAnswerKey& key = known->second;
  const bool hallucinate = rng.uniform() < key.hallucination_rate;
  const std::string answer =
      hallucinate ? random_words(rng, 1 + static_cast<int>(rng.below(2))) : key.reference;
  std::string reply = apply_template(kTemplates[rng.below(kTemplates.size())], answer);
  if (rng.uniform() < 0.8) reply += " " + std::string(kFillers[rng.below(kFillers.size())]);
  return reply;
}

std::vector<double> MockTransport::embed(const std::string& text) const {
  const auto dim = static_cast<std::size_t>(options_.embedding_dim);
  std::vector<double> v(dim, 0.0);
  auto add_feature = [&](std::string_view feature, double weight) {
    Rng rng(fnv1a(feature, fnv1a("mock-embedding")));
    for (auto& x : v) x += weight * rng.normal();
  };
  const auto tokens = curation::tokenize(text);
  for (const auto& t : tokens) {
    const double w = is_function_word(t) ? 0.1 : 1.0;
    add_feature(t, w);
    for (std::size_t i = 0; i + 3 <= t.size(); ++i) add_feature(std::string_view(t).substr(i, 3), 0.15 * w);
  }
  if (tokens.empty()) add_feature(text, 1.0);
  return v;
}

HttpResponse MockTransport::post(const std::string& path, const std::string& json_body,
                                 const std::string& /*bearer_token*/,
                                 double /*timeout_s*/) {
  ++requests_;
  const int now = ++in_flight_;
  int prev = max_in_flight_.load();
  while (now > prev && !max_in_flight_.compare_exchange_weak(prev, now)) {
  }
  struct Leave {
    std::atomic<int>& counter;
    ~Leave() { --counter; }
  } leave{in_flight_};
  if (options_.latency_ms > 0)
    std::this_thread::sleep_for(std::chrono::milliseconds(options_.latency_ms));

  json req;
  try {
    req = json::parse(json_body);
  } catch (const json::exception&) {
    return {400, R"({"error":"bad json"})"};
  }

  if (path == "/chat/completions") {
    const std::string prompt = req.at("messages").at(0).at("content").get<std::string>();
    const double temperature = req.value("temperature", 1.0);
    const int n = req.value("n", 1);
    json choices = json::array();
    for (int i = 0; i < n; ++i)
      choices.push_back({{"index", i},
                         {"message",
                          {{"role", "assistant"}, {"content", complete(prompt, i, temperature)}}},
                         {"finish_reason", "stop"}});
    return {200, json{{"object", "chat.completion"}, {"choices", choices}}.dump()};
  }
  if (path == "/embeddings") {
    json data = json::array();
    const auto& input = req.at("input");
    for (std::size_t i = 0; i < input.size(); ++i)
      data.push_back({{"object", "embedding"},
                      {"index", i},
                      {"embedding", embed(input[i].get<std::string>())}});
    return {200, json{{"object", "list"}, {"data", data}}.dump()};
  }
  return {404, R"({"error":"unknown path"})"};
}

}  // namespace geouq::clients
