#include "geouq/curation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>
#include <unordered_map>

#include "geouq/error.hpp"
#include "geouq/jsonl.hpp"

namespace geouq::curation {

void ResponseBatch::validate() const {
  if (samples.size() < 2) throw PreconditionError("response batch needs n >= 2 samples");
  for (const auto& s : samples)
    if (s.find_first_not_of(" \t\r\n") == std::string::npos)
      throw PreconditionError("empty sample in batch " + question_id);
}

double LabeledBatch::sampled_rate() const {
  if (sample_labels.empty()) return 0.0;
  return static_cast<double>(std::accumulate(sample_labels.begin(), sample_labels.end(), 0)) /
         static_cast<double>(sample_labels.size());
}

std::string to_string(LabelSource s) { return s == LabelSource::rouge ? "rouge" : "judge"; }

LabelSource label_source_from_string(std::string_view s) {
  if (s == "rouge") return LabelSource::rouge;
  if (s == "judge") return LabelSource::judge;
  throw PreconditionError("unknown label source: " + std::string(s));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_f1(std::string_view candidate, std::string_view reference) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  if (c.empty() || r.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(c, r));
  if (lcs == 0.0) return 0.0;
  // 2PR/(P+R) reduces to 2 LCS/(|c|+|r|); one division keeps 0.3 boundaries exact
  return 2.0 * lcs / static_cast<double>(c.size() + r.size());
}

LabeledBatch label_batch(const ResponseBatch& batch, const QueryRecord& record,
                         LabelSource mode, clients::LlmClient* judge,
                         double rouge_threshold) {
  if (!record.reference_answer)
    throw MissingReference("question " + record.id + " has no reference answer");
  if (mode == LabelSource::judge && judge == nullptr)
    throw PreconditionError("judge labelling requires a judge client");

  const std::string& ref = *record.reference_answer;
  LabeledBatch out;
  out.question_id = batch.question_id;
  out.label_source = mode;

  if (mode == LabelSource::rouge) {
    std::vector<double> scores;
    scores.reserve(batch.samples.size() + 1);
    scores.push_back(rouge_l_f1(batch.default_response, ref));
    for (const auto& s : batch.samples) scores.push_back(rouge_l_f1(s, ref));
    out.default_label = scores[0] < rouge_threshold ? 1 : 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
      out.sample_labels.push_back(scores[i] < rouge_threshold ? 1 : 0);
    out.rouge_scores = std::move(scores);
  } else {
    out.default_label = judge->judge_label(record.question, ref, batch.default_response);
    for (const auto& s : batch.samples)
      out.sample_labels.push_back(judge->judge_label(record.question, ref, s));
  }
  return out;
}

namespace {

bool mixed(const LabeledBatch& l) {
  const auto pos = std::count(l.sample_labels.begin(), l.sample_labels.end(), 1);
  return pos > 0 && pos < static_cast<std::ptrdiff_t>(l.sample_labels.size());
}

}  // namespace

CurateResult curate(const std::vector<QueryRecord>& corpus, clients::LlmClient& generator,
                    const CurateOptions& options, clients::LlmClient* judge) {
  if (options.n_samples < 2) throw PreconditionError("curate requires n >= 2");
  if (corpus.empty()) throw PreconditionError("curate requires a non-empty corpus");
  {
    std::set<std::string> ids;
    for (const auto& q : corpus) {
      if (q.question.empty()) throw PreconditionError("empty question for id " + q.id);
      if (!ids.insert(q.id).second) throw PreconditionError("duplicate question id " + q.id);
    }
  }

  std::unordered_map<std::string, CuratedItem> done;
  if (options.checkpoint && std::filesystem::exists(*options.checkpoint)) {
    for (const auto& j : io::read_jsonl(*options.checkpoint, /*tolerate_torn_tail=*/true))
      done[j.at("question_id").get<std::string>()] =
          CuratedItem{j.at("response").get<ResponseBatch>(), j.at("label").get<LabeledBatch>()};
  }

  CurateResult result;
  std::vector<std::optional<CuratedItem>> slots(corpus.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (auto it = done.find(corpus[i].id); it != done.end()) {
      slots[i] = it->second;
      ++result.resumed;
    } else {
      todo.push_back(i);
    }
  }

  std::mutex writer_mutex;
  std::ofstream checkpoint;
  if (options.checkpoint) checkpoint.open(*options.checkpoint, std::ios::app);
  std::vector<std::string> failures(corpus.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t t = next++; t < todo.size(); t = next++) {
      const QueryRecord& rec = corpus[todo[t]];
      try {
        ResponseBatch batch;
        batch.question_id = rec.id;
        batch.default_temperature = options.default_temperature;
        batch.sample_temperature = options.sample_temperature;
        batch.default_response =
            generator
                .chat_complete({rec.question, options.default_temperature, 1,
                                options.max_tokens})
                .front();
        batch.samples = generator.chat_complete(
            {rec.question, options.sample_temperature, options.n_samples, options.max_tokens});
        batch.validate();
        LabeledBatch labels =
            label_batch(batch, rec, options.label_mode, judge, options.rouge_threshold);
        CuratedItem item{std::move(batch), std::move(labels)};
        {
          std::lock_guard lock(writer_mutex);
          if (checkpoint.is_open()) {
            checkpoint << nlohmann::json{{"question_id", rec.id},
                                         {"response", item.responses},
                                         {"label", item.labels}}
                              .dump()
                       << '\n'
                       << std::flush;
          }
        }
        slots[todo[t]] = std::move(item);
      } catch (const Error& e) {
        failures[todo[t]] = e.what();
      }
    }
  };

  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(todo.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!slots[i]) {
      result.failed_ids.push_back(corpus[i].id);
      continue;
    }
    if (options.mixed_only && !mixed(slots[i]->labels)) {
      ++result.filtered_out;
      continue;
    }
    result.items.push_back(std::move(*slots[i]));
  }
  return result;
}

}  // namespace geouq::curation
