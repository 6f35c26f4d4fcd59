#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geouq/llm_clients.hpp"

namespace geouq::curation {

struct QueryRecord {
  std::string id;
  std::string question;
  std::optional<std::string> reference_answer;
  std::vector<std::string> tags;
};

/// One prompt's greedy answer plus n sampled answers.
struct ResponseBatch {
  std::string question_id;
  std::string default_response;
  std::vector<std::string> samples;
  double default_temperature = 0.0;
  double sample_temperature = 1.0;

  void validate() const;
};

enum class LabelSource { rouge, judge };

struct LabeledBatch {
  std::string question_id;
  int default_label = 0;
  std::vector<int> sample_labels;
  LabelSource label_source = LabelSource::rouge;
  /// Present iff label_source == rouge; index 0 is the default response,
  /// indices 1..n the samples.
  std::optional<std::vector<double>> rouge_scores;

  /// Fraction of hallucinated samples.
  double sampled_rate() const;
};

std::string to_string(LabelSource s);
LabelSource label_source_from_string(std::string_view s);

/// Lowercase, drop ASCII punctuation, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b);

/// ROUGE-L F1 over tokenize()d text; 0 when either side is empty or LCS = 0.
double rouge_l_f1(std::string_view candidate, std::string_view reference);

inline constexpr double kRougeThreshold = 0.3;

/// Labels the default response and every sample (1 = hallucination).
LabeledBatch label_batch(const ResponseBatch& batch, const QueryRecord& record,
                         LabelSource mode, clients::LlmClient* judge = nullptr,
                         double rouge_threshold = kRougeThreshold);

struct CurateOptions {
  int n_samples = 20;
  double default_temperature = 0.0;
  double sample_temperature = 1.0;
  int max_tokens = 256;
  LabelSource label_mode = LabelSource::rouge;
  double rouge_threshold = kRougeThreshold;
  /// One JSONL line per completed question; existing lines are reused.
  std::optional<std::filesystem::path> checkpoint;
  int workers = 1;
  /// Keep only questions whose samples contain both label classes.
  bool mixed_only = false;
};

struct CuratedItem {
  ResponseBatch responses;
  LabeledBatch labels;
};

struct CurateResult {
  std::vector<CuratedItem> items;  // corpus order
  std::vector<std::string> failed_ids;
  std::size_t resumed = 0;
  std::size_t filtered_out = 0;
};

CurateResult curate(const std::vector<QueryRecord>& corpus, clients::LlmClient& generator,
                    const CurateOptions& options, clients::LlmClient* judge = nullptr);

}  // namespace geouq::curation
