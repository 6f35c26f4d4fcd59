#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace geouq::clients {

/// Connection settings for one OpenAI-compatible endpoint.
struct ClientConfig {
  std::string base_url;
  std::string api_key;  // never serialized
  std::string model_name;
  double timeout_s = 60.0;
  int max_retries = 3;
  double backoff_base_s = 1.0;
  int max_concurrent = 4;

  void validate() const;
  /// Everything but the key, for run manifests.
  nlohmann::json redacted() const;
};

struct GenerationRequest {
  std::string prompt;
  double temperature = 0.0;
  int n_samples = 1;
  int max_tokens = 256;

  void validate() const;
};

struct JudgeConfig {
  /// Placeholders: {question}, {reference}, {candidate}.
  std::string prompt_template =
      "You are grading an answer against a reference.\n"
      "Question: {question}\n"
      "Reference answer: {reference}\n"
      "Candidate answer: {candidate}\n"
      "Reply with exactly one word: CORRECT if the candidate agrees with the "
      "reference, INCORRECT otherwise.";
  std::string correct_marker = "CORRECT";
  std::string incorrect_marker = "INCORRECT";
};

/// Raw result of one POST. status == 0 means the connection itself failed.
struct HttpResponse {
  int status = 0;
  std::string body;
};

/// The wire. Implementations must be safe to call from several threads.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& json_body,
                            const std::string& bearer_token, double timeout_s) = 0;
};

/// cpp-httplib backed transport; base_url may carry a path prefix
/// (e.g. "https://api.openai.com/v1").
std::shared_ptr<Transport> make_http_transport(const std::string& base_url);

/// Thread-safe embedding cache keyed by a content hash of (model, text).
/// When given a path, entries are loaded from and appended to a JSONL file.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path path);

  static std::string key(const std::string& model, const std::string& text);

  std::optional<std::vector<double>> get(const std::string& key) const;
  void put(const std::string& key, const std::string& model,
           const std::vector<double>& embedding);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::vector<double>> entries_;
};

/// Caps the number of simultaneous in-flight requests.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int limit) : limit_(limit) {}
  void acquire();
  void release();
  int in_flight() const;

 private:
  int limit_;
  int active_ = 0;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
};

struct ClientOptions {
  std::shared_ptr<EmbeddingCache> cache;       // created in-memory when null
  std::optional<std::filesystem::path> judge_audit_path;
  JudgeConfig judge;
  /// Sleep hook used between retries; defaults to std::this_thread::sleep_for.
  std::function<void(double seconds)> sleeper;
};

/// Chat, embedding and judge calls against one endpoint, with retry,
/// bounded concurrency and an embedding cache.
class LlmClient {
 public:
  LlmClient(ClientConfig cfg, std::shared_ptr<Transport> transport,
            ClientOptions options = {});

  /// Exactly req.n_samples completions.
  std::vector<std::string> chat_complete(const GenerationRequest& req);

  /// Row i embeds texts[i]. Repeated texts are served from the cache.
  Eigen::MatrixXd embed_texts(const std::vector<std::string>& texts);

  /// 1 when the judge answers with the incorrect marker, 0 for the correct one.
  int judge_label(const std::string& question, const std::string& reference,
                  const std::string& candidate);

  const ClientConfig& config() const { return cfg_; }
  std::uint64_t attempts() const { return attempts_.load(); }
  std::uint64_t embedding_calls() const { return embedding_calls_.load(); }

 private:
  HttpResponse post_with_retry(const std::string& path, const nlohmann::json& body);
  void check_dimension(std::size_t d);

  ClientConfig cfg_;
  std::shared_ptr<Transport> transport_;
  ClientOptions options_;
  ConcurrencyGate gate_;
  std::atomic<std::uint64_t> attempts_{0};
  std::atomic<std::uint64_t> embedding_calls_{0};
  std::mutex dim_mutex_;
  std::optional<std::size_t> dim_;
  std::mutex audit_mutex_;
};

/// Parses a judge reply. Throws UnparseableVerdict when neither marker is
/// the first token.
int parse_verdict(const std::string& raw, const JudgeConfig& judge);

std::string fill_judge_template(const JudgeConfig& judge, const std::string& question,
                                const std::string& reference,
                                const std::string& candidate);

// ---------------------------------------------------------------------------
// Offline mock

/// What the mock "model" knows about a prompt.
struct MockAnswerKey {
  std::string reference;
  double hallucination_rate = 0.3;
};

struct MockOptions {
  std::uint64_t seed = 0;
  int embedding_dim = 256;
  /// Replies to every chat call when set (used to script a judge).
  std::optional<std::string> fixed_reply;
  /// prompt -> answer key; prompts without a key get generic text.
  std::map<std::string, MockAnswerKey> knowledge;
  /// Answer judge prompts by ROUGE-L against the reference they contain.
  bool act_as_judge = false;
  double judge_rouge_threshold = 0.3;
  /// Artificial per-request latency in milliseconds.
  int latency_ms = 0;
};

/// Deterministic in-process stand-in for an OpenAI-compatible server.
/// Completion i for prompt p is seeded by hash(p, i); embeddings are a
/// feature-hashed bag of tokens and their character trigrams, with function
/// words down-weighted.
class MockTransport : public Transport {
 public:
  explicit MockTransport(MockOptions options = {});

  HttpResponse post(const std::string& path, const std::string& json_body,
                    const std::string& bearer_token, double timeout_s) override;

  int max_in_flight() const { return max_in_flight_.load(); }
  std::uint64_t requests() const { return requests_.load(); }

  std::string complete(const std::string& prompt, int index, double temperature) const;
  std::vector<double> embed(const std::string& text) const;

 private:
  std::string judge_reply(const std::string& prompt) const;

  MockOptions options_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  std::atomic<std::uint64_t> requests_{0};
};

/// Applies GEOUQ_* environment overrides (base URL and key) to a config.
void apply_env_overrides(ClientConfig& cfg, const char* base_var, const char* key_var);

}  // namespace geouq::clients
