#include "geouq/llm_clients.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "geouq/error.hpp"
#include "geouq/rng.hpp"

namespace geouq::clients {

using nlohmann::json;

void ClientConfig::validate() const {
  if (max_retries < 0) throw PreconditionError("max_retries must be >= 0");
  if (!(timeout_s > 0.0)) throw PreconditionError("timeout must be > 0");
  if (max_concurrent < 1) throw PreconditionError("max_concurrent must be >= 1");
  if (backoff_base_s < 0.0) throw PreconditionError("backoff_base must be >= 0");
}

json ClientConfig::redacted() const {
  return json{{"base_url", base_url},
              {"model_name", model_name},
              {"timeout", timeout_s},
              {"max_retries", max_retries},
              {"backoff_base", backoff_base_s},
              {"max_concurrent", max_concurrent}};
}

void GenerationRequest::validate() const {
  if (!(temperature >= 0.0)) throw PreconditionError("temperature must be >= 0");
  if (n_samples < 1) throw PreconditionError("n_samples must be >= 1");
  if (max_tokens < 1) throw PreconditionError("max_tokens must be >= 1");
}

void apply_env_overrides(ClientConfig& cfg, const char* base_var, const char* key_var) {
  if (const char* base = std::getenv(base_var); base && *base) cfg.base_url = base;
  if (const char* key = std::getenv(key_var); key && *key) cfg.api_key = key;
}

// ---------------------------------------------------------------------------

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      entries_[j.at("key").get<std::string>()] =
          j.at("embedding").get<std::vector<double>>();
    } catch (const json::exception&) {
      // a torn trailing line from an interrupted run; skip it
    }
  }
}

std::string EmbeddingCache::key(const std::string& model, const std::string& text) {
  const std::uint64_t h = fnv1a(text, fnv1a(std::string_view("\0", 1), fnv1a(model)));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<std::vector<double>> EmbeddingCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

void EmbeddingCache::put(const std::string& key, const std::string& model,
                         const std::vector<double>& embedding) {
  std::lock_guard lock(mutex_);
  if (!entries_.emplace(key, embedding).second) return;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  out << json{{"key", key}, {"model", model}, {"embedding", embedding}}.dump() << '\n';
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

void ConcurrencyGate::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return active_ < limit_; });
  ++active_;
}

void ConcurrencyGate::release() {
  {
    std::lock_guard lock(mutex_);
    --active_;
  }
  cv_.notify_one();
}

int ConcurrencyGate::in_flight() const {
  std::lock_guard lock(mutex_);
  return active_;
}

namespace {

class GateGuard {
 public:
  explicit GateGuard(ConcurrencyGate& gate) : gate_(gate) { gate_.acquire(); }
  ~GateGuard() { gate_.release(); }
  GateGuard(const GateGuard&) = delete;
  GateGuard& operator=(const GateGuard&) = delete;

 private:
  ConcurrencyGate& gate_;
};

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

json parse_body(const HttpResponse& r) {
  try {
    return json::parse(r.body);
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("response body is not JSON: ") + e.what());
  }
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

}  // namespace

LlmClient::LlmClient(ClientConfig cfg, std::shared_ptr<Transport> transport,
                     ClientOptions options)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      options_(std::move(options)),
      gate_(cfg_.max_concurrent) {
  cfg_.validate();
  if (!transport_) throw PreconditionError("LlmClient needs a transport");
  if (!options_.cache) options_.cache = std::make_shared<EmbeddingCache>();
  if (!options_.sleeper) {
    options_.sleeper = [](double s) {
      std::this_thread::sleep_for(std::chrono::duration<double>(s));
    };
  }
}

HttpResponse LlmClient::post_with_retry(const std::string& path, const json& body) {
  const std::string payload = body.dump();
  HttpResponse last;
  for (int attempt = 0;; ++attempt) {
    {
      GateGuard guard(gate_);
      ++attempts_;
      last = transport_->post(path, payload, cfg_.api_key, cfg_.timeout_s);
    }
    if (last.status == 401 || last.status == 403)
      throw AuthError("authentication rejected (HTTP " + std::to_string(last.status) +
                      ") for " + path);
    if (last.status >= 200 && last.status < 300) return last;
    if (!retryable(last.status))
      throw TransportError("HTTP " + std::to_string(last.status) + " from " + path);
    if (attempt >= cfg_.max_retries) break;
    options_.sleeper(cfg_.backoff_base_s * std::ldexp(1.0, attempt));
  }
  const std::string what = "giving up on " + path + " after " +
                           std::to_string(cfg_.max_retries + 1) + " attempts (last status " +
                           std::to_string(last.status) + ")";
  if (last.status == 429) throw RateLimited(what);
  throw TransportError(what);
}

std::vector<std::string> LlmClient::chat_complete(const GenerationRequest& req) {
  req.validate();
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(req.n_samples));
  while (static_cast<int>(out.size()) < req.n_samples) {
    const int remaining = req.n_samples - static_cast<int>(out.size());
    const json body{{"model", cfg_.model_name},
                    {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
                    {"temperature", req.temperature},
                    {"max_tokens", req.max_tokens},
                    {"n", remaining}};
    const json j = parse_body(post_with_retry("/chat/completions", body));
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
      throw MalformedResponse("chat completion without choices");
    for (const auto& choice : j["choices"]) {
      if (static_cast<int>(out.size()) == req.n_samples) break;
      const auto msg = choice.find("message");
      if (msg == choice.end() || !msg->contains("content") ||
          !(*msg)["content"].is_string())
        throw MalformedResponse("choice lacks message.content");
      out.push_back((*msg)["content"].get<std::string>());
    }
  }
  return out;
}

void LlmClient::check_dimension(std::size_t d) {
  std::lock_guard lock(dim_mutex_);
  if (!dim_) {
    dim_ = d;
  } else if (*dim_ != d) {
    throw DimensionMismatch("embedding dimension changed from " + std::to_string(*dim_) +
                            " to " + std::to_string(d));
  }
}

Eigen::MatrixXd LlmClient::embed_texts(const std::vector<std::string>& texts) {
  if (texts.empty()) throw PreconditionError("embed_texts needs at least one text");
  for (const auto& t : texts)
    if (trim(t).empty()) throw PreconditionError("cannot embed an empty text");

  auto& cache = *options_.cache;
  std::vector<std::string> keys;
  keys.reserve(texts.size());
  std::vector<std::size_t> missing;  // first occurrence of each uncached key
  {
    std::vector<std::string> seen;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      keys.push_back(EmbeddingCache::key(cfg_.model_name, texts[i]));
      if (cache.get(keys.back())) continue;
      if (std::find(seen.begin(), seen.end(), keys.back()) != seen.end()) continue;
      seen.push_back(keys.back());
      missing.push_back(i);
    }
  }

  if (!missing.empty()) {
    json input = json::array();
    for (std::size_t i : missing) input.push_back(texts[i]);
    ++embedding_calls_;
    const json j = parse_body(
        post_with_retry("/embeddings", json{{"model", cfg_.model_name}, {"input", input}}));
    if (!j.contains("data") || !j["data"].is_array() || j["data"].size() != missing.size())
      throw MalformedResponse("embedding response has wrong number of rows");
    std::vector<std::optional<std::vector<double>>> rows(missing.size());
    for (std::size_t r = 0; r < j["data"].size(); ++r) {
      const auto& item = j["data"][r];
      const std::size_t idx = item.contains("index") ? item["index"].get<std::size_t>() : r;
      if (idx >= rows.size() || !item.contains("embedding"))
        throw MalformedResponse("embedding item lacks index/embedding");
      rows[idx] = item["embedding"].get<std::vector<double>>();
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!rows[r] || rows[r]->empty()) throw MalformedResponse("missing embedding row");
      check_dimension(rows[r]->size());
      cache.put(keys[missing[r]], cfg_.model_name, *rows[r]);
    }
  }

  std::vector<std::vector<double>> rows;
  rows.reserve(texts.size());
  for (const auto& k : keys) {
    auto v = cache.get(k);
    if (!v) throw MalformedResponse("embedding vanished from cache");
    check_dimension(v->size());
    rows.push_back(std::move(*v));
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return out;
}

std::string fill_judge_template(const JudgeConfig& judge, const std::string& question,
                                const std::string& reference,
                                const std::string& candidate) {
  std::string prompt = judge.prompt_template;
  replace_all(prompt, "{question}", question);
  replace_all(prompt, "{reference}", reference);
  replace_all(prompt, "{candidate}", candidate);
  return prompt;
}

int parse_verdict(const std::string& raw, const JudgeConfig& judge) {
  const std::string t = trim(raw);
  std::string token = t.substr(0, t.find_first_of(" \t\r\n"));
  auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  while (!token.empty() && is_punct(token.back())) token.pop_back();
  while (!token.empty() && is_punct(token.front())) token.erase(token.begin());
  if (token == judge.incorrect_marker) return 1;
  if (token == judge.correct_marker) return 0;
  throw UnparseableVerdict("judge verdict matches no marker: \"" + raw + "\"");
}

int LlmClient::judge_label(const std::string& question, const std::string& reference,
                           const std::string& candidate) {
  if (trim(question).empty() || trim(reference).empty() || trim(candidate).empty())
    throw PreconditionError("judge_label needs non-empty question/reference/candidate");
  const std::string prompt =
      fill_judge_template(options_.judge, question, reference, candidate);
  const std::string raw = chat_complete(GenerationRequest{prompt, 0.0, 1, 16}).front();

  std::optional<int> label;
  std::string error;
  try {
    label = parse_verdict(raw, options_.judge);
  } catch (const UnparseableVerdict& e) {
    error = e.what();
  }
  if (options_.judge_audit_path) {
    std::lock_guard lock(audit_mutex_);
    std::ofstream out(*options_.judge_audit_path, std::ios::app);
    json rec{{"question", question},
             {"reference", reference},
             {"candidate", candidate},
             {"model", cfg_.model_name},
             {"raw", raw}};
    rec["label"] = label ? json(*label) : json(nullptr);
    out << rec.dump() << '\n';
  }
  if (!label) throw UnparseableVerdict(error);
  return *label;
}

}  // namespace geouq::clients
