#include "geouq/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "geouq/archetypes.hpp"
#include "geouq/embedding_prep.hpp"
#include "geouq/error.hpp"
#include "geouq/geometry.hpp"
#include "geouq/jsonl.hpp"
#include "geouq/rng.hpp"

namespace geouq::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::pair<Stage, const char*> kStageNames[] = {
    {Stage::curate, "curate"},         {Stage::embed, "embed"},
    {Stage::reduce, "reduce"},         {Stage::fit, "fit"},
    {Stage::score_global, "score-global"}, {Stage::score_local, "score-local"},
    {Stage::tune, "tune"},             {Stage::eval, "eval"},
    {Stage::analyze_terms, "analyze-terms"}};

}  // namespace

std::string to_string(Stage s) {
  for (const auto& [stage, name] : kStageNames)
    if (stage == s) return name;
  return "?";
}

Stage stage_from_string(std::string_view s) {
  for (const auto& [stage, name] : kStageNames)
    if (s == name) return stage;
  throw ConfigError("unknown stage: " + std::string(s));
}

std::vector<Stage> all_stages() {
  std::vector<Stage> out;
  for (const auto& entry : kStageNames) out.push_back(entry.first);
  return out;
}

std::vector<Stage> stage_range(Stage from, Stage to) {
  if (static_cast<int>(from) > static_cast<int>(to))
    throw ConfigError("--stage-from " + to_string(from) + " comes after --stage-to " + to_string(to));
  std::vector<Stage> out;
  for (int s = static_cast<int>(from); s <= static_cast<int>(to); ++s) out.push_back(static_cast<Stage>(s));
  return out;
}

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(pca_dim >= 1, "pca_dim must be >= 1");
  require(K >= 1, "K must be >= 1");
  require(aa_steps >= 1, "aa_steps must be >= 1");
  require(n_samples >= 2, "n_samples must be >= 2");
  require(k_neighbors >= 1, "k_neighbors must be >= 1");
  require(epsilon > 0.0, "epsilon must be > 0");
  require(val_fraction > 0.0 && val_fraction <= 1.0, "val_fraction must lie in (0, 1]");
  require(!seeds.empty(), "seeds must not be empty");
  require(default_temperature >= 0.0 && sample_temperature >= 0.0, "temperatures must be >= 0");
  require(rouge_threshold >= 0.0 && rouge_threshold <= 1.0, "rouge_threshold must lie in [0, 1]");
  require(max_tokens >= 1, "max_tokens must be >= 1");
  require(workers >= 1, "workers must be >= 1");
  require(voronoi_dim == 2 || voronoi_dim == 3, "voronoi_dim must be 2 or 3");
  require(mock_embedding_dim >= 2, "mock_embedding_dim must be >= 2");
  try {
    llm.validate();
    embed.validate();
    judge.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("client config: ") + e.what());
  }
  if (!mock) {
    require(!llm.base_url.empty() && !llm.model_name.empty(), "llm endpoint and model are required");
    require(!embed.base_url.empty() && !embed.model_name.empty(), "embedding endpoint and model are required");
  }
}

json RunConfig::redacted() const {
  return {{"pca_dim", pca_dim},
          {"K", K},
          {"aa_steps", aa_steps},
          {"n_samples", n_samples},
          {"k_neighbors", k_neighbors},
          {"epsilon", epsilon},
          {"val_fraction", val_fraction},
          {"seeds", seeds},
          {"temperatures", {default_temperature, sample_temperature}},
          {"rouge_threshold", rouge_threshold},
          {"max_tokens", max_tokens},
          {"seed", seed},
          {"mock", mock},
          {"mock_embedding_dim", mock_embedding_dim},
          {"questions", questions.generic_string()},
          {"label_mode", curation::to_string(label_mode)},
          {"with_voronoi", with_voronoi},
          {"voronoi_dim", voronoi_dim},
          {"fuse_extended", fuse_extended},
          {"standardize_terms", standardize_terms},
          {"subset", subset ? json(eval::to_string(*subset)) : json()},
          {"llm", llm.redacted()},
          {"embed", embed.redacted()},
          {"judge", judge.redacted()}};
}

RunConfig default_config() {
  RunConfig c;
  c.llm.base_url = "https://api.openai.com/v1";
  c.llm.model_name = "gpt-4o-mini";
  c.embed.base_url = "https://api.openai.com/v1";
  c.embed.model_name = "text-embedding-3-small";
  c.judge = c.llm;
  return c;
}

void apply_environment(RunConfig& config) {
  clients::apply_env_overrides(config.llm, "GEOUQ_LLM_BASE", "GEOUQ_LLM_KEY");
  clients::apply_env_overrides(config.judge, "GEOUQ_LLM_BASE", "GEOUQ_LLM_KEY");
  clients::apply_env_overrides(config.embed, "GEOUQ_EMBED_BASE", "GEOUQ_EMBED_KEY");
}

clients::MockOptions mock_options_for(const std::vector<curation::QueryRecord>& corpus,
                                      std::uint64_t seed, int embedding_dim) {
  clients::MockOptions o;
  o.seed = seed;
  o.embedding_dim = embedding_dim;
  for (const auto& q : corpus) {
    if (!q.reference_answer) continue;
    clients::MockAnswerKey key{*q.reference_answer, 0.3};
    for (const auto& tag : q.tags) {
      constexpr std::string_view prefix = "mock_rate:";
      if (tag.starts_with(prefix)) {
        try {
          key.hallucination_rate = std::stod(tag.substr(prefix.size()));
        } catch (const std::exception&) {
          throw ConfigError("bad tag on " + q.id + ": " + tag);
        }
      }
    }
    o.knowledge[q.question] = key;
  }
  return o;
}

eval::TermRecord term_record(const suspicion::SuspicionBreakdown& s, const std::vector<int>& sample_labels) {
  eval::TermRecord r;
  r.question_id = s.question_id;
  r.sample_labels = sample_labels;
  r.values.resize(eval::all_terms().size());
  auto at = [&](eval::Term t) -> std::vector<double>& { return r.values[static_cast<std::size_t>(t)]; };
  at(eval::Term::distance_consensus) = s.dist_consensus;
  at(eval::Term::local_density) = s.local_density;
  at(eval::Term::usage_rarity) = s.usage_rarity;
  if (s.voronoi) at(eval::Term::voronoi) = *s.voronoi;
  if (s.geo_entropy) {
    auto& h = at(eval::Term::geometric_entropy);
    for (double v : *s.geo_entropy) h.push_back(-v);
  }
  if (s.dist_nearest_archetype) at(eval::Term::nearest_archetype) = *s.dist_nearest_archetype;
  return r;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(w, n); ++t) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------

namespace {

fs::path artifact(const RunConfig& c, const char* name) { return c.out_dir / name; }

std::vector<json> require_jsonl(const RunConfig& c, const char* name, Stage producer) {
  const fs::path p = artifact(c, name);
  if (!fs::exists(p))
    throw MissingInput("missing input " + std::string(name) + " (expected at " + p.string() +
                       "; produced by stage " + to_string(producer) + ")");
  return io::read_jsonl(p);
}

template <class T>
std::vector<T> load_all(const RunConfig& c, const char* name, Stage producer) {
  std::vector<T> out;
  for (const auto& j : require_jsonl(c, name, producer)) out.push_back(j.get<T>());
  return out;
}

template <class T>
std::vector<json> to_lines(const std::vector<T>& items) {
  std::vector<json> out;
  out.reserve(items.size());
  for (const auto& x : items) out.push_back(json(x));
  return out;
}

std::vector<curation::QueryRecord> load_corpus(const RunConfig& c) {
  if (!fs::exists(c.questions)) throw MissingInput("missing input " + c.questions.string());
  std::vector<curation::QueryRecord> out;
  for (const auto& j : io::read_jsonl(c.questions)) out.push_back(j.get<curation::QueryRecord>());
  return out;
}

std::uint64_t question_seed(const RunConfig& c, const std::string& id, std::uint64_t salt) {
  return hash_combine(hash_combine(c.seed, fnv1a(id)), salt);
}

// Numbers that may be infinite (tau) or absent.
json real(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "inf" : "-inf";
}

json real(const std::optional<double>& v) { return v ? real(*v) : json(); }

struct Clients {
  std::shared_ptr<clients::LlmClient> generator;
  std::shared_ptr<clients::LlmClient> embedder;
  std::shared_ptr<clients::LlmClient> judge;
};

Clients make_clients(const RunConfig& c, const std::vector<curation::QueryRecord>& corpus) {
  Clients out;
  clients::ClientOptions embed_options;
  if (c.mock) {
    auto base = mock_options_for(corpus, c.seed, c.mock_embedding_dim);
    auto judge_options = base;
    judge_options.act_as_judge = true;
    judge_options.judge_rouge_threshold = c.rouge_threshold;
    auto mock_cfg = [](clients::ClientConfig cfg) {
      cfg.api_key.clear();
      cfg.backoff_base_s = 0.0;
      return cfg;
    };
    const auto transport = std::make_shared<clients::MockTransport>(base);
    out.generator = std::make_shared<clients::LlmClient>(mock_cfg(c.llm), transport);
    out.embedder = std::make_shared<clients::LlmClient>(mock_cfg(c.embed), transport);
    out.judge = std::make_shared<clients::LlmClient>(
        mock_cfg(c.judge), std::make_shared<clients::MockTransport>(judge_options));
    return out;
  }
  embed_options.cache = std::make_shared<clients::EmbeddingCache>(artifact(c, "embedding_cache.jsonl"));
  clients::ClientOptions judge_options;
  judge_options.judge_audit_path = artifact(c, "judge_audit.jsonl");
  out.generator = std::make_shared<clients::LlmClient>(c.llm, clients::make_http_transport(c.llm.base_url));
  out.embedder = std::make_shared<clients::LlmClient>(c.embed, clients::make_http_transport(c.embed.base_url),
                                                      embed_options);
  out.judge = std::make_shared<clients::LlmClient>(c.judge, clients::make_http_transport(c.judge.base_url),
                                                   judge_options);
  return out;
}

// --- stages ----------------------------------------------------------------

void stage_curate(const RunConfig& c, std::ostream& log) {
  const auto corpus = load_corpus(c);
  const Clients cl = make_clients(c, corpus);

  curation::CurateOptions o;
  o.n_samples = c.n_samples;
  o.default_temperature = c.default_temperature;
  o.sample_temperature = c.sample_temperature;
  o.max_tokens = c.max_tokens;
  o.label_mode = c.label_mode;
  o.rouge_threshold = c.rouge_threshold;
  o.workers = c.workers;
  // The checkpoint name carries a fingerprint of everything that shapes the
  // responses, so a changed config never resumes from stale lines.
  json shape{{"seed", c.seed},          {"n", c.n_samples},
             {"t0", c.default_temperature}, {"t1", c.sample_temperature},
             {"tokens", c.max_tokens},  {"labels", curation::to_string(c.label_mode)},
             {"rouge", c.rouge_threshold}, {"mock", c.mock},
             {"model", c.llm.model_name}, {"judge", c.judge.model_name},
             {"questions", c.questions.generic_string()}};
  char fp[17];
  std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(fnv1a(shape.dump())));
  fs::create_directories(c.out_dir);
  o.checkpoint = c.out_dir / ("curate_checkpoint." + std::string(fp) + ".jsonl");

  const auto result = curation::curate(corpus, *cl.generator, o, cl.judge.get());
  std::vector<json> responses, labels;
  for (const auto& item : result.items) {
    responses.emplace_back(item.responses);
    labels.emplace_back(item.labels);
  }
  io::write_jsonl(artifact(c, "responses.jsonl"), responses);
  io::write_jsonl(artifact(c, "labels.jsonl"), labels);
  log << "[curate] " << result.items.size() << " questions (" << result.resumed << " resumed)\n";
  if (!result.failed_ids.empty()) {
    std::string ids;
    for (const auto& id : result.failed_ids) ids += (ids.empty() ? "" : ", ") + id;
    throw StageError(std::to_string(result.failed_ids.size()) + " question(s) failed: " + ids);
  }
}

void stage_embed(const RunConfig& c, std::ostream& log) {
  const auto batches = load_all<curation::ResponseBatch>(c, "responses.jsonl", Stage::curate);
  const auto corpus = c.mock && fs::exists(c.questions) ? load_corpus(c) : std::vector<curation::QueryRecord>{};
  const Clients cl = make_clients(c, corpus);
  std::vector<prep::EmbeddingBatch> out(batches.size());
  parallel_for(batches.size(), c.workers, [&](std::size_t i) {
    std::vector<std::string> texts = batches[i].samples;
    texts.push_back(batches[i].default_response);
    const Eigen::MatrixXd m = cl.embedder->embed_texts(texts);
    const auto n = static_cast<Eigen::Index>(batches[i].samples.size());
    out[i].question_id = batches[i].question_id;
    out[i].rows = m.topRows(n);
    out[i].default_row = Eigen::VectorXd(m.row(n).transpose());
  });
  io::write_jsonl(artifact(c, "embeddings.jsonl"), to_lines(out));
  log << "[embed] " << out.size() << " batches, " << cl.embedder->embedding_calls() << " embedding calls\n";
}

void stage_reduce(const RunConfig& c, std::ostream& log) {
  const auto batches = load_all<prep::EmbeddingBatch>(c, "embeddings.jsonl", Stage::embed);
  std::vector<prep::ReducedBatch> out(batches.size());
  parallel_for(batches.size(), c.workers, [&](std::size_t i) { out[i] = prep::reduce_batch(batches[i], c.pca_dim); });
  const auto degenerate = std::count_if(out.begin(), out.end(), [](const auto& b) { return b.degenerate; });
  io::write_jsonl(artifact(c, "reduced.jsonl"), to_lines(out));
  log << "[reduce] " << out.size() << " batches, " << degenerate << " degenerate\n";
}

void stage_fit(const RunConfig& c, std::ostream& log) {
  const auto batches = load_all<prep::ReducedBatch>(c, "reduced.jsonl", Stage::reduce);
  std::vector<json> out(batches.size());
  std::atomic<int> clamped{0};
  parallel_for(batches.size(), c.workers, [&](std::size_t i) {
    const auto& b = batches[i];
    const auto n = b.X.rows();
    aa::ArchetypeModel model;
    if (b.degenerate || b.dim() == 0) {
      // Nothing to span: a single archetype at the (empty) centre.
      model.A = Eigen::MatrixXd::Ones(n, 1);
      model.B = Eigen::MatrixXd::Constant(1, n, 1.0 / static_cast<double>(n));
      model.Z = Eigen::MatrixXd(1, 0);
      model.objective_trace = {0.0};
    } else {
      const int K = static_cast<int>(std::min<Eigen::Index>({c.K, b.dim() + 1, n}));
      if (K < c.K) ++clamped;
      aa::FitOptions o;
      o.steps = c.aa_steps;
      model = aa::fit_aa(b.X, K, question_seed(c, b.question_id, 1), o);
    }
    out[i] = aa::model_to_json(b.question_id, model);
  });
  io::write_jsonl(artifact(c, "archetypes.jsonl"), out);
  log << "[fit] " << out.size() << " models";
  if (clamped) log << ", K reduced to d'+1 on " << clamped << " batch(es)";
  log << '\n';
}

void stage_score_global(const RunConfig& c, std::ostream& log) {
  const auto lines = require_jsonl(c, "archetypes.jsonl", Stage::fit);
  std::vector<geometry::GlobalScore> out(lines.size());
  parallel_for(lines.size(), c.workers, [&](std::size_t i) {
    const aa::ArchetypeModel m = aa::model_from_json(lines[i]);
    geometry::GlobalScore s;
    if (m.Z.rows() < 2 || m.Z.cols() == 0) {
      s.epsilon = c.epsilon;
      s.volume = 0.0;
      s.H_G = std::log(c.epsilon);
      s.degenerate = true;
    } else {
      s = geometry::geometric_volume(m, c.epsilon);
    }
    s.question_id = lines[i].at("question_id").get<std::string>();
    out[i] = s;
  });
  io::write_jsonl(artifact(c, "scores.jsonl"), to_lines(out));
  log << "[score-global] " << out.size() << " scores\n";
}

void stage_score_local(const RunConfig& c, std::ostream& log) {
  const auto batches = load_all<prep::ReducedBatch>(c, "reduced.jsonl", Stage::reduce);
  const auto models = require_jsonl(c, "archetypes.jsonl", Stage::fit);
  std::unordered_map<std::string, const json*> by_id;
  for (const auto& m : models) by_id[m.at("question_id").get<std::string>()] = &m;

  std::vector<suspicion::SuspicionBreakdown> out(batches.size());
  parallel_for(batches.size(), c.workers, [&](std::size_t i) {
    const auto& b = batches[i];
    const auto it = by_id.find(b.question_id);
    if (it == by_id.end()) throw MissingInput("archetypes.jsonl has no model for " + b.question_id);
    suspicion::SelectOptions o;
    o.k = c.k_neighbors;
    o.with_voronoi = c.with_voronoi;
    o.voronoi_dim = c.voronoi_dim;
    o.voronoi_seed = question_seed(c, b.question_id, 2);
    o.fuse_extended = c.fuse_extended;
    out[i] = suspicion::select_best_of_n(b, aa::model_from_json(*it->second), o);
  });
  io::write_jsonl(artifact(c, "suspicion.jsonl"), to_lines(out));
  log << "[score-local] " << out.size() << " batches\n";
}

/// Labels, global scores and local selections joined on question_id, in label order.
struct Joined {
  std::vector<curation::LabeledBatch> labels;
  std::vector<double> H_G;
  std::vector<suspicion::SuspicionBreakdown> local;
};

Joined join(const RunConfig& c, bool need_local) {
  Joined j;
  const auto scores = load_all<geometry::GlobalScore>(c, "scores.jsonl", Stage::score_global);
  const auto labels = load_all<curation::LabeledBatch>(c, "labels.jsonl", Stage::curate);
  std::vector<suspicion::SuspicionBreakdown> local;
  if (need_local) local = load_all<suspicion::SuspicionBreakdown>(c, "suspicion.jsonl", Stage::score_local);

  std::unordered_map<std::string, double> hg;
  for (const auto& s : scores) hg[s.question_id] = s.H_G;
  std::unordered_map<std::string, std::size_t> loc;
  for (std::size_t i = 0; i < local.size(); ++i) loc[local[i].question_id] = i;
  for (const auto& l : labels) {
    const auto h = hg.find(l.question_id);
    if (h == hg.end()) continue;
    if (need_local) {
      const auto s = loc.find(l.question_id);
      if (s == loc.end()) continue;
      j.local.push_back(local[s->second]);
    }
    j.labels.push_back(l);
    j.H_G.push_back(h->second);
  }
  if (j.labels.empty()) throw StageError("no question appears in every input artifact");
  return j;
}

void stage_tune(const RunConfig& c, std::ostream& log) {
  const Joined j = join(c, false);
  std::vector<int> y;
  for (const auto& l : j.labels) y.push_back(l.default_label);

  std::vector<json> out;
  for (auto s : c.seeds) {
    const std::uint64_t split_seed = hash_combine(c.seed, s);
    json line{{"seed", s}, {"split_seed", split_seed}};
    try {
      const auto choice = eval::tune_threshold(j.H_G, y, c.val_fraction, split_seed);
      std::vector<std::string> val_ids, test_ids;
      for (auto i : choice.validation) val_ids.push_back(j.labels[i].question_id);
      for (auto i : choice.test) test_ids.push_back(j.labels[i].question_id);
      line["split_seed"] = choice.seed_used;
      line["tau"] = real(choice.tau);
      line["validation_f1"] = choice.validation_f1;
      line["validation"] = val_ids;
      line["test"] = test_ids;
    } catch (const SingleClassValidation& e) {
      line["tau"] = nullptr;
      line["error"] = e.what();
      log << "[tune] seed " << s << ": " << e.what() << '\n';
    }
    out.push_back(std::move(line));
  }
  io::write_jsonl(artifact(c, "thresholds.jsonl"), out);
  log << "[tune] " << out.size() << " threshold(s)\n";
}

double parse_real(const json& v) {
  if (v.is_number()) return v.get<double>();
  const auto s = v.get<std::string>();
  return s == "inf" ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

struct Stats {
  std::optional<double> mean, sd;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  s.mean = m;
  s.sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

std::string cell(const std::optional<double>& v, int width, const char* fmt = "%.3f") {
  char buf[64];
  if (!v) {
    std::snprintf(buf, sizeof buf, "%*s", width, "n/a");
  } else {
    char num[48];
    std::snprintf(num, sizeof num, fmt, *v);
    std::snprintf(buf, sizeof buf, "%*s", width, num);
  }
  return buf;
}

std::string cell_pm(const Stats& s, int width) {
  if (!s.mean) return cell(std::nullopt, width);
  char num[48];
  std::snprintf(num, sizeof num, "%.3f+-%.3f", *s.mean, *s.sd);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%*s", width, num);
  return buf;
}

void stage_eval(const RunConfig& c, std::ostream& log) {
  const Joined j = join(c, true);
  const auto thresholds = require_jsonl(c, "thresholds.jsonl", Stage::tune);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < j.labels.size(); ++i) index[j.labels[i].question_id] = i;
  std::vector<std::vector<int>> sample_labels;
  for (const auto& l : j.labels) sample_labels.push_back(l.sample_labels);

  const std::vector<eval::Subset> subsets =
      c.subset ? std::vector<eval::Subset>{*c.subset}
               : std::vector<eval::Subset>{eval::Subset::low,      eval::Subset::mid_low,
                                           eval::Subset::mid_high, eval::Subset::high,
                                           eval::Subset::all_valid, eval::Subset::mid_valid};

  std::vector<json> lines;
  std::ostringstream table;
  table << "Detection (H_G > tau) and Best-of-N selection\n";
  char head[256];
  std::snprintf(head, sizeof head, "%-6s %-10s %5s %8s %7s %7s %10s %8s %8s\n", "seed", "subset", "n",
                "tau", "F1", "AUROC", "baseline", "BoN", "dHR");
  table << head;

  std::map<eval::Subset, std::vector<double>> f1s, aucs, dhs;
  std::map<eval::Subset, json> hr_line;
  for (const auto& t : thresholds) {
    const auto seed = t.at("seed").get<std::uint64_t>();
    const bool tuned = !t.at("tau").is_null();
    const double tau = tuned ? parse_real(t.at("tau")) : 0.0;
    std::vector<char> in_test(j.labels.size(), 0);
    if (tuned)
      for (const auto& id : t.at("test")) {
        const auto it = index.find(id.get<std::string>());
        if (it != index.end()) in_test[it->second] = 1;
      }

    for (auto subset : subsets) {
      const auto members = eval::split_by_hallucination_rate(sample_labels, eval::subset_spec(subset));
      json line{{"seed", seed},
                {"split_seed", t.at("split_seed")},
                {"subset", eval::to_string(subset)},
                {"n_questions", members.size()}};
      std::vector<double> test_scores;
      std::vector<int> test_labels, defaults, selected;
      for (auto q : members) {
        defaults.push_back(j.labels[q].default_label);
        selected.push_back(j.labels[q].sample_labels.at(j.local[q].selected_index));
        if (in_test[q]) {
          test_scores.push_back(j.H_G[q]);
          test_labels.push_back(j.labels[q].default_label);
        }
      }
      line["n_test"] = test_scores.size();
      line["tau"] = tuned ? real(tau) : json();
      std::optional<double> f1, auc;
      if (tuned && !test_scores.empty()) {
        std::vector<int> pred;
        for (double s : test_scores) pred.push_back(s > tau ? 1 : 0);
        f1 = eval::f1_score(pred, test_labels);
        const auto pos = std::count(test_labels.begin(), test_labels.end(), 1);
        if (pos > 0 && pos < static_cast<std::ptrdiff_t>(test_labels.size()))
          auc = eval::auroc(test_scores, test_labels);
      }
      line["f1"] = real(f1);
      line["auroc"] = real(auc);
      std::optional<eval::HallucinationRates> hr;
      if (!members.empty()) hr = eval::delta_hr(defaults, selected);
      line["baseline_hr"] = hr ? json(hr->baseline_hr) : json();
      line["bon_hr"] = hr ? json(hr->bon_hr) : json();
      line["delta_hr"] = hr ? json(hr->delta_hr) : json();
      lines.push_back(line);

      if (f1) f1s[subset].push_back(*f1);
      if (auc) aucs[subset].push_back(*auc);
      if (hr) dhs[subset].push_back(hr->delta_hr);
      hr_line[subset] = {{"n_questions", members.size()},
                         {"baseline_hr", line["baseline_hr"]},
                         {"bon_hr", line["bon_hr"]}};

      char row[256];
      std::snprintf(row, sizeof row, "%-6llu %-10s %5zu %8s%8s%8s%11s%9s%9s\n",
                    static_cast<unsigned long long>(seed), eval::to_string(subset).c_str(), members.size(),
                    tuned ? (std::isfinite(tau) ? cell(tau, 8).c_str() : (tau > 0 ? "     inf" : "    -inf"))
                          : "     n/a",
                    cell(f1, 8).c_str(), cell(auc, 8).c_str(),
                    cell(hr ? std::optional<double>(hr->baseline_hr) : std::nullopt, 11).c_str(),
                    cell(hr ? std::optional<double>(hr->bon_hr) : std::nullopt, 9).c_str(),
                    cell(hr ? std::optional<double>(hr->delta_hr) : std::nullopt, 9, "%+.3f").c_str());
      table << row;
    }
  }

  table << "\nMean +- std over seeds\n";
  std::snprintf(head, sizeof head, "%-10s %5s %16s %16s %16s\n", "subset", "n", "F1", "AUROC", "dHR");
  table << head;
  for (auto subset : subsets) {
    const auto f = stats(f1s[subset]), a = stats(aucs[subset]), d = stats(dhs[subset]);
    json agg{{"aggregate", true},
             {"subset", eval::to_string(subset)},
             {"n_seeds", thresholds.size()},
             {"f1_mean", real(f.mean)},
             {"f1_std", real(f.sd)},
             {"auroc_mean", real(a.mean)},
             {"auroc_std", real(a.sd)},
             {"delta_hr_mean", real(d.mean)},
             {"delta_hr_std", real(d.sd)}};
    agg.update(hr_line[subset]);
    lines.push_back(agg);
    char row[256];
    std::snprintf(row, sizeof row, "%-10s %5zu %16s %16s %16s\n", eval::to_string(subset).c_str(),
                  hr_line[subset].value("n_questions", std::size_t{0}), cell_pm(f, 16).c_str(),
                  cell_pm(a, 16).c_str(), cell_pm(d, 16).c_str());
    table << row;
  }

  io::write_jsonl(artifact(c, "eval_report.jsonl"), lines);
  io::write_text(artifact(c, "eval_report.txt"), table.str());
  log << "[eval] " << lines.size() << " report lines\n";
}

void stage_analyze_terms(const RunConfig& c, std::ostream& log) {
  const auto labels = load_all<curation::LabeledBatch>(c, "labels.jsonl", Stage::curate);
  const auto local = load_all<suspicion::SuspicionBreakdown>(c, "suspicion.jsonl", Stage::score_local);
  std::unordered_map<std::string, const curation::LabeledBatch*> by_id;
  for (const auto& l : labels) by_id[l.question_id] = &l;

  std::vector<eval::TermRecord> records;
  for (const auto& s : local)
    if (const auto it = by_id.find(s.question_id); it != by_id.end())
      records.push_back(term_record(s, it->second->sample_labels));

  eval::TermAnalysisOptions o;
  o.standardize_per_question = c.standardize_terms;
  const auto cells = eval::analyze_terms(records, o);
  std::vector<json> out;
  for (const auto& cell : cells)
    out.push_back({{"term", eval::to_string(cell.term)},
                   {"subset", eval::to_string(cell.subset)},
                   {"p_value", cell.p_value ? json(*cell.p_value) : json()},
                   {"n_hallucinated", cell.n_hallucinated},
                   {"n_correct", cell.n_correct}});
  io::write_jsonl(artifact(c, "term_analysis.jsonl"), out);
  io::write_text(artifact(c, "term_table.txt"),
                 "One-sided Mann-Whitney p-values (hallucinated > correct)\n" +
                     eval::format_term_table(cells, o.subsets));
  log << "[analyze-terms] " << cells.size() << " cells over " << records.size() << " questions\n";
}

}  // namespace

void run_stage(const RunConfig& config, Stage stage, std::ostream& log) {
  switch (stage) {
    case Stage::curate: return stage_curate(config, log);
    case Stage::embed: return stage_embed(config, log);
    case Stage::reduce: return stage_reduce(config, log);
    case Stage::fit: return stage_fit(config, log);
    case Stage::score_global: return stage_score_global(config, log);
    case Stage::score_local: return stage_score_local(config, log);
    case Stage::tune: return stage_tune(config, log);
    case Stage::eval: return stage_eval(config, log);
    case Stage::analyze_terms: return stage_analyze_terms(config, log);
  }
}

int run_pipeline(const RunConfig& config, const std::vector<Stage>& stages, std::ostream& log) {
  try {
    config.validate();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  try {
    fs::create_directories(config.out_dir);
    std::vector<std::string> names;
    for (auto s : stages) names.push_back(to_string(s));
    io::write_text(config.out_dir / "run_manifest.json",
                   json{{"config", config.redacted()}, {"stages", names}}.dump(2) + "\n");
  } catch (const std::exception& e) {
    log << "cannot prepare " << config.out_dir.string() << ": " << e.what() << '\n';
    return kStageFailure;
  }
  for (auto stage : stages) {
    try {
      run_stage(config, stage, log);
    } catch (const MissingInput& e) {
      log << "[" << to_string(stage) << "] " << e.what() << '\n';
      return kMissingInput;
    } catch (const ConfigError& e) {
      log << "[" << to_string(stage) << "] config error: " << e.what() << '\n';
      return kConfigError;
    } catch (const std::exception& e) {
      log << "[" << to_string(stage) << "] failed: " << e.what() << '\n';
      return kStageFailure;
    }
  }
  return kOk;
}

}  // namespace geouq::pipeline
