#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "geouq/curation.hpp"
#include "geouq/evaluation.hpp"
#include "geouq/llm_clients.hpp"
#include "geouq/suspicion.hpp"

namespace geouq::pipeline {

enum class Stage { curate, embed, reduce, fit, score_global, score_local, tune, eval, analyze_terms };

std::string to_string(Stage s);  // CLI spelling, e.g. "score-global"
Stage stage_from_string(std::string_view s);
std::vector<Stage> all_stages();
/// Inclusive slice of the canonical order.
std::vector<Stage> stage_range(Stage from, Stage to);

enum ExitCode : int { kOk = 0, kConfigError = 2, kStageFailure = 3, kMissingInput = 4 };

struct RunConfig {
  int pca_dim = 15;
  int K = 16;
  int aa_steps = 2000;
  int n_samples = 20;
  int k_neighbors = 5;
  double epsilon = 1e-12;
  double val_fraction = 0.10;
  /// Threshold-split seeds; each yields one row of the report.
  std::vector<std::uint64_t> seeds{0, 1, 2};
  double default_temperature = 0.0;
  double sample_temperature = 1.0;
  double rouge_threshold = 0.3;
  int max_tokens = 256;

  std::uint64_t seed = 0;
  int workers = 1;
  bool mock = false;
  int mock_embedding_dim = 256;

  std::filesystem::path questions = "data/synthetic_questions.jsonl";
  std::filesystem::path out_dir = "runs/default";

  curation::LabelSource label_mode = curation::LabelSource::rouge;
  bool with_voronoi = true;
  int voronoi_dim = 3;
  bool fuse_extended = false;
  bool standardize_terms = false;
  /// Restricts eval to one subset; all six when unset.
  std::optional<eval::Subset> subset;

  clients::ClientConfig llm;
  clients::ClientConfig embed;
  clients::ClientConfig judge;

  /// ConfigError on the first bad value.
  void validate() const;
  /// Everything except API keys.
  nlohmann::json redacted() const;
};

/// Default endpoints and model names; keys come from the environment.
RunConfig default_config();

/// GEOUQ_LLM_BASE/KEY (generation and judge) and GEOUQ_EMBED_BASE/KEY.
void apply_environment(RunConfig& config);

/// Mock answer keys from a corpus: reference answers plus a
/// "mock_rate:<r>" tag for the hallucination rate (0.3 when absent).
clients::MockOptions mock_options_for(const std::vector<curation::QueryRecord>& corpus,
                                      std::uint64_t seed, int embedding_dim);

/// Term values of one question in the orientation "higher = more suspicious".
/// Geometric entropy enters negated, so concentration on one archetype counts
/// as suspicious like the nearest-archetype distance does.
eval::TermRecord term_record(const suspicion::SuspicionBreakdown& s, const std::vector<int>& sample_labels);

/// Runs one stage; throws geouq errors.
void run_stage(const RunConfig& config, Stage stage, std::ostream& log);

/// Runs stages in order and maps failures to exit codes. Stages already
/// completed keep their outputs.
int run_pipeline(const RunConfig& config, const std::vector<Stage>& stages, std::ostream& log);

/// Index-parallel loop; results land in caller-owned slots, so output order
/// never depends on scheduling. Rethrows the first failure by index.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

}  // namespace geouq::pipeline
