// geo-uq: runs the pipeline stage by stage or end to end.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "geouq/error.hpp"
#include "geouq/pipeline.hpp"

namespace {

using geouq::pipeline::RunConfig;
using geouq::pipeline::Stage;

void add_client_options(CLI::App& app, const std::string& prefix, geouq::clients::ClientConfig& cfg,
                        const std::string& what) {
  const std::string g = prefix + " client";
  app.add_option("--" + prefix + ".base_url", cfg.base_url, what + " endpoint (OpenAI-compatible)")->group(g);
  app.add_option("--" + prefix + ".model", cfg.model_name, what + " model name")->group(g);
  app.add_option("--" + prefix + ".timeout", cfg.timeout_s, "request timeout, seconds")->group(g);
  app.add_option("--" + prefix + ".max_retries", cfg.max_retries, "retries on 429/5xx")->group(g);
  app.add_option("--" + prefix + ".backoff_base", cfg.backoff_base_s, "first retry delay, seconds; doubles")
      ->group(g);
  app.add_option("--" + prefix + ".max_concurrent", cfg.max_concurrent, "in-flight request cap")->group(g);
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg = geouq::pipeline::default_config();

  CLI::App app{"geo-uq: archetype-geometry uncertainty scores and Best-of-N selection for LLM responses.\n"
               "Every option below is also a key of the --config TOML file (sections [llm], [embed], [judge]\n"
               "hold client keys). API keys are read only from GEOUQ_LLM_KEY / GEOUQ_EMBED_KEY; base URLs\n"
               "may be overridden by GEOUQ_LLM_BASE / GEOUQ_EMBED_BASE.\n"
               "Exit codes: 0 success, 2 config error, 3 stage failure, 4 missing input.",
               "geo-uq"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML config file");
  app.require_subcommand(1, 1);

  const std::string g_model = "Model";
  app.add_option("--pca_dim", cfg.pca_dim, "PCA dimension d'")->group(g_model);
  app.add_option("--K", cfg.K, "number of archetypes (capped at d'+1 per batch)")->group(g_model);
  app.add_option("--aa_steps", cfg.aa_steps, "archetypal-analysis iterations")->group(g_model);
  app.add_option("--n_samples", cfg.n_samples, "sampled responses per question")->group(g_model);
  app.add_option("--k_neighbors", cfg.k_neighbors, "k of the local-density term")->group(g_model);
  app.add_option("--epsilon", cfg.epsilon, "volume floor inside log(V + epsilon)")->group(g_model);
  app.add_option("--val_fraction", cfg.val_fraction, "validation share for threshold tuning")->group(g_model);
  app.add_option("--seeds", cfg.seeds, "threshold-split seeds, one report row each")->group(g_model);
  std::vector<double> temperatures{cfg.default_temperature, cfg.sample_temperature};
  app.add_option("--temperatures", temperatures, "default and sampling temperatures")
      ->expected(2)
      ->group(g_model);
  app.add_option("--rouge_threshold", cfg.rouge_threshold, "ROUGE-L F1 below this labels a hallucination")
      ->group(g_model);
  app.add_option("--max_tokens", cfg.max_tokens, "completion length cap")->group(g_model);
  std::string label_mode = geouq::curation::to_string(cfg.label_mode);
  app.add_option("--label_mode", label_mode, "labeling: rouge or judge")
      ->check(CLI::IsMember({"rouge", "judge"}))
      ->group(g_model);
  app.add_option("--voronoi_dim", cfg.voronoi_dim, "Voronoi projection dimension (2 or 3)")->group(g_model);
  app.add_flag("--with_voronoi,!--no-voronoi", cfg.with_voronoi, "compute the Voronoi term")->group(g_model);
  app.add_flag("--fuse_extended", cfg.fuse_extended, "also fuse entropy, archetype distance and Voronoi ranks")
      ->group(g_model);
  app.add_flag("--standardize_terms", cfg.standardize_terms, "z-score terms per question before pooling")
      ->group(g_model);

  const std::string g_run = "Run";
  app.add_option("--seed", cfg.seed, "run seed")->group(g_run);
  app.add_option("--workers", cfg.workers, "worker threads per stage")->group(g_run);
  app.add_flag("--mock", cfg.mock, "offline deterministic mock clients")->group(g_run);
  app.add_option("--mock_embedding_dim", cfg.mock_embedding_dim, "mock embedding width")->group(g_run);
  app.add_option("--questions", cfg.questions, "questions.jsonl")->group(g_run);
  app.add_option("--out_dir", cfg.out_dir, "artifact directory")->group(g_run);
  std::string subset;
  app.add_option("--subset", subset, "evaluate one subset only (default: all)")
      ->check(CLI::IsMember({"low", "mid_low", "mid_high", "high", "all_valid", "mid_valid"}))
      ->group(g_run);
  std::string stage_from = "curate", stage_to = "analyze-terms";
  std::vector<std::string> stage_names;
  for (auto s : geouq::pipeline::all_stages()) stage_names.push_back(geouq::pipeline::to_string(s));
  app.add_option("--stage-from", stage_from, "first stage of `run`")->check(CLI::IsMember(stage_names))->group(g_run);
  app.add_option("--stage-to", stage_to, "last stage of `run`")->check(CLI::IsMember(stage_names))->group(g_run);

  add_client_options(app, "llm", cfg.llm, "generation");
  add_client_options(app, "embed", cfg.embed, "embedding");
  add_client_options(app, "judge", cfg.judge, "judge");

  std::optional<std::vector<Stage>> stages;
  auto single = [&](const char* name, const char* help) {
    app.add_subcommand(name, help)->fallthrough()->callback([&, name] {
      stages = std::vector<Stage>{geouq::pipeline::stage_from_string(name)};
    });
  };
  single("curate", "sample responses and label them");
  single("embed", "embed responses");
  single("reduce", "L2-normalize and PCA-reduce embeddings");
  single("fit", "fit archetypes per question");
  single("score-global", "geometric volume score per question");
  single("score-local", "suspicion terms and Best-of-N selection");
  single("tune", "tune the detection threshold");
  single("eval", "detection and selection report");
  single("analyze-terms", "per-term Mann-Whitney table");
  app.add_subcommand("run", "run a slice of the pipeline (all stages by default)")->fallthrough()->callback([&] {
    stages = geouq::pipeline::stage_range(geouq::pipeline::stage_from_string(stage_from),
                                          geouq::pipeline::stage_from_string(stage_to));
  });

  try {
    app.parse(argc, argv);
    cfg.default_temperature = temperatures.at(0);
    cfg.sample_temperature = temperatures.at(1);
    cfg.label_mode = geouq::curation::label_source_from_string(label_mode);
    if (!subset.empty()) cfg.subset = geouq::eval::subset_from_string(subset);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? geouq::pipeline::kOk : geouq::pipeline::kConfigError;
  } catch (const geouq::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return geouq::pipeline::kConfigError;
  }
  geouq::pipeline::apply_environment(cfg);
  return geouq::pipeline::run_pipeline(cfg, *stages, std::cerr);
}
