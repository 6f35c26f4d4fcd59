#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace geouq::eval {

inline constexpr double kValidationFraction = 0.10;

struct EvalReport {
  double tau = 0.0;
  double f1 = 0.0;
  std::optional<double> auroc;  // absent when the test split has one class
  double baseline_hr = 0.0;
  double bon_hr = 0.0;
  double delta_hr = 0.0;  // baseline_hr - bon_hr
  std::size_t n_questions = 0;
  std::uint64_t split_seed = 0;
};

enum class Subset { low, mid_low, mid_high, high, all_valid, mid_valid };

/// Interval on the sampled hallucination rate r.
struct SubsetSpec {
  Subset name = Subset::all_valid;
  double lower = 0.0;
  double upper = 1.0;
  bool lower_open = true;
  bool upper_open = true;

  bool contains(double r) const;
};

SubsetSpec subset_spec(Subset s);
std::string to_string(Subset s);
Subset subset_from_string(std::string_view s);
/// The four granular rate bands, low to high.
std::vector<Subset> rate_bands();

/// 2TP / (2TP + FP + FN), 0 when the denominator is 0.
double f1_score(const std::vector<int>& pred, const std::vector<int>& truth);

/// P(score of a random positive > score of a random negative), ties 1/2.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ThresholdChoice {
  double tau = 0.0;
  double validation_f1 = 0.0;
  std::vector<std::size_t> validation;  // indices into the inputs
  std::vector<std::size_t> test;
  std::uint64_t seed_used = 0;
};

/// F1-maximizing threshold for the rule "score > tau => hallucination" over
/// midpoints of the sorted distinct validation scores plus -inf/+inf.
/// Ties go to the smallest tau.
double best_threshold(const std::vector<double>& scores, const std::vector<int>& labels,
                      double* best_f1 = nullptr);

/// Draws a validation split of `val_fraction` and tunes tau on it. When a
/// split lacks a class it is redrawn with the next seed, up to five times.
ThresholdChoice tune_threshold(const std::vector<double>& scores, const std::vector<int>& labels,
                               double val_fraction = kValidationFraction, std::uint64_t seed = 0);

struct HallucinationRates {
  double baseline_hr = 0.0;
  double bon_hr = 0.0;
  double delta_hr = 0.0;
};

HallucinationRates delta_hr(const std::vector<int>& default_labels,
                            const std::vector<int>& selected_labels);

/// Question indices whose sampled hallucination rate lies in the subset.
std::vector<std::size_t> split_by_hallucination_rate(
    const std::vector<std::vector<int>>& sample_labels_per_question, const SubsetSpec& spec);

/// One-sided test of "hi is stochastically greater than lo": exact
/// permutation distribution for n1 + n2 <= 12, otherwise the tie-corrected
/// normal approximation with continuity correction. p in (0, 1].
double mann_whitney_one_sided(const std::vector<double>& hi, const std::vector<double>& lo);
double mann_whitney_exact(const std::vector<double>& hi, const std::vector<double>& lo);
double mann_whitney_asymptotic(const std::vector<double>& hi, const std::vector<double>& lo);
/// U statistic of `hi` (midranks for ties).
double mann_whitney_u(const std::vector<double>& hi, const std::vector<double>& lo);

// ---------------------------------------------------------------------------
// Term analysis

enum class Term { distance_consensus, local_density, usage_rarity, voronoi, geometric_entropy, nearest_archetype };

std::string to_string(Term t);
std::vector<Term> all_terms();

/// Per-response term values and labels for one question.
struct TermRecord {
  std::string question_id;
  std::vector<int> sample_labels;
  /// Indexed by Term; an empty vector means the term was not computed.
  std::vector<std::vector<double>> values;
};

struct TermCell {
  Term term;
  Subset subset;
  std::optional<double> p_value;  // absent when a class is empty
  std::size_t n_hallucinated = 0;
  std::size_t n_correct = 0;
};

struct TermAnalysisOptions {
  /// z-score each term within its question before pooling.
  bool standardize_per_question = false;
  std::vector<Subset> subsets = rate_bands();
};

/// Pools per-response values by label within each subset and tests whether
/// hallucinated responses score higher, for every term.
std::vector<TermCell> analyze_terms(const std::vector<TermRecord>& records,
                                    const TermAnalysisOptions& options = {});

/// Plain-text table: one row per term, one column per subset.
std::string format_term_table(const std::vector<TermCell>& cells, const std::vector<Subset>& subsets);

std::string format_p_value(std::optional<double> p);

}  // namespace geouq::eval
