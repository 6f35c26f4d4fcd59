#include "geouq/evaluation.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <numeric>
#include <sstream>

#include "geouq/error.hpp"
#include "geouq/rng.hpp"

namespace geouq::eval {

bool SubsetSpec::contains(double r) const {
  const bool above = lower_open ? r > lower : r >= lower;
  const bool below = upper_open ? r < upper : r <= upper;
  return above && below;
}

SubsetSpec subset_spec(Subset s) {
  switch (s) {
    case Subset::low: return {s, 0.0, 0.25, true, false};
    case Subset::mid_low: return {s, 0.25, 0.50, true, false};
    case Subset::mid_high: return {s, 0.50, 0.75, true, false};
    case Subset::high: return {s, 0.75, 1.0, true, true};
    case Subset::all_valid: return {s, 0.0, 1.0, true, true};
    case Subset::mid_valid: return {s, 0.33, 0.67, true, true};
  }
  throw PreconditionError("unknown subset");
}

std::string to_string(Subset s) {
  switch (s) {
    case Subset::low: return "low";
    case Subset::mid_low: return "mid_low";
    case Subset::mid_high: return "mid_high";
    case Subset::high: return "high";
    case Subset::all_valid: return "all_valid";
    case Subset::mid_valid: return "mid_valid";
  }
  return "?";
}

Subset subset_from_string(std::string_view s) {
  for (Subset x : {Subset::low, Subset::mid_low, Subset::mid_high, Subset::high,
                   Subset::all_valid, Subset::mid_valid})
    if (to_string(x) == s) return x;
  throw PreconditionError("unknown subset: " + std::string(s));
}

std::vector<Subset> rate_bands() {
  return {Subset::low, Subset::mid_low, Subset::mid_high, Subset::high};
}

double f1_score(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) throw LengthMismatch("f1_score: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && truth[i]) ++tp;
    else if (pred[i]) ++fp;
    else if (truth[i]) ++fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw LengthMismatch("auroc: length mismatch");
  // Sort once; count, in units of half a pair, how often positives beat negatives.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t pos = 0, neg = 0, half_wins = 0, neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t grp_pos = 0, grp_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? grp_pos : grp_neg)++;
      ++j;
    }
    half_wins += grp_pos * (2 * neg_below + grp_neg);
    neg_below += grp_neg;
    pos += grp_pos;
    neg += grp_neg;
    i = j;
  }
  if (pos == 0 || neg == 0) throw SingleClass("auroc needs both classes");
  return static_cast<double>(half_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double best_threshold(const std::vector<double>& scores, const std::vector<int>& labels,
                      double* best_f1) {
  if (scores.size() != labels.size()) throw LengthMismatch("threshold: length mismatch");
  std::vector<double> distinct = scores;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> candidates{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i)
    candidates.push_back(0.5 * (distinct[i] + distinct[i + 1]));
  candidates.push_back(std::numeric_limits<double>::infinity());

  double tau = candidates.front();
  double f1_best = -1.0;
  std::vector<int> pred(scores.size());
  for (double c : candidates) {
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] > c ? 1 : 0;
    const double f = f1_score(pred, labels);
    if (f > f1_best) {
      f1_best = f;
      tau = c;
    }
  }
  if (best_f1) *best_f1 = f1_best;
  return tau;
}

ThresholdChoice tune_threshold(const std::vector<double>& scores, const std::vector<int>& labels,
                               double val_fraction, std::uint64_t seed) {
  if (scores.size() != labels.size()) throw LengthMismatch("tune_threshold: length mismatch");
  if (scores.empty()) throw EmptySet("tune_threshold: no data");
  if (!(val_fraction > 0.0 && val_fraction <= 1.0))
    throw PreconditionError("val_fraction must be in (0, 1]");

  const std::size_t n = scores.size();
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))), 1, n);

  for (int attempt = 0; attempt < 5; ++attempt) {
    ThresholdChoice out;
    out.seed_used = seed + static_cast<std::uint64_t>(attempt);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (n_val < n) Rng(out.seed_used).shuffle(idx.begin(), idx.end());
    out.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(out.validation.begin(), out.validation.end());
    std::sort(out.test.begin(), out.test.end());

    std::vector<double> vs;
    std::vector<int> vl;
    for (auto i : out.validation) {
      vs.push_back(scores[i]);
      vl.push_back(labels[i]);
    }
    const auto positives = std::count(vl.begin(), vl.end(), 1);
    if (positives == 0 || positives == static_cast<std::ptrdiff_t>(vl.size())) {
      if (n_val == n) break;  // redrawing cannot help
      continue;
    }
    out.tau = best_threshold(vs, vl, &out.validation_f1);
    return out;
  }
  throw SingleClassValidation("validation split holds a single class after 5 draws");
}

HallucinationRates delta_hr(const std::vector<int>& default_labels,
                            const std::vector<int>& selected_labels) {
  if (default_labels.size() != selected_labels.size())
    throw LengthMismatch("delta_hr: length mismatch");
  if (default_labels.empty()) throw EmptySet("delta_hr: no questions");
  const auto n = static_cast<double>(default_labels.size());
  HallucinationRates r;
  r.baseline_hr = std::accumulate(default_labels.begin(), default_labels.end(), 0) / n;
  r.bon_hr = std::accumulate(selected_labels.begin(), selected_labels.end(), 0) / n;
  r.delta_hr = r.baseline_hr - r.bon_hr;
  return r;
}

std::vector<std::size_t> split_by_hallucination_rate(
    const std::vector<std::vector<int>>& sample_labels_per_question, const SubsetSpec& spec) {
  std::vector<std::size_t> out;
  for (std::size_t q = 0; q < sample_labels_per_question.size(); ++q) {
    const auto& labels = sample_labels_per_question[q];
    if (labels.empty()) throw PreconditionError("question without sample labels");
    const double r = static_cast<double>(std::accumulate(labels.begin(), labels.end(), 0)) /
                     static_cast<double>(labels.size());
    if (spec.contains(r)) out.push_back(q);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> midranks(const std::vector<double>& pooled) {
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(pooled.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && pooled[order[j]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
    i = j;
  }
  return ranks;
}

void require_groups(const std::vector<double>& hi, const std::vector<double>& lo) {
  if (hi.empty() || lo.empty()) throw EmptySet("Mann-Whitney needs two non-empty groups");
}

double clamp_p(double p) { return std::clamp(p, DBL_MIN, 1.0); }

}  // namespace

double mann_whitney_u(const std::vector<double>& hi, const std::vector<double>& lo) {
  require_groups(hi, lo);
  std::vector<double> pooled = hi;
  pooled.insert(pooled.end(), lo.begin(), lo.end());
  const auto ranks = midranks(pooled);
  const double r1 = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(hi.size()), 0.0);
  const auto n1 = static_cast<double>(hi.size());
  return r1 - n1 * (n1 + 1.0) / 2.0;
}

double mann_whitney_exact(const std::vector<double>& hi, const std::vector<double>& lo) {
  require_groups(hi, lo);
  const std::size_t n1 = hi.size();
  const std::size_t N = n1 + lo.size();
  if (N > 20) throw PreconditionError("exact Mann-Whitney limited to 20 observations");
  std::vector<double> pooled = hi;
  pooled.insert(pooled.end(), lo.begin(), lo.end());
  const auto ranks = midranks(pooled);
  const double observed =
      std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(n1), 0.0);

  std::uint64_t total = 0, extreme = 0;
  for (std::uint32_t mask = 0; mask < (1u << N); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != n1) continue;
    double r = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      if (mask & (1u << i)) r += ranks[i];
    ++total;
    if (r >= observed - 1e-9) ++extreme;
  }
  return clamp_p(static_cast<double>(extreme) / static_cast<double>(total));
}

double mann_whitney_asymptotic(const std::vector<double>& hi, const std::vector<double>& lo) {
  require_groups(hi, lo);
  const auto n1 = static_cast<double>(hi.size());
  const auto n2 = static_cast<double>(lo.size());
  const double N = n1 + n2;
  const double u = mann_whitney_u(hi, lo);

  std::vector<double> pooled = hi;
  pooled.insert(pooled.end(), lo.begin(), lo.end());
  std::sort(pooled.begin(), pooled.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    const auto t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double var = n1 * n2 / 12.0 * ((N + 1.0) - tie_term / (N * (N - 1.0)));
  if (!(var > 0.0)) return 1.0;
  const double z = (u - n1 * n2 / 2.0 - 0.5) / std::sqrt(var);
  return clamp_p(0.5 * std::erfc(z / std::sqrt(2.0)));
}

double mann_whitney_one_sided(const std::vector<double>& hi, const std::vector<double>& lo) {
  require_groups(hi, lo);
  return hi.size() + lo.size() <= 12 ? mann_whitney_exact(hi, lo) : mann_whitney_asymptotic(hi, lo);
}

// ---------------------------------------------------------------------------

std::string to_string(Term t) {
  switch (t) {
    case Term::distance_consensus: return "Distance Consensus";
    case Term::local_density: return "Local Density";
    case Term::usage_rarity: return "Usage Rarity";
    case Term::voronoi: return "Voronoi Volume";
    case Term::geometric_entropy: return "Geometric Entropy";
    case Term::nearest_archetype: return "Distance Nearest Archetype";
  }
  return "?";
}

std::vector<Term> all_terms() {
  return {Term::distance_consensus, Term::local_density, Term::usage_rarity,
          Term::voronoi,            Term::geometric_entropy, Term::nearest_archetype};
}

namespace {

std::vector<double> standardized(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  std::vector<double> out(v.size(), 0.0);
  if (sd > 0.0)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
  return out;
}

}  // namespace

std::vector<TermCell> analyze_terms(const std::vector<TermRecord>& records,
                                    const TermAnalysisOptions& options) {
  std::vector<const TermRecord*> mixed;
  std::vector<std::vector<int>> labels;
  for (const auto& r : records) {
    const auto pos = std::count(r.sample_labels.begin(), r.sample_labels.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(r.sample_labels.size())) continue;
    mixed.push_back(&r);
    labels.push_back(r.sample_labels);
  }

  std::vector<std::future<TermCell>> jobs;
  for (Subset subset : options.subsets) {
    const auto members = labels.empty() ? std::vector<std::size_t>{}
                                        : split_by_hallucination_rate(labels, subset_spec(subset));
    for (Term term : all_terms()) {
      jobs.push_back(std::async(std::launch::async, [&, members, subset, term] {
        TermCell cell{term, subset, std::nullopt, 0, 0};
        std::vector<double> hi, lo;
        for (auto q : members) {
          const TermRecord& r = *mixed[q];
          const auto t = static_cast<std::size_t>(term);
          if (t >= r.values.size() || r.values[t].size() != r.sample_labels.size()) continue;
          const auto vals = options.standardize_per_question ? standardized(r.values[t]) : r.values[t];
          for (std::size_t i = 0; i < vals.size(); ++i) (r.sample_labels[i] ? hi : lo).push_back(vals[i]);
        }
        cell.n_hallucinated = hi.size();
        cell.n_correct = lo.size();
        if (!hi.empty() && !lo.empty()) cell.p_value = mann_whitney_one_sided(hi, lo);
        return cell;
      }));
    }
  }
  std::vector<TermCell> cells;
  for (auto& j : jobs) cells.push_back(j.get());
  return cells;
}

std::string format_p_value(std::optional<double> p) {
  if (!p) return "n/a";
  char buf[32];
  if (*p < 1e-100) return "< 1e-100";
  if (*p >= 0.9995) return "1.000";
  if (*p >= 1e-3) {
    std::snprintf(buf, sizeof buf, "%.4f", *p);
  } else {
    std::snprintf(buf, sizeof buf, "%.2e", *p);
  }
  return buf;
}

std::string format_term_table(const std::vector<TermCell>& cells, const std::vector<Subset>& subsets) {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-28s", "Uncertainty Metric");
  out << buf;
  for (Subset s : subsets) {
    std::snprintf(buf, sizeof buf, "%12s", to_string(s).c_str());
    out << buf;
  }
  out << '\n';
  for (Term t : all_terms()) {
    std::snprintf(buf, sizeof buf, "%-28s", to_string(t).c_str());
    out << buf;
    for (Subset s : subsets) {
      std::optional<double> p;
      for (const auto& c : cells)
        if (c.term == t && c.subset == s) p = c.p_value;
      std::snprintf(buf, sizeof buf, "%12s", format_p_value(p).c_str());
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace geouq::eval
