#pragma once

// Synthetic embedding corpora with known labels.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "geouq/embedding_prep.hpp"
#include "geouq/suspicion.hpp"

namespace synth {

namespace prep = geouq::prep;
namespace suspicion = geouq::suspicion;

enum class Layout {
  /// Correct answers cluster tightly, hallucinations scatter.
  correct_cluster,
  /// Whichever label holds the majority clusters; the minority scatters.
  majority_cluster,
};

struct CorpusOptions {
  int n = 20;
  int dim = 64;
  double sigma_tight = 0.05;
  double sigma_loose = 1.0;
  Layout layout = Layout::correct_cluster;
};

struct Question {
  prep::EmbeddingBatch batch;  // default_row is set
  std::vector<int> sample_labels;
  int default_label = 0;
};

/// One question whose samples hallucinate at exactly round(rate * n) (kept in
/// 1..n-1), and whose default hallucinates with probability `rate`.
Question make_question(const std::string& id, double rate, const CorpusOptions& o, std::uint64_t seed);

/// `count` questions with rates drawn uniformly from (lo, hi).
std::vector<Question> make_corpus(int count, double lo, double hi, const CorpusOptions& o,
                                  std::uint64_t seed);

struct Scored {
  Question question;
  suspicion::SuspicionBreakdown breakdown;
};

/// reduce -> fit -> select_best_of_n, in parallel over questions.
std::vector<Scored> score(const std::vector<Question>& corpus, int pca_dim, int K, int aa_steps,
                          std::uint64_t seed);

}  // namespace synth
