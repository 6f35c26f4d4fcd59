#include "geouq/jsonl.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "geouq/error.hpp"

namespace geouq::io {

std::vector<json> read_jsonl(const std::filesystem::path& path, bool tolerate_torn_tail) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  std::vector<json> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool last = nl == std::string::npos;
    const std::string line = text.substr(pos, last ? std::string::npos : nl - pos);
    pos = last ? text.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      if (last && tolerate_torn_tail) break;
      throw MalformedResponse(path.string() + ":" + std::to_string(line_no) + ": not valid JSON");
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StageError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw StageError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines) {
  std::string text;
  for (const auto& j : lines) {
    text += j.dump();
    text += '\n';
  }
  write_text(path, text);
}

namespace {

// JSON has no NaN/Inf; encode them as strings so artifacts round-trip.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double to_double(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  throw MalformedResponse("expected a number, got " + s);
}

}  // namespace

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number(m(i, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols_if_empty) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw MalformedResponse("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = to_double(row[static_cast<std::size_t>(c)]);
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = to_double(j[static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace geouq::io

namespace geouq::curation {

void to_json(nlohmann::json& j, const QueryRecord& r) {
  j = {{"id", r.id}, {"question", r.question}, {"tags", r.tags}};
  j["reference_answer"] = r.reference_answer ? nlohmann::json(*r.reference_answer) : nlohmann::json();
}

void from_json(const nlohmann::json& j, QueryRecord& r) {
  j.at("id").get_to(r.id);
  j.at("question").get_to(r.question);
  r.reference_answer.reset();
  if (auto it = j.find("reference_answer"); it != j.end() && !it->is_null())
    r.reference_answer = it->get<std::string>();
  r.tags = j.value("tags", std::vector<std::string>{});
}

void to_json(nlohmann::json& j, const ResponseBatch& r) {
  j = {{"question_id", r.question_id},
       {"default_response", r.default_response},
       {"samples", r.samples},
       {"default_temperature", r.default_temperature},
       {"sample_temperature", r.sample_temperature}};
}

void from_json(const nlohmann::json& j, ResponseBatch& r) {
  j.at("question_id").get_to(r.question_id);
  j.at("default_response").get_to(r.default_response);
  j.at("samples").get_to(r.samples);
  r.default_temperature = j.value("default_temperature", 0.0);
  r.sample_temperature = j.value("sample_temperature", 1.0);
}

void to_json(nlohmann::json& j, const LabeledBatch& r) {
  j = {{"question_id", r.question_id},
       {"default_label", r.default_label},
       {"sample_labels", r.sample_labels},
       {"label_source", to_string(r.label_source)}};
  j["rouge_scores"] = r.rouge_scores ? nlohmann::json(*r.rouge_scores) : nlohmann::json();
}

void from_json(const nlohmann::json& j, LabeledBatch& r) {
  j.at("question_id").get_to(r.question_id);
  j.at("default_label").get_to(r.default_label);
  j.at("sample_labels").get_to(r.sample_labels);
  r.label_source = label_source_from_string(j.at("label_source").get<std::string>());
  r.rouge_scores.reset();
  if (auto it = j.find("rouge_scores"); it != j.end() && !it->is_null())
    r.rouge_scores = it->get<std::vector<double>>();
}

}  // namespace geouq::curation

namespace geouq::prep {

void to_json(nlohmann::json& j, const EmbeddingBatch& b) {
  j = {{"question_id", b.question_id}, {"rows", io::matrix_to_json(b.rows)}};
  j["default_row"] = b.default_row ? io::vector_to_json(*b.default_row) : nlohmann::json();
}

void from_json(const nlohmann::json& j, EmbeddingBatch& b) {
  j.at("question_id").get_to(b.question_id);
  b.rows = io::matrix_from_json(j.at("rows"));
  b.default_row.reset();
  if (auto it = j.find("default_row"); it != j.end() && !it->is_null())
    b.default_row = io::vector_from_json(*it);
}

void to_json(nlohmann::json& j, const ReducedBatch& b) {
  j = {{"question_id", b.question_id},
       {"X", io::matrix_to_json(b.X)},
       {"pca_basis", io::matrix_to_json(b.pca_basis)},
       {"pca_mean", io::vector_to_json(b.pca_mean)},
       {"explained_variance", b.explained_variance},
       {"degenerate", b.degenerate}};
  j["default_x"] = b.default_x ? io::vector_to_json(*b.default_x) : nlohmann::json();
}

void from_json(const nlohmann::json& j, ReducedBatch& b) {
  j.at("question_id").get_to(b.question_id);
  b.pca_mean = io::vector_from_json(j.at("pca_mean"));
  b.pca_basis = io::matrix_from_json(j.at("pca_basis"), b.pca_mean.size());
  b.X = io::matrix_from_json(j.at("X"), b.pca_basis.rows());
  b.explained_variance = j.value("explained_variance", std::vector<double>{});
  b.degenerate = j.value("degenerate", false);
  b.default_x.reset();
  if (auto it = j.find("default_x"); it != j.end() && !it->is_null())
    b.default_x = io::vector_from_json(*it);
}

}  // namespace geouq::prep

namespace geouq::aa {

nlohmann::json model_to_json(const std::string& question_id, const ArchetypeModel& m) {
  return {{"question_id", question_id},
          {"A", io::matrix_to_json(m.A)},
          {"B", io::matrix_to_json(m.B)},
          {"Z", io::matrix_to_json(m.Z)},
          {"final_objective", m.final_objective()},
          {"iterations", m.iterations}};
}

ArchetypeModel model_from_json(const nlohmann::json& j) {
  ArchetypeModel m;
  m.A = io::matrix_from_json(j.at("A"));
  m.B = io::matrix_from_json(j.at("B"), m.A.rows());
  m.Z = io::matrix_from_json(j.at("Z"));
  if (m.Z.rows() == 0) m.Z.resize(m.B.rows(), 0);
  m.objective_trace = {j.at("final_objective").get<double>()};
  m.iterations = j.at("iterations").get<int>();
  return m;
}

}  // namespace geouq::aa

namespace geouq::geometry {

void to_json(nlohmann::json& j, const GlobalScore& s) {
  j = {{"question_id", s.question_id},
       {"volume", s.volume},
       {"H_G", s.H_G},
       {"epsilon", s.epsilon},
       {"degenerate", s.degenerate}};
}

void from_json(const nlohmann::json& j, GlobalScore& s) {
  j.at("question_id").get_to(s.question_id);
  j.at("volume").get_to(s.volume);
  j.at("H_G").get_to(s.H_G);
  s.epsilon = j.value("epsilon", kVolumeEpsilon);
  s.degenerate = j.value("degenerate", false);
}

}  // namespace geouq::geometry

namespace geouq::suspicion {

namespace {

nlohmann::json optional_list(const std::optional<std::vector<double>>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

std::optional<std::vector<double>> read_optional_list(const nlohmann::json& j, const char* key) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) return it->get<std::vector<double>>();
  return std::nullopt;
}

}  // namespace

void to_json(nlohmann::json& j, const SuspicionBreakdown& s) {
  j = {{"question_id", s.question_id},
       {"L", s.local_density},
       {"D", s.dist_consensus},
       {"U", s.usage_rarity},
       {"H_L", optional_list(s.geo_entropy)},
       {"D_A", optional_list(s.dist_nearest_archetype)},
       {"voronoi", optional_list(s.voronoi)},
       {"ranks", {{"L", s.ranks[0]}, {"D", s.ranks[1]}, {"U", s.ranks[2]}}},
       {"S", s.S},
       {"selected_index", s.selected_index},
       {"k_neighbors", s.k_neighbors},
       {"all_ties", s.all_ties}};
  if (s.default_scores)
    j["default_scores"] = {{"L", s.default_scores->L}, {"D", s.default_scores->D}, {"U", s.default_scores->U}};
  else
    j["default_scores"] = nullptr;
}

void from_json(const nlohmann::json& j, SuspicionBreakdown& s) {
  j.at("question_id").get_to(s.question_id);
  j.at("L").get_to(s.local_density);
  j.at("D").get_to(s.dist_consensus);
  j.at("U").get_to(s.usage_rarity);
  s.geo_entropy = read_optional_list(j, "H_L");
  s.dist_nearest_archetype = read_optional_list(j, "D_A");
  s.voronoi = read_optional_list(j, "voronoi");
  const auto& r = j.at("ranks");
  r.at("L").get_to(s.ranks[0]);
  r.at("D").get_to(s.ranks[1]);
  r.at("U").get_to(s.ranks[2]);
  j.at("S").get_to(s.S);
  j.at("selected_index").get_to(s.selected_index);
  s.k_neighbors = j.value("k_neighbors", kDefaultNeighbours);
  s.all_ties = j.value("all_ties", false);
  s.default_scores.reset();
  if (auto it = j.find("default_scores"); it != j.end() && !it->is_null())
    s.default_scores = DefaultScores{it->at("L").get<double>(), it->at("D").get<double>(),
                                     it->at("U").get<double>()};
}

}  // namespace geouq::suspicion
