#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <vector>

#include "geouq/archetypes.hpp"
#include "geouq/curation.hpp"
#include "geouq/embedding_prep.hpp"
#include "geouq/geometry.hpp"
#include "geouq/suspicion.hpp"

namespace geouq::io {

using nlohmann::json;

/// One JSON value per non-blank line. A torn final line (no trailing newline
/// and unparseable) is skipped when tolerated, otherwise MalformedResponse.
std::vector<json> read_jsonl(const std::filesystem::path& path, bool tolerate_torn_tail = false);

/// Writes via a sibling temp file and rename, so readers never see a partial file.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines);

/// Atomic write of arbitrary text.
void write_text(const std::filesystem::path& path, const std::string& text);

json matrix_to_json(const Eigen::MatrixXd& m);  // list of rows
Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols_if_empty = 0);
json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);

}  // namespace geouq::io

namespace geouq::curation {
void to_json(nlohmann::json& j, const QueryRecord& r);
void from_json(const nlohmann::json& j, QueryRecord& r);
void to_json(nlohmann::json& j, const ResponseBatch& r);
void from_json(const nlohmann::json& j, ResponseBatch& r);
void to_json(nlohmann::json& j, const LabeledBatch& r);
void from_json(const nlohmann::json& j, LabeledBatch& r);
}  // namespace geouq::curation

namespace geouq::prep {
void to_json(nlohmann::json& j, const EmbeddingBatch& b);
void from_json(const nlohmann::json& j, EmbeddingBatch& b);
void to_json(nlohmann::json& j, const ReducedBatch& b);
void from_json(const nlohmann::json& j, ReducedBatch& b);
}  // namespace geouq::prep

namespace geouq::aa {
/// question_id travels alongside; the model itself has no id.
nlohmann::json model_to_json(const std::string& question_id, const ArchetypeModel& m);
ArchetypeModel model_from_json(const nlohmann::json& j);
}  // namespace geouq::aa

namespace geouq::geometry {
void to_json(nlohmann::json& j, const GlobalScore& s);
void from_json(const nlohmann::json& j, GlobalScore& s);
}  // namespace geouq::geometry

namespace geouq::suspicion {
void to_json(nlohmann::json& j, const SuspicionBreakdown& s);
void from_json(const nlohmann::json& j, SuspicionBreakdown& s);
}  // namespace geouq::suspicion
