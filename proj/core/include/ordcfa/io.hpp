#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ordcfa/likelihood.hpp"
#include "ordcfa/model.hpp"
#include "ordcfa/score.hpp"
#include "ordcfa/simulate.hpp"

namespace ordcfa {

std::string read_text_file(const std::filesystem::path& path);
/// 64-bit FNV-1a digest as 16 hex digits.
std::string content_digest(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

/// One line per factor, `factor: item item=K ...`; `#` starts a comment.
/// A category count of 0 means "infer from the data".
struct ModelDescription {
  struct Item {
    std::string name;
    int categories = 0;
  };
  struct Factor {
    std::string name;
    std::vector<Item> items;
  };
  std::vector<Factor> factors;

  std::vector<std::string> item_names() const;
};

/// Throws SpecError with a line number on malformed input.
ModelDescription parse_model_description(std::string_view text);
ModelDescription read_model_description(const std::filesystem::path& path);

struct CsvOptions {
  /// Map each column's distinct labels, in ascending order (numeric when
  /// every label is a number), to 1..L.
  bool recode = false;
};

struct CsvTable {
  std::vector<std::string> columns;
  Eigen::MatrixXi codes;
  /// Rows read and rows removed for a missing cell.
  int rows_read = 0;
  int rows_dropped = 0;
  /// Per column, the original label of each code when recoded.
  std::vector<std::vector<std::string>> labels;
};

/// Header row required; comma separated; an empty cell is missing and the
/// row is removed. `wanted` selects and orders columns by name (empty =
/// all). Non-integer codes are errors unless recoding; errors carry the
/// 1-based line number.
CsvTable read_csv_codes(std::istream& in, const std::vector<std::string>& wanted = {},
                        const CsvOptions& options = {});
CsvTable read_csv_codes(const std::filesystem::path& path,
                        const std::vector<std::string>& wanted = {},
                        const CsvOptions& options = {});

/// Category counts come from the description, or the largest observed code
/// (at least 2) when not given.
ModelSpec resolve_model(const ModelDescription& desc, const CsvTable& table);

struct LoadedData {
  ModelSpec spec;
  ResponseMatrix responses;
  int rows_read = 0;
  int rows_dropped = 0;
};

LoadedData load_data(const std::filesystem::path& csv,
                     const std::filesystem::path& model,
                     const CsvOptions& options = {});
/// Reads the columns of an existing spec from a CSV.
ResponseMatrix load_responses(const std::filesystem::path& csv,
                              const ModelSpec& spec,
                              const CsvOptions& options = {},
                              int* rows_dropped = nullptr);

/// Inverse of to_string(ParamAddress).
ParamAddress parse_param_address(std::string_view text);

struct ParamsFile {
  ModelSpec spec;
  ParameterSet params;
  Regime regime = Regime::Traditional;
  /// Everything else stored in the file (fit report, transform audit, ...).
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

nlohmann::ordered_json params_to_json(const ParameterSet& params,
                                      const ModelSpec& spec, Regime regime);
/// Throws SpecError when the regime tag or fingerprint is missing, the
/// fingerprint does not match the embedded model, or values are malformed.
ParamsFile params_from_json(const nlohmann::ordered_json& j);

void write_params(const std::filesystem::path& path, const ParameterSet& params,
                  const ModelSpec& spec, Regime regime,
                  const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());
ParamsFile read_params(const std::filesystem::path& path);

nlohmann::ordered_json transform_to_json(const TransformSet& t);
TransformSet transform_from_json(const nlohmann::ordered_json& j);

/// JSON study description: seed, reps, sample_size, nodes, threads,
/// factor_correlation and a `cells` array of {name, indicators, loading,
/// categories, distribution, prop_sparse, factors}.
StudyConfig parse_study_config(std::string_view text);
StudyConfig read_study_config(const std::filesystem::path& path);

/// Header row,average,eta[_<factor>]...,flag[_<factor>]...; values written
/// in shortest round-trip form so a re-read reproduces them exactly.
void write_scores_csv(std::ostream& out, const std::vector<RowScore>& scores,
                      const ModelSpec& spec);
std::vector<RowScore> read_scores_csv(std::istream& in, int factors);

}  // namespace ordcfa
