#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cftk/tensor.hpp"

namespace cftk {

enum class TaskKind { kRegression, kClassification };
enum class ColumnKind { kContinuous, kCategorical, kBinaryTarget, kContinuousTarget, kSensitive };

std::string to_string(TaskKind kind);
std::string to_string(ColumnKind kind);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kContinuous;
  // Allowed labels for categorical and sensitive columns. Empty categorical
  // lists are filled from the data (sorted distinct labels).
  std::vector<std::string> categories;
  // Labels mapped to 1 for a binary target; everything else in `negative`.
  std::vector<std::string> positive;
  std::vector<std::string> negative;
};

struct Schema {
  std::string name;
  std::vector<ColumnSpec> columns;
  bool standardize_target = true;
  std::vector<std::string> missing_tokens{"", "?", "NA", "NaN"};

  // Throws ContractError unless there is exactly one sensitive column with
  // >= 2 categories and exactly one target column.
  void validate() const;
  TaskKind task() const;
  const ColumnSpec& sensitive() const;
  const ColumnSpec& target() const;
  std::size_t num_sensitive() const { return sensitive().categories.size(); }
  // Stable identity used to match checkpoints against datasets.
  std::string fingerprint() const;
};

Schema schema_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Schema& schema);
Schema load_schema(const std::filesystem::path& path);

// One source column's slice of the encoded feature matrix.
struct FeatureBlock {
  std::string column;
  ColumnKind kind;  // kContinuous or kCategorical
  std::size_t offset = 0;
  std::size_t width = 1;
  std::vector<std::string> labels;  // categorical only
};

// Per encoded feature column: standardized = (raw - mean) / std.
// Categorical columns carry mean 0, std 1.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> std;
  double target_mean = 0.0;
  double target_std = 1.0;
};

class TabularDataset {
 public:
  TabularDataset() = default;
  TabularDataset(Schema schema, std::vector<FeatureBlock> blocks, Tensor x, std::vector<std::size_t> s,
                 Tensor y, Standardization stats, std::vector<std::size_t> ids);

  const Schema& schema() const { return schema_; }
  TaskKind task() const { return schema_.task(); }
  const std::vector<FeatureBlock>& blocks() const { return blocks_; }
  std::size_t size() const { return s_.size(); }
  std::size_t num_features() const { return x_.cols(); }
  std::size_t num_sensitive() const { return schema_.num_sensitive(); }
  std::vector<std::string> feature_names() const;

  // Standardized features (n x d).
  const Tensor& x() const { return x_; }
  // Sensitive category indices.
  const std::vector<std::size_t>& s() const { return s_; }
  // One-hot sensitive attribute (n x |S|).
  Tensor s_onehot() const;
  // Target (n x 1); standardized for regression when the schema asks for it.
  const Tensor& y() const { return y_; }
  const Standardization& stats() const { return stats_; }
  // Stable individual identifiers (source row numbers or synthetic ids).
  const std::vector<std::size_t>& ids() const { return ids_; }

  std::size_t rows_dropped() const { return rows_dropped_; }
  void set_rows_dropped(std::size_t n) { rows_dropped_ = n; }

  // Features and target mapped back to source units.
  std::vector<double> raw_x() const;
  std::vector<double> raw_y() const;

  TabularDataset subset(const std::vector<std::size_t>& rows) const;
  // Same rows, re-standardized with `stats`.
  TabularDataset restandardize(const Standardization& stats) const;
  // Statistics fitted on this dataset's raw values.
  Standardization fit_standardization() const;

 private:
  Schema schema_;
  std::vector<FeatureBlock> blocks_;
  Tensor x_;
  std::vector<std::size_t> s_;
  Tensor y_;
  Standardization stats_;
  std::vector<std::size_t> ids_;
  std::size_t rows_dropped_ = 0;
};

std::vector<FeatureBlock> feature_blocks(const Schema& schema);

// Builds a dataset from raw-unit encoded rows. `raw_x` is n x d row-major.
TabularDataset make_dataset(const Schema& schema, std::vector<double> raw_x, std::vector<std::size_t> s,
                            std::vector<double> raw_y, std::vector<std::size_t> ids,
                            const std::optional<Standardization>& stats = std::nullopt);

TabularDataset parse_csv(std::istream& in, Schema schema, const std::string& source = "<stream>");
TabularDataset load_csv(const std::filesystem::path& path, const Schema& schema);
// Writes the dataset in source units using the schema's column names.
void save_csv(const TabularDataset& data, const std::filesystem::path& path);

// Minimal RFC-4180 field splitter (quotes, doubled quotes, surrounding spaces).
std::vector<std::string> split_csv_line(const std::string& line);

struct SplitBundle {
  TabularDataset train, validation, test;
  std::uint64_t seed = 0;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  // Positions into the source dataset, per partition.
  std::vector<std::size_t> train_rows, validation_rows, test_rows;
};

// Seeded shuffle then contiguous slicing. Validation and test receive
// floor(r * n) rows, train the remainder. All three partitions are
// re-standardized with statistics fitted on the training rows.
SplitBundle split(const TabularDataset& data, std::array<double, 3> ratios, std::uint64_t seed);

std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> ratios);

}  // namespace cftk
