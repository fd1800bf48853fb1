#include "cftk/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "cftk/error.hpp"
#include "cftk/io.hpp"
#include "cftk/rng.hpp"

namespace cftk {

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kRegression ? "regression" : "classification";
}

std::string to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kContinuous: return "continuous";
    case ColumnKind::kCategorical: return "categorical";
    case ColumnKind::kBinaryTarget: return "binary-target";
    case ColumnKind::kContinuousTarget: return "continuous-target";
    case ColumnKind::kSensitive: return "sensitive";
  }
  return "?";
}

namespace {

ColumnKind column_kind_from_string(const std::string& s) {
  for (auto k : {ColumnKind::kContinuous, ColumnKind::kCategorical, ColumnKind::kBinaryTarget,
                 ColumnKind::kContinuousTarget, ColumnKind::kSensitive}) {
    if (to_string(k) == s) return k;
  }
  throw LoadError("unknown column kind '" + s + "'");
}

bool is_target(ColumnKind k) {
  return k == ColumnKind::kBinaryTarget || k == ColumnKind::kContinuousTarget;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::size_t index_of(const std::vector<std::string>& labels, const std::string& label) {
  const auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? labels.size() : static_cast<std::size_t>(it - labels.begin());
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

// ---- Schema ------------------------------------------------------------

void Schema::validate() const {
  std::size_t sensitive_count = 0, target_count = 0;
  for (const auto& c : columns) {
    if (c.kind == ColumnKind::kSensitive) {
      ++sensitive_count;
      if (c.categories.size() < 2) {
        throw ContractError("schema '" + name + "': sensitive column '" + c.name +
                            "' needs at least 2 categories");
      }
    }
    if (is_target(c.kind)) ++target_count;
    if (c.kind == ColumnKind::kBinaryTarget && c.positive.empty()) {
      throw ContractError("schema '" + name + "': binary target '" + c.name +
                          "' lists no positive labels");
    }
  }
  if (sensitive_count != 1) {
    throw ContractError("schema '" + name + "' must have exactly one sensitive column, has " +
                        std::to_string(sensitive_count));
  }
  if (target_count != 1) {
    throw ContractError("schema '" + name + "' must have exactly one target column, has " +
                        std::to_string(target_count));
  }
}

TaskKind Schema::task() const {
  return target().kind == ColumnKind::kBinaryTarget ? TaskKind::kClassification
                                                    : TaskKind::kRegression;
}

const ColumnSpec& Schema::sensitive() const {
  for (const auto& c : columns)
    if (c.kind == ColumnKind::kSensitive) return c;
  throw ContractError("schema '" + name + "' has no sensitive column");
}

const ColumnSpec& Schema::target() const {
  for (const auto& c : columns)
    if (is_target(c.kind)) return c;
  throw ContractError("schema '" + name + "' has no target column");
}

std::string Schema::fingerprint() const {
  std::ostringstream os;
  os << name << '|' << (standardize_target ? "zy" : "ry");
  for (const auto& c : columns) {
    os << '|' << c.name << ':' << to_string(c.kind);
    for (const auto& l : c.categories) os << ',' << l;
  }
  return os.str();
}

Schema schema_from_json(const nlohmann::json& j) {
  try {
    Schema s;
    s.name = j.value("name", std::string("dataset"));
    s.standardize_target = j.value("standardize_target", true);
    if (j.contains("missing_tokens")) s.missing_tokens = j.at("missing_tokens").get<std::vector<std::string>>();
    for (const auto& c : j.at("columns")) {
      ColumnSpec col;
      col.name = c.at("name").get<std::string>();
      col.kind = column_kind_from_string(c.at("kind").get<std::string>());
      col.categories = c.value("categories", std::vector<std::string>{});
      col.positive = c.value("positive", std::vector<std::string>{});
      col.negative = c.value("negative", std::vector<std::string>{});
      s.columns.push_back(std::move(col));
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed schema: ") + e.what());
  }
}

nlohmann::json to_json(const Schema& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : s.columns) {
    nlohmann::json col{{"name", c.name}, {"kind", to_string(c.kind)}};
    if (!c.categories.empty()) col["categories"] = c.categories;
    if (!c.positive.empty()) col["positive"] = c.positive;
    if (!c.negative.empty()) col["negative"] = c.negative;
    cols.push_back(std::move(col));
  }
  return {{"name", s.name},
          {"standardize_target", s.standardize_target},
          {"missing_tokens", s.missing_tokens},
          {"columns", std::move(cols)}};
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open schema file " + path.string());
  try {
    return schema_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError("schema file " + path.string() + ": " + e.what());
  }
}

std::vector<FeatureBlock> feature_blocks(const Schema& schema) {
  std::vector<FeatureBlock> blocks;
  std::size_t offset = 0;
  for (const auto& c : schema.columns) {
    if (c.kind == ColumnKind::kContinuous) {
      blocks.push_back({c.name, c.kind, offset, 1, {}});
      offset += 1;
    } else if (c.kind == ColumnKind::kCategorical) {
      if (c.categories.empty()) {
        throw ContractError("categorical column '" + c.name + "' has no categories");
      }
      blocks.push_back({c.name, c.kind, offset, c.categories.size(), c.categories});
      offset += c.categories.size();
    }
  }
  if (offset == 0) throw ContractError("schema '" + schema.name + "' has no feature columns");
  return blocks;
}

// ---- TabularDataset ------------------------------------------------------

TabularDataset::TabularDataset(Schema schema, std::vector<FeatureBlock> blocks, Tensor x,
                               std::vector<std::size_t> s, Tensor y, Standardization stats,
                               std::vector<std::size_t> ids)
    : schema_(std::move(schema)),
      blocks_(std::move(blocks)),
      x_(std::move(x)),
      s_(std::move(s)),
      y_(std::move(y)),
      stats_(std::move(stats)),
      ids_(std::move(ids)) {
  const std::size_t n = s_.size();
  if (x_.rows() != n || y_.rows() != n || ids_.size() != n) {
    throw DimensionError("dataset components disagree on row count");
  }
  for (auto v : s_) {
    if (v >= schema_.num_sensitive()) throw ContractError("sensitive index out of range");
  }
}

std::vector<std::string> TabularDataset::feature_names() const {
  std::vector<std::string> names;
  for (const auto& b : blocks_) {
    if (b.kind == ColumnKind::kContinuous) {
      names.push_back(b.column);
    } else {
      for (const auto& l : b.labels) names.push_back(b.column + "=" + l);
    }
  }
  return names;
}

Tensor TabularDataset::s_onehot() const {
  const std::size_t k = num_sensitive();
  std::vector<double> v(size() * k, 0.0);
  for (std::size_t i = 0; i < size(); ++i) v[i * k + s_[i]] = 1.0;
  return Tensor::matrix(size(), k, std::move(v));
}

std::vector<double> TabularDataset::raw_x() const {
  std::vector<double> v = x_.to_vector();
  const std::size_t d = num_features();
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] = v[i * d + j] * stats_.std[j] + stats_.mean[j];
  return v;
}

std::vector<double> TabularDataset::raw_y() const {
  std::vector<double> v = y_.to_vector();
  for (auto& y : v) y = y * stats_.target_std + stats_.target_mean;
  return v;
}

TabularDataset TabularDataset::subset(const std::vector<std::size_t>& rows) const {
  if (rows.empty()) throw ContractError("subset: no rows selected");
  std::vector<std::size_t> s, ids;
  std::vector<double> y;
  for (auto r : rows) {
    if (r >= size()) throw ContractError("subset: row " + std::to_string(r) + " out of range");
    s.push_back(s_[r]);
    ids.push_back(ids_[r]);
    y.push_back(y_[r]);
  }
  TabularDataset out(schema_, blocks_, select_rows(x_, rows), std::move(s),
                     Tensor::matrix(rows.size(), 1, std::move(y)), stats_, std::move(ids));
  return out;
}

Standardization TabularDataset::fit_standardization() const {
  Standardization st;
  const std::size_t n = size(), d = num_features();
  st.mean.assign(d, 0.0);
  st.std.assign(d, 1.0);
  const auto raw = raw_x();
  for (const auto& b : blocks_) {
    if (b.kind != ColumnKind::kContinuous) continue;
    const std::size_t j = b.offset;
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += raw[i * d + j];
    m /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (raw[i * d + j] - m) * (raw[i * d + j] - m);
    const double sd = std::sqrt(var / static_cast<double>(n));
    st.mean[j] = m;
    st.std[j] = sd > 1e-12 ? sd : 1.0;
  }
  if (task() == TaskKind::kRegression && schema_.standardize_target) {
    const auto ry = raw_y();
    double m = 0.0;
    for (double v : ry) m += v;
    m /= static_cast<double>(n);
    double var = 0.0;
    for (double v : ry) var += (v - m) * (v - m);
    const double sd = std::sqrt(var / static_cast<double>(n));
    st.target_mean = m;
    st.target_std = sd > 1e-12 ? sd : 1.0;
  }
  return st;
}

TabularDataset TabularDataset::restandardize(const Standardization& st) const {
  TabularDataset out = make_dataset(schema_, raw_x(), s_, raw_y(), ids_, st);
  out.rows_dropped_ = rows_dropped_;
  return out;
}

TabularDataset make_dataset(const Schema& schema, std::vector<double> raw_x, std::vector<std::size_t> s,
                            std::vector<double> raw_y, std::vector<std::size_t> ids,
                            const std::optional<Standardization>& stats) {
  auto blocks = feature_blocks(schema);
  const std::size_t n = s.size();
  const std::size_t d = blocks.back().offset + blocks.back().width;
  if (n == 0) throw ContractError("dataset has no rows");
  if (raw_x.size() != n * d || raw_y.size() != n || ids.size() != n) {
    throw DimensionError("make_dataset: component sizes disagree with " + std::to_string(n) +
                         " rows x " + std::to_string(d) + " features");
  }
  Standardization st;
  if (stats) {
    st = *stats;
  } else {
    // Fit on the given raw values.
    Standardization identity;
    identity.mean.assign(d, 0.0);
    identity.std.assign(d, 1.0);
    TabularDataset raw(schema, blocks, Tensor::matrix(n, d, raw_x), s,
                       Tensor::matrix(n, 1, raw_y), identity, ids);
    st = raw.fit_standardization();
  }
  if (st.mean.size() != d || st.std.size() != d) {
    throw DimensionError("standardization covers " + std::to_string(st.mean.size()) +
                         " features, dataset has " + std::to_string(d));
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) raw_x[i * d + j] = (raw_x[i * d + j] - st.mean[j]) / st.std[j];
  for (auto& y : raw_y) y = (y - st.target_mean) / st.target_std;
  return TabularDataset(schema, std::move(blocks), Tensor::matrix(n, d, std::move(raw_x)), std::move(s),
                        Tensor::matrix(n, 1, std::move(raw_y)), st, std::move(ids));
}

// ---- CSV -----------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

TabularDataset parse_csv(std::istream& in, Schema schema, const std::string& source) {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw LoadError(source + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  std::vector<std::size_t> col_index;
  for (const auto& c : schema.columns) {
    const std::size_t k = index_of(header, c.name);
    if (k == header.size()) {
      throw LoadError(source + ": schema column '" + c.name + "' not found in header");
    }
    col_index.push_back(k);
  }

  auto is_missing = [&](const std::string& v) {
    return std::find(schema.missing_tokens.begin(), schema.missing_tokens.end(), v) !=
           schema.missing_tokens.end();
  };

  // First pass: keep rows with complete, in-scope cells.
  std::vector<std::vector<std::string>> kept;
  std::vector<std::size_t> ids;
  std::size_t dropped = 0, line_no = 1, data_row = 0;
  const ColumnSpec& sens = schema.sensitive();
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw LoadError(source + ": row " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    }
    std::vector<std::string> cells;
    bool drop = false;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      std::string v = fields[col_index[c]];
      if (is_missing(v)) drop = true;
      if (schema.columns[c].kind == ColumnKind::kSensitive && index_of(sens.categories, v) == sens.categories.size()) {
        drop = true;
      }
      cells.push_back(std::move(v));
    }
    if (drop) {
      ++dropped;
    } else {
      kept.push_back(std::move(cells));
      ids.push_back(data_row);
    }
    ++data_row;
  }
  if (kept.empty()) throw LoadError(source + ": no rows left after filtering");

  // Discover categorical labels not fixed by the schema.
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    auto& col = schema.columns[c];
    if (col.kind != ColumnKind::kCategorical || !col.categories.empty()) continue;
    std::vector<std::string> labels;
    for (const auto& r : kept) labels.push_back(r[c]);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    col.categories = labels;
  }

  const auto blocks = feature_blocks(schema);
  const std::size_t n = kept.size();
  const std::size_t d = blocks.back().offset + blocks.back().width;
  std::vector<double> x(n * d, 0.0), y(n);
  std::vector<std::size_t> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t block = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& col = schema.columns[c];
      const std::string& v = kept[i][c];
      auto fail = [&](const std::string& why) {
        return LoadError(source + ": data row " + std::to_string(ids[i] + 1) + ", column '" +
                         col.name + "': " + why + " ('" + v + "')");
      };
      switch (col.kind) {
        case ColumnKind::kSensitive:
          s[i] = index_of(col.categories, v);
          break;
        case ColumnKind::kContinuous: {
          const auto val = parse_double(v);
          if (!val) throw fail("not a number");
          x[i * d + blocks[block].offset] = *val;
          ++block;
          break;
        }
        case ColumnKind::kCategorical: {
          const std::size_t k = index_of(col.categories, v);
          if (k == col.categories.size()) throw fail("label not in schema categories");
          x[i * d + blocks[block].offset + k] = 1.0;
          ++block;
          break;
        }
        case ColumnKind::kContinuousTarget: {
          const auto val = parse_double(v);
          if (!val) throw fail("not a number");
          y[i] = *val;
          break;
        }
        case ColumnKind::kBinaryTarget:
          if (index_of(col.positive, v) < col.positive.size()) {
            y[i] = 1.0;
          } else if (col.negative.empty() || index_of(col.negative, v) < col.negative.size()) {
            y[i] = 0.0;
          } else {
            throw fail("label is neither positive nor negative");
          }
          break;
      }
    }
  }
  TabularDataset data = make_dataset(schema, std::move(x), std::move(s), std::move(y), std::move(ids));
  data.set_rows_dropped(dropped);
  return data;
}

TabularDataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open CSV file " + path.string());
  return parse_csv(in, schema, path.string());
}

void save_csv(const TabularDataset& data, const std::filesystem::path& path) {
  const Schema& schema = data.schema();
  const auto raw = data.raw_x();
  const auto ry = data.raw_y();
  const std::size_t d = data.num_features();
  const auto& blocks = data.blocks();

  std::ostringstream out;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) out << (c ? "," : "") << schema.columns[c].name;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t block = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& col = schema.columns[c];
      if (c) out << ',';
      switch (col.kind) {
        case ColumnKind::kSensitive:
          out << col.categories[data.s()[i]];
          break;
        case ColumnKind::kContinuous:
          out << format_double(raw[i * d + blocks[block++].offset]);
          break;
        case ColumnKind::kCategorical: {
          const auto& b = blocks[block++];
          std::size_t best = 0;
          for (std::size_t k = 1; k < b.width; ++k)
            if (raw[i * d + b.offset + k] > raw[i * d + b.offset + best]) best = k;
          out << b.labels[best];
          break;
        }
        case ColumnKind::kContinuousTarget:
          out << format_double(ry[i]);
          break;
        case ColumnKind::kBinaryTarget:
          out << (ry[i] > 0.5 ? col.positive.front()
                              : (col.negative.empty() ? std::string("0") : col.negative.front()));
          break;
      }
    }
    out << '\n';
  }
  write_atomic(path, out.str());
}

// ---- splitting -------------------------------------------------------------

std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> ratios) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw ContractError("split ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ContractError("split ratios must sum to 1");
  }
  const auto val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n) + 1e-9));
  const auto test = static_cast<std::size_t>(std::floor(ratios[2] * static_cast<double>(n) + 1e-9));
  return {n - val - test, val, test};
}

SplitBundle split(const TabularDataset& data, std::array<double, 3> ratios, std::uint64_t seed) {
  if (data.size() < 10) {
    throw ContractError("split: dataset has " + std::to_string(data.size()) +
                        " rows, at least 10 required");
  }
  const auto sizes = split_sizes(data.size(), ratios);
  const auto perm = CounterRng(seed, streams::kSplit).permutation(data.size(), 0, 0);

  SplitBundle b;
  b.seed = seed;
  b.ratios = ratios;
  b.train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
  b.validation_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(sizes[0]),
                           perm.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
  b.test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]), perm.end());

  const TabularDataset train_raw = data.subset(b.train_rows);
  const Standardization st = train_raw.fit_standardization();
  b.train = train_raw.restandardize(st);
  b.validation = data.subset(b.validation_rows).restandardize(st);
  b.test = data.subset(b.test_rows).restandardize(st);
  return b;
}

}  // namespace cftk
