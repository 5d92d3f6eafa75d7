#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tandem/common.hpp"

namespace tandem {

enum class ColumnKind { Numeric, Categorical };
enum class TaskKind { Regression, Classification };

std::string to_string(ColumnKind kind);
std::string to_string(TaskKind task);
ColumnKind column_kind_from_string(const std::string& text);
TaskKind task_kind_from_string(const std::string& text);

// A single named column. Numeric cells are finite doubles with NaN as the
// missing marker; categorical cells are optional strings with nullopt missing.
// Exactly one of the two payload vectors is populated, selected by `kind`.
struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<double> num;
    std::vector<std::optional<std::string>> cat;

    std::size_t size() const;
    bool missing(std::size_t row) const;

    static Column numeric(std::string name, std::vector<double> values);
    static Column categorical(std::string name, std::vector<std::optional<std::string>> values);
};

// Returns NaN if `value` is non-finite, otherwise the value itself. Every
// writer of numeric cells funnels through this so columns never hold inf.
double sanitize_cell(double value);

struct SchemaView {
    std::map<std::string, ColumnKind> columns;
    std::string target;
    TaskKind task = TaskKind::Regression;
};

struct DataTable {
    std::vector<Column> columns;
    std::string target;
    TaskKind task = TaskKind::Regression;

    std::size_t n_rows() const;
    bool has_column(const std::string& name) const;
    const Column& column(const std::string& name) const;
    Column& column(const std::string& name);
    std::size_t column_index(const std::string& name) const;
    const Column& target_column() const;
    // Feature column names in table order (everything except the target).
    std::vector<std::string> feature_names() const;
    SchemaView schema() const;
};

// Throws SchemaError unless names are unique, lengths agree, the target
// exists, the target has no missing cells, and a regression target is numeric.
void validate_table(const DataTable& table);

// Schema sidecar: column kinds plus target/task, with optional free-text
// notes per column that feed prompt rendering.
struct TableSchema {
    std::map<std::string, ColumnKind> columns;
    std::string target;
    TaskKind task = TaskKind::Regression;
    std::map<std::string, std::string> notes;
};

TableSchema load_schema(const std::string& path);
void write_schema(const TableSchema& schema, const std::string& path);

// RFC 4180 CSV with a header row. Empty fields are missing; numeric fields
// that fail to parse are missing. The schema must cover exactly the header.
DataTable load_csv(const std::string& data_path, const TableSchema& schema);
DataTable load_csv(const std::string& data_path, const std::string& schema_path);
void write_csv(const DataTable& table, const std::string& path);

struct SplitSpec {
    double train_fraction = 0.6;
    double val_fraction = 0.2;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct Split {
    DataTable train;
    DataTable val;
    DataTable test;
};

// Deterministic shuffle split. Subset sizes are floored shares with the
// remainder assigned to train. Classification tables are stratified per
// class when every class has at least three rows.
Split split_table(const DataTable& table, const SplitSpec& spec);

struct ColumnSummary {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    double missing_ratio = 0.0;
    // Numeric columns (zeros when undefined):
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;
    // Categorical columns:
    std::size_t cardinality = 0;
    std::vector<std::pair<std::string, std::size_t>> top;  // up to 3, count desc then name asc
};

std::vector<ColumnSummary> column_summaries(const DataTable& table);

// Row-wise concatenation of two tables with identical schema.
DataTable concat_rows(const DataTable& a, const DataTable& b);

// Class label of one target cell; numeric targets use their 15-digit rendering.
std::string target_label(const Column& target, std::size_t row);

// Distinct class labels of a classification target, sorted ascending.
// Numeric classification targets are labeled by their 15-digit rendering.
std::vector<std::string> class_labels(const DataTable& table);

// Target as doubles: raw values for regression, sorted-label indices for
// classification. The target must have no missing cells.
std::vector<double> numeric_coded_target(const DataTable& table);

}  // namespace tandem
