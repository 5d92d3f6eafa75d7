#include "tandem/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tandem {
namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Splits raw CSV text into records of fields, honoring quoted fields with
// embedded commas, quotes ("" escapes) and newlines. CRLF and LF both end
// unquoted records.
std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& path) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field.empty() && !field_started) {
                    in_quotes = true;
                    field_started = true;
                } else {
                    field.push_back(c);
                }
                break;
            case ',':
                end_field();
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') {
                    ++i;
                }
                end_record();
                break;
            case '\n':
                end_record();
                break;
            default:
                field.push_back(c);
                field_started = true;
                break;
        }
    }
    if (in_quotes) {
        throw IoError("unterminated quoted field in " + path);
    }
    if (field_started || !field.empty() || !record.empty()) {
        end_record();
    }
    return records;
}

std::optional<double> parse_numeric(const std::string& field) {
    std::size_t begin = field.find_first_not_of(" \t");
    if (begin == std::string::npos) {
        return std::nullopt;
    }
    std::size_t end = field.find_last_not_of(" \t");
    const std::string body = field.substr(begin, end - begin + 1);
    try {
        std::size_t used = 0;
        const double value = std::stod(body, &used);
        if (used != body.size() || !std::isfinite(value)) {
            return std::nullopt;
        }
        return value;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::string format_numeric(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.15g", value);
    return buf;
}

bool needs_quoting(const std::string& field) {
    return field.find_first_of(",\"\n\r") != std::string::npos;
}

std::string quote_field(const std::string& field) {
    if (!needs_quoting(field)) {
        return field;
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out += "\"";
    return out;
}

DataTable take_rows(const DataTable& table, const std::vector<std::size_t>& rows) {
    DataTable out;
    out.target = table.target;
    out.task = table.task;
    out.columns.reserve(table.columns.size());
    for (const Column& col : table.columns) {
        Column copy;
        copy.name = col.name;
        copy.kind = col.kind;
        if (col.kind == ColumnKind::Numeric) {
            copy.num.reserve(rows.size());
            for (std::size_t r : rows) {
                copy.num.push_back(col.num[r]);
            }
        } else {
            copy.cat.reserve(rows.size());
            for (std::size_t r : rows) {
                copy.cat.push_back(col.cat[r]);
            }
        }
        out.columns.push_back(std::move(copy));
    }
    return out;
}

}  // namespace

// Class label of a row rendered as a string so stratification and learners
// can group numeric and categorical targets uniformly.
std::string target_label(const Column& target, std::size_t row) {
    if (target.kind == ColumnKind::Categorical) {
        return *target.cat[row];
    }
    return format_numeric(target.num[row]);
}

std::string to_string(ColumnKind kind) {
    return kind == ColumnKind::Numeric ? "numeric" : "categorical";
}

std::string to_string(TaskKind task) {
    return task == TaskKind::Regression ? "regression" : "classification";
}

ColumnKind column_kind_from_string(const std::string& text) {
    if (text == "numeric") {
        return ColumnKind::Numeric;
    }
    if (text == "categorical") {
        return ColumnKind::Categorical;
    }
    throw SchemaError("unknown column kind: " + text);
}

TaskKind task_kind_from_string(const std::string& text) {
    if (text == "regression") {
        return TaskKind::Regression;
    }
    if (text == "classification") {
        return TaskKind::Classification;
    }
    throw SchemaError("unknown task kind: " + text);
}

std::size_t Column::size() const {
    return kind == ColumnKind::Numeric ? num.size() : cat.size();
}

bool Column::missing(std::size_t row) const {
    if (kind == ColumnKind::Numeric) {
        return std::isnan(num[row]);
    }
    return !cat[row].has_value();
}

Column Column::numeric(std::string name, std::vector<double> values) {
    Column col;
    col.name = std::move(name);
    col.kind = ColumnKind::Numeric;
    col.num = std::move(values);
    for (double& v : col.num) {
        v = sanitize_cell(v);
    }
    return col;
}

Column Column::categorical(std::string name, std::vector<std::optional<std::string>> values) {
    Column col;
    col.name = std::move(name);
    col.kind = ColumnKind::Categorical;
    col.cat = std::move(values);
    return col;
}

double sanitize_cell(double value) {
    return std::isfinite(value) ? value : kMissing;
}

std::size_t DataTable::n_rows() const {
    return columns.empty() ? 0 : columns.front().size();
}

bool DataTable::has_column(const std::string& name) const {
    for (const Column& col : columns) {
        if (col.name == name) {
            return true;
        }
    }
    return false;
}

std::size_t DataTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) {
            return i;
        }
    }
    throw SchemaError("no such column: " + name);
}

const Column& DataTable::column(const std::string& name) const {
    return columns[column_index(name)];
}

Column& DataTable::column(const std::string& name) {
    return columns[column_index(name)];
}

const Column& DataTable::target_column() const {
    return column(target);
}

std::vector<std::string> DataTable::feature_names() const {
    std::vector<std::string> names;
    names.reserve(columns.size());
    for (const Column& col : columns) {
        if (col.name != target) {
            names.push_back(col.name);
        }
    }
    return names;
}

SchemaView DataTable::schema() const {
    SchemaView view;
    view.target = target;
    view.task = task;
    for (const Column& col : columns) {
        view.columns[col.name] = col.kind;
    }
    return view;
}

void validate_table(const DataTable& table) {
    if (table.columns.empty()) {
        throw SchemaError("table has no columns");
    }
    std::set<std::string> seen;
    const std::size_t rows = table.columns.front().size();
    for (const Column& col : table.columns) {
        if (col.name.empty()) {
            throw SchemaError("column with empty name");
        }
        if (!seen.insert(col.name).second) {
            throw SchemaError("duplicate column name: " + col.name);
        }
        if (col.size() != rows) {
            throw SchemaError("column length mismatch: " + col.name);
        }
        if (col.kind == ColumnKind::Numeric) {
            for (double v : col.num) {
                if (!std::isnan(v) && !std::isfinite(v)) {
                    throw SchemaError("non-finite numeric cell in column: " + col.name);
                }
            }
        }
    }
    if (rows == 0) {
        throw SchemaError("table has no rows");
    }
    if (!table.has_column(table.target)) {
        throw SchemaError("target column not present: " + table.target);
    }
    const Column& target = table.target_column();
    for (std::size_t r = 0; r < rows; ++r) {
        if (target.missing(r)) {
            throw SchemaError("target column has missing cells: " + table.target);
        }
    }
    if (table.task == TaskKind::Regression && target.kind != ColumnKind::Numeric) {
        throw SchemaError("regression target must be numeric: " + table.target);
    }
}

TableSchema load_schema(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed schema file " + path + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("columns") || !doc.contains("target") ||
        !doc.contains("task")) {
        throw SchemaError("schema file must contain columns, target and task: " + path);
    }
    TableSchema schema;
    schema.target = doc.at("target").get<std::string>();
    schema.task = task_kind_from_string(doc.at("task").get<std::string>());
    for (const auto& [name, kind] : doc.at("columns").items()) {
        schema.columns[name] = column_kind_from_string(kind.get<std::string>());
    }
    if (doc.contains("notes")) {
        for (const auto& [name, note] : doc.at("notes").items()) {
            schema.notes[name] = note.get<std::string>();
        }
    }
    if (schema.columns.find(schema.target) == schema.columns.end()) {
        throw SchemaError("schema target is not a declared column: " + schema.target);
    }
    return schema;
}

void write_schema(const TableSchema& schema, const std::string& path) {
    nlohmann::json doc;
    doc["target"] = schema.target;
    doc["task"] = to_string(schema.task);
    nlohmann::json cols = nlohmann::json::object();
    for (const auto& [name, kind] : schema.columns) {
        cols[name] = to_string(kind);
    }
    doc["columns"] = cols;
    if (!schema.notes.empty()) {
        nlohmann::json notes = nlohmann::json::object();
        for (const auto& [name, note] : schema.notes) {
            notes[name] = note;
        }
        doc["notes"] = notes;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write schema file: " + path);
    }
    out << doc.dump(2) << '\n';
}

DataTable load_csv(const std::string& data_path, const TableSchema& schema) {
    const auto records = parse_csv(read_file(data_path), data_path);
    if (records.empty()) {
        throw IoError("empty CSV file: " + data_path);
    }
    const std::vector<std::string>& header = records.front();
    std::set<std::string> header_names(header.begin(), header.end());
    if (header_names.size() != header.size()) {
        throw SchemaError("duplicate header column in " + data_path);
    }
    for (const std::string& name : header) {
        if (schema.columns.find(name) == schema.columns.end()) {
            throw SchemaError("header column missing from schema: " + name);
        }
    }
    for (const auto& [name, kind] : schema.columns) {
        (void)kind;
        if (header_names.find(name) == header_names.end()) {
            throw SchemaError("schema column missing from header: " + name);
        }
    }
    if (records.size() == 1) {
        throw IoError("CSV has a header but no data rows: " + data_path);
    }

    DataTable table;
    table.target = schema.target;
    table.task = schema.task;
    table.columns.reserve(header.size());
    for (const std::string& name : header) {
        Column col;
        col.name = name;
        col.kind = schema.columns.at(name);
        table.columns.push_back(std::move(col));
    }

    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& record = records[r];
        if (record.size() != header.size()) {
            throw IoError("row " + std::to_string(r) + " has " + std::to_string(record.size()) +
                          " fields, expected " + std::to_string(header.size()) + " in " + data_path);
        }
        for (std::size_t c = 0; c < record.size(); ++c) {
            Column& col = table.columns[c];
            if (col.kind == ColumnKind::Numeric) {
                const auto value = parse_numeric(record[c]);
                col.num.push_back(value ? *value : kMissing);
            } else {
                if (record[c].empty()) {
                    col.cat.push_back(std::nullopt);
                } else {
                    col.cat.push_back(record[c]);
                }
            }
        }
    }
    validate_table(table);
    return table;
}

DataTable load_csv(const std::string& data_path, const std::string& schema_path) {
    return load_csv(data_path, load_schema(schema_path));
}

void write_csv(const DataTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write CSV file: " + path);
    }
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        if (c > 0) {
            out << ',';
        }
        out << quote_field(table.columns[c].name);
    }
    out << '\n';
    const std::size_t rows = table.n_rows();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            if (c > 0) {
                out << ',';
            }
            const Column& col = table.columns[c];
            if (col.missing(r)) {
                continue;
            }
            if (col.kind == ColumnKind::Numeric) {
                out << format_numeric(col.num[r]);
            } else {
                out << quote_field(*col.cat[r]);
            }
        }
        out << '\n';
    }
}

Split split_table(const DataTable& table, const SplitSpec& spec) {
    validate_table(table);
    const double sum = spec.train_fraction + spec.val_fraction + spec.test_fraction;
    if (spec.train_fraction <= 0 || spec.val_fraction <= 0 || spec.test_fraction <= 0 ||
        std::abs(sum - 1.0) > 1e-9) {
        throw SpecError("split fractions must be positive and sum to 1");
    }
    const std::size_t n = table.n_rows();
    std::mt19937 rng(static_cast<std::mt19937::result_type>(spec.seed));

    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
    std::vector<std::size_t> test_rows;

    auto allocate = [&](std::vector<std::size_t>& pool) {
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t n_val = static_cast<std::size_t>(spec.val_fraction * pool.size());
        const std::size_t n_test = static_cast<std::size_t>(spec.test_fraction * pool.size());
        const std::size_t n_train = pool.size() - n_val - n_test;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (i < n_train) {
                train_rows.push_back(pool[i]);
            } else if (i < n_train + n_val) {
                val_rows.push_back(pool[i]);
            } else {
                test_rows.push_back(pool[i]);
            }
        }
    };

    bool stratified = false;
    if (table.task == TaskKind::Classification) {
        const Column& target = table.target_column();
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t r = 0; r < n; ++r) {
            groups[target_label(target, r)].push_back(r);
        }
        stratified = std::all_of(groups.begin(), groups.end(),
                                 [](const auto& g) { return g.second.size() >= 3; });
        if (stratified) {
            for (auto& [label, rows] : groups) {
                (void)label;
                allocate(rows);
            }
        }
    }
    if (!stratified) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        allocate(all);
    }

    Split split{take_rows(table, train_rows), take_rows(table, val_rows),
                take_rows(table, test_rows)};
    return split;
}

std::vector<ColumnSummary> column_summaries(const DataTable& table) {
    std::vector<ColumnSummary> out;
    const std::size_t rows = table.n_rows();
    for (const Column& col : table.columns) {
        ColumnSummary s;
        s.name = col.name;
        s.kind = col.kind;
        std::size_t missing = 0;
        if (col.kind == ColumnKind::Numeric) {
            std::vector<double> values;
            for (double v : col.num) {
                if (std::isnan(v)) {
                    ++missing;
                } else {
                    values.push_back(v);
                }
            }
            if (!values.empty()) {
                const double mean =
                    std::accumulate(values.begin(), values.end(), 0.0) / values.size();
                double var = 0.0;
                for (double v : values) {
                    var += (v - mean) * (v - mean);
                }
                var /= values.size();
                s.mean = mean;
                s.stddev = std::sqrt(var);
                s.min = *std::min_element(values.begin(), values.end());
                s.max = *std::max_element(values.begin(), values.end());
            }
        } else {
            std::map<std::string, std::size_t> counts;
            for (const auto& v : col.cat) {
                if (!v) {
                    ++missing;
                } else {
                    ++counts[*v];
                }
            }
            s.cardinality = counts.size();
            std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
            std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
                if (a.second != b.second) {
                    return a.second > b.second;
                }
                return a.first < b.first;
            });
            if (items.size() > 3) {
                items.resize(3);
            }
            s.top = std::move(items);
        }
        s.missing_ratio = rows == 0 ? 0.0 : static_cast<double>(missing) / rows;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::string> class_labels(const DataTable& table) {
    const Column& target = table.target_column();
    std::set<std::string> labels;
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        labels.insert(target_label(target, r));
    }
    return {labels.begin(), labels.end()};
}

std::vector<double> numeric_coded_target(const DataTable& table) {
    const Column& target = table.target_column();
    const std::size_t n = table.n_rows();
    std::vector<double> coded(n);
    if (table.task == TaskKind::Regression) {
        for (std::size_t r = 0; r < n; ++r) {
            coded[r] = target.num[r];
        }
        return coded;
    }
    const auto labels = class_labels(table);
    std::map<std::string, double> index;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        index[labels[i]] = static_cast<double>(i);
    }
    for (std::size_t r = 0; r < n; ++r) {
        coded[r] = index.at(target_label(target, r));
    }
    return coded;
}

DataTable concat_rows(const DataTable& a, const DataTable& b) {
    if (a.columns.size() != b.columns.size() || a.target != b.target || a.task != b.task) {
        throw SchemaError("cannot concatenate tables with different schemas");
    }
    DataTable out = a;
    for (std::size_t c = 0; c < out.columns.size(); ++c) {
        const Column& src = b.columns[c];
        Column& dst = out.columns[c];
        if (src.name != dst.name || src.kind != dst.kind) {
            throw SchemaError("cannot concatenate tables with different schemas");
        }
        if (dst.kind == ColumnKind::Numeric) {
            dst.num.insert(dst.num.end(), src.num.begin(), src.num.end());
        } else {
            dst.cat.insert(dst.cat.end(), src.cat.begin(), src.cat.end());
        }
    }
    return out;
}

}  // namespace tandem
