#pragma once

// Shared fixtures for unit and acceptance tests.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tandem/feops.hpp"
#include "tandem/tabular.hpp"

namespace tandem::testing {

inline double nan_cell() {
    return std::nan("");
}

// A regression table exercising every column flavor the operation set
// touches: missing cells, skew, high cardinality, zero variance.
inline DataTable mixed_table(std::size_t rows, unsigned seed) {
    std::vector<double> plain, skewed, with_missing, constant, y;
    std::vector<std::optional<std::string>> low_card, high_card;
    unsigned state = seed * 2654435761u + 12345u;
    auto next = [&state] {
        state = state * 1664525u + 1013904223u;
        return (state >> 8) / 16777216.0;  // [0, 1)
    };
    for (std::size_t i = 0; i < rows; ++i) {
        const double u = next();
        plain.push_back(10.0 * u - 5.0);
        skewed.push_back(std::exp(4.0 * u));
        with_missing.push_back(i % 5 == 0 ? nan_cell() : 3.0 * u);
        constant.push_back(7.0);
        if (i % 7 == 0) {
            low_card.push_back(std::nullopt);
        } else {
            low_card.push_back(std::string(1, static_cast<char>('a' + (i % 3))));
        }
        high_card.push_back("cat_" + std::to_string(i % 25));
        y.push_back(2.0 * plain.back() + 0.5 * u);
    }
    DataTable t;
    t.columns.push_back(Column::numeric("plain", plain));
    t.columns.push_back(Column::numeric("skewed", skewed));
    t.columns.push_back(Column::numeric("with_missing", with_missing));
    t.columns.push_back(Column::numeric("constant", constant));
    t.columns.push_back(Column::categorical("low_card", low_card));
    t.columns.push_back(Column::categorical("high_card", high_card));
    t.columns.push_back(Column::numeric("y", y));
    t.target = "y";
    t.task = TaskKind::Regression;
    return t;
}

inline OperationSpec make_spec(OpKind kind, nlohmann::json params,
                               std::vector<std::string> inputs,
                               std::vector<std::string> outputs = {}) {
    OperationSpec spec;
    spec.kind = kind;
    spec.params = params.is_null() ? nlohmann::json::object() : std::move(params);
    spec.inputs = std::move(inputs);
    spec.outputs = std::move(outputs);
    return spec;
}

// One representative spec per operation kind, valid against mixed_table.
inline std::vector<OperationSpec> one_spec_per_kind() {
    using nlohmann::json;
    return {
        make_spec(OpKind::Impute, json{{"strategy", "mean"}}, {"with_missing"}),
        make_spec(OpKind::StandardScale, json::object(), {"plain"}),
        make_spec(OpKind::MinMaxScale, json::object(), {"plain"}),
        make_spec(OpKind::Log1p, json::object(), {"skewed"}),
        make_spec(OpKind::SignedPower, json::object(), {"skewed"}),
        make_spec(OpKind::ClipOutliers, json{{"lower_q", 0.1}, {"upper_q", 0.9}}, {"plain"}),
        make_spec(OpKind::OneHot, json{{"max_card", 4}}, {"low_card"}),
        make_spec(OpKind::FrequencyEncode, json::object(), {"high_card"}),
        make_spec(OpKind::TargetEncode, json{{"alpha", 2.0}}, {"high_card"}),
        make_spec(OpKind::Arithmetic, json{{"op", "/"}}, {"plain", "skewed"}, {"ratio"}),
        make_spec(OpKind::Unary, json{{"fn", "abs"}}, {"plain"}, {"plain_abs"}),
        make_spec(OpKind::CyclicEncode, json{{"period", 24.0}}, {"plain"}),
        make_spec(OpKind::Bin, json{{"mode", "equal_frequency"}, {"bins", 4}}, {"plain"}),
        make_spec(OpKind::SelectKBest, json{{"k", 2}}, {}),
        make_spec(OpKind::DropColumns, json::object(), {"constant"}),
        make_spec(OpKind::DropZeroVariance, json::object(), {}),
    };
}

inline bool cells_equal(const Column& a, const Column& b, std::size_t row) {
    if (a.missing(row) != b.missing(row)) {
        return false;
    }
    if (a.missing(row)) {
        return true;
    }
    if (a.kind == ColumnKind::Numeric) {
        return a.num[row] == b.num[row];
    }
    return *a.cat[row] == *b.cat[row];
}

inline bool tables_equal(const DataTable& a, const DataTable& b) {
    if (a.columns.size() != b.columns.size() || a.n_rows() != b.n_rows() ||
        a.target != b.target || a.task != b.task) {
        return false;
    }
    for (std::size_t c = 0; c < a.columns.size(); ++c) {
        if (a.columns[c].name != b.columns[c].name || a.columns[c].kind != b.columns[c].kind) {
            return false;
        }
        for (std::size_t r = 0; r < a.n_rows(); ++r) {
            if (!cells_equal(a.columns[c], b.columns[c], r)) {
                return false;
            }
        }
    }
    return true;
}

// Overwrites every feature cell with adversarial junk, keeping the schema.
inline DataTable scramble_rows(const DataTable& table, unsigned seed) {
    DataTable out = table;
    unsigned state = seed * 747796405u + 2891336453u;
    auto next = [&state] {
        state = state * 1664525u + 1013904223u;
        return (state >> 8) / 16777216.0;
    };
    for (Column& col : out.columns) {
        if (col.name == out.target) {
            continue;
        }
        if (col.kind == ColumnKind::Numeric) {
            for (double& v : col.num) {
                v = next() < 0.2 ? nan_cell() : 1e6 * (next() - 0.5);
            }
        } else {
            for (auto& v : col.cat) {
                if (next() < 0.2) {
                    v = std::nullopt;
                } else {
                    v = "junk_" + std::to_string(static_cast<int>(next() * 1000));
                }
            }
        }
    }
    return out;
}

}  // namespace tandem::testing
