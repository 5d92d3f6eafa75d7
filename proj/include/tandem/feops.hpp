#pragma once

#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tandem/tabular.hpp"

namespace tandem {

// Closed set of feature operations. Every kind has fit-on-train semantics:
// fitting learns state from the training split only, applying replays that
// state on any schema-compatible table without looking at its rows' target.
enum class OpKind {
    Impute,
    StandardScale,
    MinMaxScale,
    Log1p,
    SignedPower,
    ClipOutliers,
    OneHot,
    FrequencyEncode,
    TargetEncode,
    Arithmetic,
    Unary,
    CyclicEncode,
    Bin,
    SelectKBest,
    DropColumns,
    DropZeroVariance,
};

std::string to_string(OpKind kind);
OpKind op_kind_from_string(const std::string& text);
std::vector<OpKind> all_op_kinds();

// Wire format: {"kind": ..., "params": {...}, "inputs": [...], "outputs": [...]}.
// `outputs` names produced columns and stays empty for in-place and
// whole-table kinds.
struct OperationSpec {
    OpKind kind = OpKind::Impute;
    nlohmann::json params = nlohmann::json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

nlohmann::json to_json(const OperationSpec& spec);
OperationSpec operation_spec_from_json(const nlohmann::json& doc);

// Structural and schema validation. Returns human-readable violations;
// empty means the operation can be fitted on a table with this schema.
std::vector<std::string> validate_spec(const OperationSpec& spec, const SchemaView& schema);

// Validates a multi-operation step in order against an evolving schema, so a
// later operation may consume columns an earlier one creates. Data-dependent
// names (one_hot indicators) cannot be known statically: from the first
// one_hot on, unknown-input violations are deferred to fit time. Column sets
// after select_k_best and drop_zero_variance are likewise kept permissive.
std::vector<std::string> validate_step(const std::vector<OperationSpec>& specs,
                                       SchemaView schema);

struct ImputeState {
    std::map<std::string, double> num_fill;
    std::map<std::string, std::string> cat_fill;
};
struct AffineState {
    // x -> (x - shift) / scale per column.
    std::map<std::string, std::pair<double, double>> shift_scale;
};
struct PowerState {
    std::map<std::string, double> lambda;
};
struct ClipState {
    std::map<std::string, std::pair<double, double>> bounds;
};
struct OneHotState {
    std::map<std::string, std::vector<std::string>> categories;
    std::map<std::string, bool> has_other;
};
struct FrequencyState {
    std::map<std::string, std::map<std::string, double>> counts;
};
struct TargetEncodeState {
    std::map<std::string, std::map<std::string, double>> encoding;
    double global_mean = 0.0;
};
struct BinState {
    std::map<std::string, std::vector<double>> edges;  // internal cut points
};
struct DropState {
    std::vector<std::string> drop;
};
struct NoState {};

using OpState = std::variant<NoState, ImputeState, AffineState, PowerState, ClipState,
                             OneHotState, FrequencyState, TargetEncodeState, BinState, DropState>;

struct FittedOperation {
    OperationSpec spec;
    OpState state;
};

// Fits `spec` on the training table. Throws SpecError on validation
// failures and FitError on degenerate fits (zero-variance scale targets,
// all-missing inputs, k out of range).
FittedOperation fit_operation(const OperationSpec& spec, const DataTable& train);

// Pure application of fitted state. Throws SchemaError when the table is
// missing inputs or column kinds changed.
DataTable apply_operation(const FittedOperation& op, const DataTable& table);

using Pipeline = std::vector<FittedOperation>;

// Fit each spec in order on the running training table.
Pipeline fit_pipeline(const std::vector<OperationSpec>& specs, const DataTable& train);
DataTable apply_pipeline(const Pipeline& pipeline, const DataTable& table);
std::vector<OperationSpec> pipeline_specs(const Pipeline& pipeline);

// The signed power grid searched by signed_power, in evaluation order.
const std::vector<double>& signed_power_grid();

// Population skewness; 0 when fewer than two values or zero variance.
double skewness(const std::vector<double>& values);

}  // namespace tandem
