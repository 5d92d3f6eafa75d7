#include "tandem/feops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace tandem {
namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
constexpr double kZeroVarianceEps = 1e-12;
constexpr double kSafeDivideEps = 1e-12;
constexpr int kDefaultMaxCard = 16;
constexpr double kDefaultAlpha = 10.0;

const std::map<std::string, OpKind>& kind_names() {
    static const std::map<std::string, OpKind> names = {
        {"impute", OpKind::Impute},
        {"standard_scale", OpKind::StandardScale},
        {"minmax_scale", OpKind::MinMaxScale},
        {"log1p", OpKind::Log1p},
        {"signed_power", OpKind::SignedPower},
        {"clip_outliers", OpKind::ClipOutliers},
        {"one_hot", OpKind::OneHot},
        {"frequency_encode", OpKind::FrequencyEncode},
        {"target_encode", OpKind::TargetEncode},
        {"arithmetic", OpKind::Arithmetic},
        {"unary", OpKind::Unary},
        {"cyclic_encode", OpKind::CyclicEncode},
        {"bin", OpKind::Bin},
        {"select_k_best", OpKind::SelectKBest},
        {"drop_columns", OpKind::DropColumns},
        {"drop_zero_variance", OpKind::DropZeroVariance},
    };
    return names;
}

std::vector<double> finite_values(const Column& col) {
    std::vector<double> values;
    values.reserve(col.num.size());
    for (double v : col.num) {
        if (!std::isnan(v)) {
            values.push_back(v);
        }
    }
    return values;
}

double population_variance(const std::vector<double>& values) {
    if (values.size() < 2) {
        return 0.0;
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double var = 0.0;
    for (double v : values) {
        var += (v - mean) * (v - mean);
    }
    return var / values.size();
}

// Linear-interpolation quantile of a sorted sample, q in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) {
        return sorted.back();
    }
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2) {
        return 0.0;
    }
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx < 1e-24 || syy < 1e-24) {
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

double transform_power(double x, double lambda) {
    if (std::isnan(x)) {
        return kMissing;
    }
    const double sign = x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
    double out;
    if (lambda == 0.0) {
        out = sign * std::log1p(std::abs(x));
    } else {
        out = sign * std::pow(std::abs(x), lambda);
    }
    return sanitize_cell(out);
}

struct ParamSchema {
    std::set<std::string> allowed;
};

void check_param_keys(const OperationSpec& spec, const std::set<std::string>& allowed,
                      std::vector<std::string>& violations) {
    if (!spec.params.is_object()) {
        violations.push_back("params must be a JSON object");
        return;
    }
    for (const auto& [key, value] : spec.params.items()) {
        (void)value;
        if (allowed.find(key) == allowed.end()) {
            violations.push_back("unexpected param '" + key + "' for " + to_string(spec.kind));
        }
    }
}

bool check_inputs(const OperationSpec& spec, const SchemaView& schema, ColumnKind expected,
                  std::vector<std::string>& violations, bool allow_unknown = false) {
    bool ok = true;
    for (const std::string& name : spec.inputs) {
        const auto it = schema.columns.find(name);
        if (it == schema.columns.end()) {
            if (!allow_unknown) {
                violations.push_back("input column does not exist: " + name);
                ok = false;
            }
        } else if (it->second != expected) {
            violations.push_back("input column " + name + " must be " + to_string(expected));
            ok = false;
        }
    }
    return ok;
}

double get_number(const nlohmann::json& params, const std::string& key, double fallback) {
    if (params.contains(key)) {
        return params.at(key).get<double>();
    }
    return fallback;
}

// Shared drop helper for the whole-table kinds.
DataTable drop_columns_from(const DataTable& table, const std::vector<std::string>& drop) {
    std::set<std::string> gone(drop.begin(), drop.end());
    for (const std::string& name : drop) {
        if (!table.has_column(name)) {
            throw SchemaError("cannot drop absent column: " + name);
        }
    }
    DataTable out;
    out.target = table.target;
    out.task = table.task;
    for (const Column& col : table.columns) {
        if (gone.find(col.name) == gone.end()) {
            out.columns.push_back(col);
        }
    }
    return out;
}

void require_input(const DataTable& table, const std::string& name, ColumnKind kind) {
    if (!table.has_column(name)) {
        throw SchemaError("apply: input column missing: " + name);
    }
    if (table.column(name).kind != kind) {
        throw SchemaError("apply: input column " + name + " must be " + to_string(kind));
    }
}

}  // namespace

std::string to_string(OpKind kind) {
    for (const auto& [name, k] : kind_names()) {
        if (k == kind) {
            return name;
        }
    }
    throw SpecError("unknown operation kind");
}

OpKind op_kind_from_string(const std::string& text) {
    const auto it = kind_names().find(text);
    if (it == kind_names().end()) {
        throw SpecError("unknown operation kind: " + text);
    }
    return it->second;
}

std::vector<OpKind> all_op_kinds() {
    std::vector<OpKind> kinds;
    for (const auto& [name, k] : kind_names()) {
        (void)name;
        kinds.push_back(k);
    }
    return kinds;
}

nlohmann::json to_json(const OperationSpec& spec) {
    return nlohmann::json{{"kind", to_string(spec.kind)},
                          {"params", spec.params},
                          {"inputs", spec.inputs},
                          {"outputs", spec.outputs}};
}

OperationSpec operation_spec_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("kind")) {
        throw SpecError("operation spec must be an object with a 'kind' field");
    }
    OperationSpec spec;
    spec.kind = op_kind_from_string(doc.at("kind").get<std::string>());
    spec.params = doc.value("params", nlohmann::json::object());
    if (!spec.params.is_object()) {
        throw SpecError("operation params must be an object");
    }
    if (doc.contains("inputs")) {
        spec.inputs = doc.at("inputs").get<std::vector<std::string>>();
    }
    if (doc.contains("outputs")) {
        spec.outputs = doc.at("outputs").get<std::vector<std::string>>();
    }
    return spec;
}

static std::vector<std::string> validate_spec_impl(const OperationSpec& spec,
                                                   const SchemaView& schema,
                                                   bool allow_unknown) {
    std::vector<std::string> violations;
    const auto& params = spec.params;
    if (!params.is_object()) {
        violations.push_back("params must be a JSON object");
        return violations;
    }

    for (const std::string& name : spec.inputs) {
        if (name == schema.target) {
            violations.push_back("operations may not take the target as input: " + name);
        }
    }
    if (spec.kind != OpKind::Arithmetic) {
        std::set<std::string> seen;
        for (const std::string& name : spec.inputs) {
            if (!seen.insert(name).second) {
                violations.push_back("duplicate input column: " + name);
            }
        }
    }
    std::set<std::string> out_seen;
    for (const std::string& name : spec.outputs) {
        if (name.empty()) {
            violations.push_back("output column name is empty");
        }
        if (schema.columns.find(name) != schema.columns.end()) {
            violations.push_back("output column already exists: " + name);
        }
        if (name == schema.target) {
            violations.push_back("output column may not shadow the target: " + name);
        }
        if (!out_seen.insert(name).second) {
            violations.push_back("duplicate output column: " + name);
        }
    }

    const bool wants_no_outputs =
        spec.kind != OpKind::Arithmetic && spec.kind != OpKind::Unary &&
        spec.kind != OpKind::CyclicEncode;
    if (wants_no_outputs && !spec.outputs.empty()) {
        violations.push_back(to_string(spec.kind) + " takes no outputs");
    }

    switch (spec.kind) {
        case OpKind::Impute: {
            check_param_keys(spec, {"strategy", "value"}, violations);
            if (spec.inputs.empty()) {
                violations.push_back("impute needs at least one input");
                break;
            }
            if (!params.contains("strategy") || !params.at("strategy").is_string()) {
                violations.push_back("impute needs a string 'strategy' param");
                break;
            }
            const std::string strategy = params.at("strategy").get<std::string>();
            if (strategy == "mean" || strategy == "median") {
                check_inputs(spec, schema, ColumnKind::Numeric, violations, allow_unknown);
            } else if (strategy == "mode") {
                check_inputs(spec, schema, ColumnKind::Categorical, violations, allow_unknown);
            } else if (strategy == "constant") {
                if (!params.contains("value")) {
                    violations.push_back("impute constant needs a 'value' param");
                } else if (params.at("value").is_number()) {
                    check_inputs(spec, schema, ColumnKind::Numeric, violations, allow_unknown);
                } else if (params.at("value").is_string()) {
                    check_inputs(spec, schema, ColumnKind::Categorical, violations, allow_unknown);
                } else {
                    violations.push_back("impute constant value must be a number or string");
                }
            } else {
                violations.push_back("unknown impute strategy: " + strategy);
            }
            break;
        }
        case OpKind::StandardScale:
        case OpKind::MinMaxScale:
        case OpKind::Log1p:
        case OpKind::SignedPower: {
            check_param_keys(spec, {}, violations);
            if (spec.inputs.empty()) {
                violations.push_back(to_string(spec.kind) + " needs at least one input");
            }
            check_inputs(spec, schema, ColumnKind::Numeric, violations, allow_unknown);
            break;
        }
        case OpKind::ClipOutliers: {
            check_param_keys(spec, {"lower_q", "upper_q"}, violations);
            if (spec.inputs.empty()) {
                violations.push_back("clip_outliers needs at least one input");
            }
            check_inputs(spec, schema, ColumnKind::Numeric, violations, allow_unknown);
            if (!params.contains("lower_q") || !params.contains("upper_q") ||
                !params.at("lower_q").is_number() || !params.at("upper_q").is_number()) {
                violations.push_back("clip_outliers needs numeric lower_q and upper_q params");
            } else {
                const double lo = params.at("lower_q").get<double>();
                const double hi = params.at("upper_q").get<double>();
                if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) {
                    violations.push_back("clip_outliers needs 0 <= lower_q < upper_q <= 1");
                }
            }
            break;
        }
        case OpKind::OneHot: {
            check_param_keys(spec, {"max_card"}, violations);
            if (spec.inputs.empty()) {
                violations.push_back("one_hot needs at least one input");
            }
            check_inputs(spec, schema, ColumnKind::Categorical, violations, allow_unknown);
            if (params.contains("max_card") &&
                (!params.at("max_card").is_number_integer() ||
                 params.at("max_card").get<int>() < 2)) {
                violations.push_back("one_hot max_card must be an integer >= 2");
            }
            break;
        }
        case OpKind::FrequencyEncode: {
            check_param_keys(spec, {}, violations);
            if (spec.inputs.empty()) {
                violations.push_back("frequency_encode needs at least one input");
            }
            check_inputs(spec, schema, ColumnKind::Categorical, violations, allow_unknown);
            break;
        }
        case OpKind::TargetEncode: {
            check_param_keys(spec, {"alpha"}, violations);
            if (spec.inputs.empty()) {
                violations.push_back("target_encode needs at least one input");
            }
            check_inputs(spec, schema, ColumnKind::Categorical, violations, allow_unknown);
            if (params.contains("alpha") &&
                (!params.at("alpha").is_number() || params.at("alpha").get<double>() < 0)) {
                violations.push_back("target_encode alpha must be a number >= 0");
            }
            break;
        }
        case OpKind::Arithmetic: {
            check_param_keys(spec, {"op"}, violations);
            if (spec.inputs.size() != 2) {
                violations.push_back("arithmetic needs exactly two inputs");
            }
            check_inputs(spec, schema, ColumnKind::Numeric, violations, allow_unknown);
            if (spec.outputs.size() != 1) {
                violations.push_back("arithmetic needs exactly one output");
            }
            static const std::set<std::string> ops = {"+", "-", "*", "/"};
            if (!params.contains("op") || !params.at("op").is_string() ||
                ops.find(params.at("op").get<std::string>()) == ops.end()) {
                violations.push_back("arithmetic op must be one of +, -, *, /");
            }
            break;
        }
        case OpKind::Unary: {
            check_param_keys(spec, {"fn"}, violations);
            if (spec.inputs.size() != 1) {
                violations.push_back("unary needs exactly one input");
            }
            check_inputs(spec, schema, ColumnKind::Numeric, violations, allow_unknown);
            if (spec.outputs.size() > 1) {
                violations.push_back("unary takes at most one output");
            }
            static const std::set<std::string> fns = {"sin", "cos", "sqrt", "square", "abs"};
            if (!params.contains("fn") || !params.at("fn").is_string() ||
                fns.find(params.at("fn").get<std::string>()) == fns.end()) {
                violations.push_back("unary fn must be one of sin, cos, sqrt, square, abs");
            }
            break;
        }
        case OpKind::CyclicEncode: {
            check_param_keys(spec, {"period"}, violations);
            if (spec.inputs.size() != 1) {
                violations.push_back("cyclic_encode needs exactly one input");
            }
            check_inputs(spec, schema, ColumnKind::Numeric, violations, allow_unknown);
            if (!spec.outputs.empty() && spec.outputs.size() != 2) {
                violations.push_back("cyclic_encode takes zero or two outputs");
            }
            if (!params.contains("period") || !params.at("period").is_number() ||
                params.at("period").get<double>() <= 0) {
                violations.push_back("cyclic_encode needs a positive 'period' param");
            }
            if (spec.outputs.empty() && spec.inputs.size() == 1) {
                for (const char* suffix : {"_sin", "_cos"}) {
                    const std::string name = spec.inputs.front() + suffix;
                    if (schema.columns.find(name) != schema.columns.end()) {
                        violations.push_back("default output column already exists: " + name);
                    }
                }
            }
            break;
        }
        case OpKind::Bin: {
            check_param_keys(spec, {"mode", "bins"}, violations);
            if (spec.inputs.empty()) {
                violations.push_back("bin needs at least one input");
            }
            check_inputs(spec, schema, ColumnKind::Numeric, violations, allow_unknown);
            if (!params.contains("mode") || !params.at("mode").is_string() ||
                (params.at("mode").get<std::string>() != "equal_width" &&
                 params.at("mode").get<std::string>() != "equal_frequency")) {
                violations.push_back("bin mode must be equal_width or equal_frequency");
            }
            if (!params.contains("bins") || !params.at("bins").is_number_integer() ||
                params.at("bins").get<int>() < 2) {
                violations.push_back("bin needs an integer 'bins' param >= 2");
            }
            break;
        }
        case OpKind::SelectKBest: {
            check_param_keys(spec, {"k"}, violations);
            if (!spec.inputs.empty()) {
                violations.push_back("select_k_best takes no inputs");
            }
            if (!params.contains("k") || !params.at("k").is_number_integer() ||
                params.at("k").get<int>() < 1) {
                violations.push_back("select_k_best needs an integer 'k' param >= 1");
            }
            break;
        }
        case OpKind::DropColumns: {
            check_param_keys(spec, {}, violations);
            if (spec.inputs.empty()) {
                violations.push_back("drop_columns needs at least one input");
            }
            for (const std::string& name : spec.inputs) {
                if (!allow_unknown && schema.columns.find(name) == schema.columns.end()) {
                    violations.push_back("input column does not exist: " + name);
                }
            }
            break;
        }
        case OpKind::DropZeroVariance: {
            check_param_keys(spec, {}, violations);
            if (!spec.inputs.empty()) {
                violations.push_back("drop_zero_variance takes no inputs");
            }
            break;
        }
    }
    return violations;
}

std::vector<std::string> validate_spec(const OperationSpec& spec, const SchemaView& schema) {
    return validate_spec_impl(spec, schema, false);
}

std::vector<std::string> validate_step(const std::vector<OperationSpec>& specs,
                                       SchemaView schema) {
    std::vector<std::string> violations;
    if (specs.empty()) {
        violations.push_back("step needs at least one operation");
        return violations;
    }
    bool open = false;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const OperationSpec& spec = specs[i];
        for (const std::string& v : validate_spec_impl(spec, schema, open)) {
            violations.push_back("op " + std::to_string(i + 1) + ": " + v);
        }
        switch (spec.kind) {
            case OpKind::FrequencyEncode:
            case OpKind::TargetEncode:
                for (const std::string& name : spec.inputs) {
                    auto it = schema.columns.find(name);
                    if (it != schema.columns.end()) {
                        it->second = ColumnKind::Numeric;
                    }
                }
                break;
            case OpKind::OneHot:
                for (const std::string& name : spec.inputs) {
                    schema.columns.erase(name);
                }
                open = true;
                break;
            case OpKind::Arithmetic:
            case OpKind::Unary:
                if (spec.outputs.size() == 1) {
                    schema.columns[spec.outputs[0]] = ColumnKind::Numeric;
                }
                break;
            case OpKind::CyclicEncode:
                if (spec.outputs.size() == 2) {
                    schema.columns[spec.outputs[0]] = ColumnKind::Numeric;
                    schema.columns[spec.outputs[1]] = ColumnKind::Numeric;
                } else if (spec.inputs.size() == 1) {
                    schema.columns[spec.inputs[0] + "_sin"] = ColumnKind::Numeric;
                    schema.columns[spec.inputs[0] + "_cos"] = ColumnKind::Numeric;
                }
                break;
            case OpKind::DropColumns:
                for (const std::string& name : spec.inputs) {
                    schema.columns.erase(name);
                }
                break;
            default:
                break;
        }
    }
    return violations;
}

const std::vector<double>& signed_power_grid() {
    static const std::vector<double> grid = {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0};
    return grid;
}

double skewness(const std::vector<double>& values) {
    if (values.size() < 2) {
        return 0.0;
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double m2 = 0.0, m3 = 0.0;
    for (double v : values) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= values.size();
    m3 /= values.size();
    if (m2 < 1e-24) {
        return 0.0;
    }
    return m3 / std::pow(m2, 1.5);
}

FittedOperation fit_operation(const OperationSpec& spec, const DataTable& train) {
    const auto violations = validate_spec(spec, train.schema());
    if (!violations.empty()) {
        std::ostringstream msg;
        msg << "invalid operation spec:";
        for (const auto& v : violations) {
            msg << " " << v << ";";
        }
        throw SpecError(msg.str());
    }

    FittedOperation fitted;
    fitted.spec = spec;

    switch (spec.kind) {
        case OpKind::Impute: {
            ImputeState state;
            const std::string strategy = spec.params.at("strategy").get<std::string>();
            for (const std::string& name : spec.inputs) {
                const Column& col = train.column(name);
                if (strategy == "mean" || strategy == "median") {
                    auto values = finite_values(col);
                    if (values.empty()) {
                        throw FitError("impute " + strategy + " on all-missing column: " + name);
                    }
                    if (strategy == "mean") {
                        state.num_fill[name] =
                            std::accumulate(values.begin(), values.end(), 0.0) / values.size();
                    } else {
                        std::sort(values.begin(), values.end());
                        state.num_fill[name] = quantile_sorted(values, 0.5);
                    }
                } else if (strategy == "mode") {
                    std::map<std::string, std::size_t> counts;
                    for (const auto& v : col.cat) {
                        if (v) {
                            ++counts[*v];
                        }
                    }
                    if (counts.empty()) {
                        throw FitError("impute mode on all-missing column: " + name);
                    }
                    // Ties resolve to the lexicographically smallest value.
                    std::string best;
                    std::size_t best_count = 0;
                    for (const auto& [value, count] : counts) {
                        if (count > best_count) {
                            best = value;
                            best_count = count;
                        }
                    }
                    state.cat_fill[name] = best;
                } else {  // constant
                    if (col.kind == ColumnKind::Numeric) {
                        state.num_fill[name] = spec.params.at("value").get<double>();
                    } else {
                        state.cat_fill[name] = spec.params.at("value").get<std::string>();
                    }
                }
            }
            fitted.state = std::move(state);
            break;
        }
        case OpKind::StandardScale: {
            AffineState state;
            for (const std::string& name : spec.inputs) {
                const auto values = finite_values(train.column(name));
                if (values.empty()) {
                    throw FitError("standard_scale on all-missing column: " + name);
                }
                const double mean =
                    std::accumulate(values.begin(), values.end(), 0.0) / values.size();
                const double stddev = std::sqrt(population_variance(values));
                if (stddev < kZeroVarianceEps) {
                    throw FitError("standard_scale on zero-variance column: " + name);
                }
                state.shift_scale[name] = {mean, stddev};
            }
            fitted.state = std::move(state);
            break;
        }
        case OpKind::MinMaxScale: {
            AffineState state;
            for (const std::string& name : spec.inputs) {
                const auto values = finite_values(train.column(name));
                if (values.empty()) {
                    throw FitError("minmax_scale on all-missing column: " + name);
                }
                const double lo = *std::min_element(values.begin(), values.end());
                const double hi = *std::max_element(values.begin(), values.end());
                if (hi - lo < kZeroVarianceEps) {
                    throw FitError("minmax_scale on zero-variance column: " + name);
                }
                state.shift_scale[name] = {lo, hi - lo};
            }
            fitted.state = std::move(state);
            break;
        }
        case OpKind::Log1p: {
            fitted.state = NoState{};
            break;
        }
        case OpKind::SignedPower: {
            PowerState state;
            for (const std::string& name : spec.inputs) {
                const Column& col = train.column(name);
                double best_lambda = 0.0;
                double best_score = std::numeric_limits<double>::infinity();
                for (double lambda : signed_power_grid()) {
                    std::vector<double> transformed;
                    transformed.reserve(col.num.size());
                    for (double v : col.num) {
                        const double t = transform_power(v, lambda);
                        if (!std::isnan(t)) {
                            transformed.push_back(t);
                        }
                    }
                    double score = std::numeric_limits<double>::infinity();
                    if (transformed.size() >= 2 &&
                        population_variance(transformed) > 1e-24) {
                        score = std::abs(skewness(transformed));
                    }
                    if (score < best_score) {
                        best_score = score;
                        best_lambda = lambda;
                    }
                }
                if (!std::isfinite(best_score)) {
                    throw FitError("signed_power has no usable exponent for column: " + name);
                }
                state.lambda[name] = best_lambda;
            }
            fitted.state = std::move(state);
            break;
        }
        case OpKind::ClipOutliers: {
            ClipState state;
            const double lo_q = spec.params.at("lower_q").get<double>();
            const double hi_q = spec.params.at("upper_q").get<double>();
            for (const std::string& name : spec.inputs) {
                auto values = finite_values(train.column(name));
                if (values.empty()) {
                    throw FitError("clip_outliers on all-missing column: " + name);
                }
                std::sort(values.begin(), values.end());
                state.bounds[name] = {quantile_sorted(values, lo_q),
                                      quantile_sorted(values, hi_q)};
            }
            fitted.state = std::move(state);
            break;
        }
        case OpKind::OneHot: {
            OneHotState state;
            const int max_card = spec.params.contains("max_card")
                                     ? spec.params.at("max_card").get<int>()
                                     : kDefaultMaxCard;
            for (const std::string& name : spec.inputs) {
                const Column& col = train.column(name);
                std::map<std::string, std::size_t> counts;
                for (const auto& v : col.cat) {
                    if (v) {
                        ++counts[*v];
                    }
                }
                if (counts.empty()) {
                    throw FitError("one_hot on all-missing column: " + name);
                }
                std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                                        counts.end());
                std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                    if (a.second != b.second) {
                        return a.second > b.second;
                    }
                    return a.first < b.first;
                });
                const bool overflow = ranked.size() > static_cast<std::size_t>(max_card);
                if (overflow) {
                    ranked.resize(max_card);
                }
                std::vector<std::string> kept;
                for (const auto& [value, count] : ranked) {
                    (void)count;
                    kept.push_back(value);
                }
                state.categories[name] = std::move(kept);
                state.has_other[name] = overflow;
            }
            // Generated indicator names must not collide with surviving columns.
            std::set<std::string> survivors;
            std::set<std::string> replaced(spec.inputs.begin(), spec.inputs.end());
            for (const Column& col : train.columns) {
                if (replaced.find(col.name) == replaced.end()) {
                    survivors.insert(col.name);
                }
            }
            for (const std::string& name : spec.inputs) {
                std::vector<std::string> generated = state.categories.at(name);
                if (state.has_other.at(name)) {
                    generated.push_back("__other__");
                }
                for (const std::string& value : generated) {
                    const std::string indicator = name + "=" + value;
                    if (!survivors.insert(indicator).second) {
                        throw FitError("one_hot indicator name collides: " + indicator);
                    }
                }
            }
            fitted.state = std::move(state);
            break;
        }
        case OpKind::FrequencyEncode: {
            FrequencyState state;
            for (const std::string& name : spec.inputs) {
                const Column& col = train.column(name);
                std::map<std::string, double> counts;
                for (const auto& v : col.cat) {
                    if (v) {
                        counts[*v] += 1.0;
                    }
                }
                state.counts[name] = std::move(counts);
            }
            fitted.state = std::move(state);
            break;
        }
        case OpKind::TargetEncode: {
            TargetEncodeState state;
            const double alpha = get_number(spec.params, "alpha", kDefaultAlpha);
            const auto target = numeric_coded_target(train);
            state.global_mean =
                std::accumulate(target.begin(), target.end(), 0.0) / target.size();
            for (const std::string& name : spec.inputs) {
                const Column& col = train.column(name);
                std::map<std::string, std::pair<double, double>> sums;  // value -> (sum, count)
                for (std::size_t r = 0; r < col.cat.size(); ++r) {
                    if (col.cat[r]) {
                        auto& acc = sums[*col.cat[r]];
                        acc.first += target[r];
                        acc.second += 1.0;
                    }
                }
                std::map<std::string, double> enc;
                for (const auto& [value, acc] : sums) {
                    enc[value] =
                        (acc.first + alpha * state.global_mean) / (acc.second + alpha);
                }
                state.encoding[name] = std::move(enc);
            }
            fitted.state = std::move(state);
            break;
        }
        case OpKind::Arithmetic:
        case OpKind::Unary:
        case OpKind::CyclicEncode: {
            fitted.state = NoState{};
            break;
        }
        case OpKind::Bin: {
            BinState state;
            const std::string mode = spec.params.at("mode").get<std::string>();
            const int bins = spec.params.at("bins").get<int>();
            for (const std::string& name : spec.inputs) {
                auto values = finite_values(train.column(name));
                if (values.empty()) {
                    throw FitError("bin on all-missing column: " + name);
                }
                std::sort(values.begin(), values.end());
                const double lo = values.front();
                const double hi = values.back();
                if (hi - lo < kZeroVarianceEps) {
                    throw FitError("bin on zero-variance column: " + name);
                }
                std::vector<double> edges;
                for (int i = 1; i < bins; ++i) {
                    const double q = static_cast<double>(i) / bins;
                    edges.push_back(mode == "equal_width" ? lo + q * (hi - lo)
                                                          : quantile_sorted(values, q));
                }
                state.edges[name] = std::move(edges);
            }
            fitted.state = std::move(state);
            break;
        }
        case OpKind::SelectKBest: {
            const int k = spec.params.at("k").get<int>();
            std::vector<std::string> numeric_features;
            for (const Column& col : train.columns) {
                if (col.name != train.target && col.kind == ColumnKind::Numeric) {
                    numeric_features.push_back(col.name);
                }
            }
            if (static_cast<std::size_t>(k) > numeric_features.size()) {
                throw FitError("select_k_best k=" + std::to_string(k) +
                               " exceeds the " + std::to_string(numeric_features.size()) +
                               " available numeric feature columns");
            }
            const auto target = numeric_coded_target(train);
            std::vector<std::pair<std::string, double>> scored;
            for (const std::string& name : numeric_features) {
                const Column& col = train.column(name);
                std::vector<double> x, y;
                for (std::size_t r = 0; r < col.num.size(); ++r) {
                    if (!std::isnan(col.num[r])) {
                        x.push_back(col.num[r]);
                        y.push_back(target[r]);
                    }
                }
                double score = 0.0;
                if (train.task == TaskKind::Regression) {
                    score = std::abs(pearson(x, y));
                } else {
                    // One-way ANOVA F-statistic across target classes.
                    std::map<double, std::pair<double, double>> groups;  // class -> (sum, n)
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        auto& g = groups[y[i]];
                        g.first += x[i];
                        g.second += 1.0;
                    }
                    const double n = static_cast<double>(x.size());
                    const double g = static_cast<double>(groups.size());
                    if (g >= 2 && n > g) {
                        const double grand =
                            std::accumulate(x.begin(), x.end(), 0.0) / n;
                        double ssb = 0.0;
                        for (const auto& [cls, acc] : groups) {
                            (void)cls;
                            const double mean = acc.first / acc.second;
                            ssb += acc.second * (mean - grand) * (mean - grand);
                        }
                        double ssw = 0.0;
                        for (std::size_t i = 0; i < x.size(); ++i) {
                            const auto& acc = groups.at(y[i]);
                            const double mean = acc.first / acc.second;
                            ssw += (x[i] - mean) * (x[i] - mean);
                        }
                        if (ssw < 1e-24) {
                            score = ssb > 1e-24 ? std::numeric_limits<double>::infinity() : 0.0;
                        } else {
                            score = (ssb / (g - 1)) / (ssw / (n - g));
                        }
                    }
                }
                scored.emplace_back(name, score);
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                if (a.second != b.second) {
                    return a.second > b.second;
                }
                return a.first < b.first;
            });
            DropState state;
            for (std::size_t i = k; i < scored.size(); ++i) {
                state.drop.push_back(scored[i].first);
            }
            fitted.state = std::move(state);
            break;
        }
        case OpKind::DropColumns: {
            fitted.state = DropState{spec.inputs};
            break;
        }
        case OpKind::DropZeroVariance: {
            DropState state;
            for (const Column& col : train.columns) {
                if (col.name == train.target) {
                    continue;
                }
                if (col.kind == ColumnKind::Numeric) {
                    const auto values = finite_values(col);
                    if (values.size() <= 1 || population_variance(values) < 1e-24) {
                        state.drop.push_back(col.name);
                    }
                } else {
                    std::set<std::string> distinct;
                    for (const auto& v : col.cat) {
                        if (v) {
                            distinct.insert(*v);
                        }
                    }
                    if (distinct.size() <= 1) {
                        state.drop.push_back(col.name);
                    }
                }
            }
            fitted.state = std::move(state);
            break;
        }
    }
    return fitted;
}

DataTable apply_operation(const FittedOperation& op, const DataTable& table) {
    const OperationSpec& spec = op.spec;
    DataTable out = table;

    switch (spec.kind) {
        case OpKind::Impute: {
            const auto& state = std::get<ImputeState>(op.state);
            for (const auto& [name, fill] : state.num_fill) {
                require_input(out, name, ColumnKind::Numeric);
                for (double& v : out.column(name).num) {
                    if (std::isnan(v)) {
                        v = fill;
                    }
                }
            }
            for (const auto& [name, fill] : state.cat_fill) {
                require_input(out, name, ColumnKind::Categorical);
                for (auto& v : out.column(name).cat) {
                    if (!v) {
                        v = fill;
                    }
                }
            }
            break;
        }
        case OpKind::StandardScale:
        case OpKind::MinMaxScale: {
            const auto& state = std::get<AffineState>(op.state);
            for (const auto& [name, params] : state.shift_scale) {
                require_input(out, name, ColumnKind::Numeric);
                for (double& v : out.column(name).num) {
                    if (!std::isnan(v)) {
                        v = sanitize_cell((v - params.first) / params.second);
                    }
                }
            }
            break;
        }
        case OpKind::Log1p: {
            for (const std::string& name : spec.inputs) {
                require_input(out, name, ColumnKind::Numeric);
                for (double& v : out.column(name).num) {
                    if (!std::isnan(v)) {
                        v = v > -1.0 ? sanitize_cell(std::log1p(v)) : kMissing;
                    }
                }
            }
            break;
        }
        case OpKind::SignedPower: {
            const auto& state = std::get<PowerState>(op.state);
            for (const auto& [name, lambda] : state.lambda) {
                require_input(out, name, ColumnKind::Numeric);
                for (double& v : out.column(name).num) {
                    v = transform_power(v, lambda);
                }
            }
            break;
        }
        case OpKind::ClipOutliers: {
            const auto& state = std::get<ClipState>(op.state);
            for (const auto& [name, bounds] : state.bounds) {
                require_input(out, name, ColumnKind::Numeric);
                for (double& v : out.column(name).num) {
                    if (!std::isnan(v)) {
                        v = std::clamp(v, bounds.first, bounds.second);
                    }
                }
            }
            break;
        }
        case OpKind::OneHot: {
            const auto& state = std::get<OneHotState>(op.state);
            for (const std::string& name : spec.inputs) {
                require_input(out, name, ColumnKind::Categorical);
            }
            DataTable next;
            next.target = out.target;
            next.task = out.task;
            for (const Column& col : out.columns) {
                const auto it = state.categories.find(col.name);
                if (it == state.categories.end()) {
                    next.columns.push_back(col);
                    continue;
                }
                const auto& kept = it->second;
                const bool other = state.has_other.at(col.name);
                std::vector<Column> indicators;
                for (const std::string& value : kept) {
                    indicators.push_back(
                        Column::numeric(col.name + "=" + value,
                                        std::vector<double>(col.cat.size(), 0.0)));
                }
                if (other) {
                    indicators.push_back(
                        Column::numeric(col.name + "=__other__",
                                        std::vector<double>(col.cat.size(), 0.0)));
                }
                for (std::size_t r = 0; r < col.cat.size(); ++r) {
                    if (!col.cat[r]) {
                        continue;  // missing rows leave all indicators at zero
                    }
                    const auto pos = std::find(kept.begin(), kept.end(), *col.cat[r]);
                    if (pos != kept.end()) {
                        indicators[pos - kept.begin()].num[r] = 1.0;
                    } else if (other) {
                        indicators.back().num[r] = 1.0;
                    }
                }
                for (Column& indicator : indicators) {
                    if (next.has_column(indicator.name)) {
                        throw SchemaError("one_hot indicator name collides: " + indicator.name);
                    }
                    next.columns.push_back(std::move(indicator));
                }
            }
            out = std::move(next);
            break;
        }
        case OpKind::FrequencyEncode: {
            const auto& state = std::get<FrequencyState>(op.state);
            for (const auto& [name, counts] : state.counts) {
                require_input(out, name, ColumnKind::Categorical);
                Column& col = out.column(name);
                std::vector<double> encoded(col.cat.size(), kMissing);
                for (std::size_t r = 0; r < col.cat.size(); ++r) {
                    if (col.cat[r]) {
                        const auto it = counts.find(*col.cat[r]);
                        encoded[r] = it == counts.end() ? 0.0 : it->second;
                    }
                }
                col.kind = ColumnKind::Numeric;
                col.num = std::move(encoded);
                col.cat.clear();
            }
            break;
        }
        case OpKind::TargetEncode: {
            const auto& state = std::get<TargetEncodeState>(op.state);
            for (const auto& [name, enc] : state.encoding) {
                require_input(out, name, ColumnKind::Categorical);
                Column& col = out.column(name);
                std::vector<double> encoded(col.cat.size(), kMissing);
                for (std::size_t r = 0; r < col.cat.size(); ++r) {
                    if (col.cat[r]) {
                        const auto it = enc.find(*col.cat[r]);
                        encoded[r] = it == enc.end() ? state.global_mean : it->second;
                    }
                }
                col.kind = ColumnKind::Numeric;
                col.num = std::move(encoded);
                col.cat.clear();
            }
            break;
        }
        case OpKind::Arithmetic: {
            require_input(out, spec.inputs[0], ColumnKind::Numeric);
            require_input(out, spec.inputs[1], ColumnKind::Numeric);
            if (out.has_column(spec.outputs[0])) {
                throw SchemaError("arithmetic output already exists: " + spec.outputs[0]);
            }
            const Column& a = out.column(spec.inputs[0]);
            const Column& b = out.column(spec.inputs[1]);
            const std::string kind = spec.params.at("op").get<std::string>();
            std::vector<double> result(a.num.size(), kMissing);
            for (std::size_t r = 0; r < a.num.size(); ++r) {
                if (std::isnan(a.num[r]) || std::isnan(b.num[r])) {
                    continue;
                }
                double v = kMissing;
                if (kind == "+") {
                    v = a.num[r] + b.num[r];
                } else if (kind == "-") {
                    v = a.num[r] - b.num[r];
                } else if (kind == "*") {
                    v = a.num[r] * b.num[r];
                } else if (std::abs(b.num[r]) >= kSafeDivideEps) {
                    v = a.num[r] / b.num[r];
                }
                result[r] = sanitize_cell(v);
            }
            out.columns.push_back(Column::numeric(spec.outputs[0], std::move(result)));
            break;
        }
        case OpKind::Unary: {
            require_input(out, spec.inputs[0], ColumnKind::Numeric);
            const std::string fn = spec.params.at("fn").get<std::string>();
            const Column& in = out.column(spec.inputs[0]);
            std::vector<double> result(in.num.size(), kMissing);
            for (std::size_t r = 0; r < in.num.size(); ++r) {
                const double x = in.num[r];
                if (std::isnan(x)) {
                    continue;
                }
                double v = kMissing;
                if (fn == "sin") {
                    v = std::sin(x);
                } else if (fn == "cos") {
                    v = std::cos(x);
                } else if (fn == "sqrt") {
                    v = x >= 0 ? std::sqrt(x) : kMissing;
                } else if (fn == "square") {
                    v = x * x;
                } else {
                    v = std::abs(x);
                }
                result[r] = sanitize_cell(v);
            }
            if (spec.outputs.empty()) {
                out.column(spec.inputs[0]).num = std::move(result);
            } else {
                if (out.has_column(spec.outputs[0])) {
                    throw SchemaError("unary output already exists: " + spec.outputs[0]);
                }
                out.columns.push_back(Column::numeric(spec.outputs[0], std::move(result)));
            }
            break;
        }
        case OpKind::CyclicEncode: {
            require_input(out, spec.inputs[0], ColumnKind::Numeric);
            const double period = spec.params.at("period").get<double>();
            const std::string sin_name =
                spec.outputs.empty() ? spec.inputs[0] + "_sin" : spec.outputs[0];
            const std::string cos_name =
                spec.outputs.empty() ? spec.inputs[0] + "_cos" : spec.outputs[1];
            for (const std::string& name : {sin_name, cos_name}) {
                if (out.has_column(name)) {
                    throw SchemaError("cyclic_encode output already exists: " + name);
                }
            }
            const Column& in = out.column(spec.inputs[0]);
            std::vector<double> s(in.num.size(), kMissing), c(in.num.size(), kMissing);
            constexpr double kTwoPi = 6.283185307179586476925286766559;
            for (std::size_t r = 0; r < in.num.size(); ++r) {
                if (!std::isnan(in.num[r])) {
                    const double angle = kTwoPi * in.num[r] / period;
                    s[r] = sanitize_cell(std::sin(angle));
                    c[r] = sanitize_cell(std::cos(angle));
                }
            }
            out.columns.push_back(Column::numeric(sin_name, std::move(s)));
            out.columns.push_back(Column::numeric(cos_name, std::move(c)));
            break;
        }
        case OpKind::Bin: {
            const auto& state = std::get<BinState>(op.state);
            for (const auto& [name, edges] : state.edges) {
                require_input(out, name, ColumnKind::Numeric);
                for (double& v : out.column(name).num) {
                    if (!std::isnan(v)) {
                        v = static_cast<double>(
                            std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
                    }
                }
            }
            break;
        }
        case OpKind::SelectKBest:
        case OpKind::DropColumns:
        case OpKind::DropZeroVariance: {
            out = drop_columns_from(out, std::get<DropState>(op.state).drop);
            break;
        }
    }
    return out;
}

Pipeline fit_pipeline(const std::vector<OperationSpec>& specs, const DataTable& train) {
    Pipeline pipeline;
    DataTable current = train;
    for (const OperationSpec& spec : specs) {
        FittedOperation fitted = fit_operation(spec, current);
        current = apply_operation(fitted, current);
        pipeline.push_back(std::move(fitted));
    }
    return pipeline;
}

DataTable apply_pipeline(const Pipeline& pipeline, const DataTable& table) {
    DataTable current = table;
    for (const FittedOperation& op : pipeline) {
        current = apply_operation(op, current);
    }
    return current;
}

std::vector<OperationSpec> pipeline_specs(const Pipeline& pipeline) {
    std::vector<OperationSpec> specs;
    specs.reserve(pipeline.size());
    for (const FittedOperation& op : pipeline) {
        specs.push_back(op.spec);
    }
    return specs;
}

}  // namespace tandem
