#include "tandem/metafeat.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "tandem/feops.hpp"

namespace tandem {
namespace {

constexpr std::uint32_t kPairwiseSampleSeed = 0x6d657461u;
constexpr std::size_t kPairwiseSampleCap = 20;

struct NumericStats {
    std::size_t finite = 0;
    double variance = 0.0;
    double skew = 0.0;
    double kurtosis = 0.0;  // excess
};

NumericStats numeric_stats(const std::vector<double>& cells) {
    NumericStats stats;
    std::vector<double> values;
    values.reserve(cells.size());
    for (double v : cells) {
        if (!std::isnan(v)) {
            values.push_back(v);
        }
    }
    stats.finite = values.size();
    if (values.size() < 2) {
        return stats;
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double v : values) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    stats.variance = m2;
    if (m2 > 1e-24) {
        stats.skew = m3 / std::pow(m2, 1.5);
        stats.kurtosis = m4 / (m2 * m2) - 3.0;
    }
    return stats;
}

double pearson_present(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isnan(a[i]) && !std::isnan(b[i])) {
            x.push_back(a[i]);
            y.push_back(b[i]);
        }
    }
    if (x.size() < 2) {
        return 0.0;
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx < 1e-24 || syy < 1e-24) {
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) {
        return 0.0;
    }
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double mean = mean_of(v);
    double var = 0.0;
    for (double x : v) {
        var += (x - mean) * (x - mean);
    }
    return std::sqrt(var / v.size());
}

double max_of(const std::vector<double>& v) {
    if (v.empty()) {
        return 0.0;
    }
    return *std::max_element(v.begin(), v.end());
}

}  // namespace

const std::array<std::string, kMetaFeatureCount>& meta_feature_names() {
    static const std::array<std::string, kMetaFeatureCount> names = {
        "log_rows",
        "log_feature_columns",
        "numeric_fraction",
        "categorical_fraction",
        "missing_ratio",
        "zero_variance_fraction",
        "skewness_mean",
        "skewness_std",
        "skewness_max",
        "kurtosis_mean",
        "kurtosis_std",
        "kurtosis_max",
        "categorical_cardinality_mean",
        "target_correlation_mean",
        "target_correlation_max",
        "target_entropy_or_cv",
        "pairwise_correlation_mean",
        "feature_row_ratio",
    };
    return names;
}

MetaFeatureVector compute_meta_features(const DataTable& table) {
    validate_table(table);
    MetaFeatureVector meta;
    auto& out = meta.values;

    const std::size_t rows = table.n_rows();
    // Sorted feature names make every aggregate independent of column order.
    std::vector<std::string> features = table.feature_names();
    std::sort(features.begin(), features.end());

    std::vector<std::string> numeric_names, categorical_names;
    for (const std::string& name : features) {
        if (table.column(name).kind == ColumnKind::Numeric) {
            numeric_names.push_back(name);
        } else {
            categorical_names.push_back(name);
        }
    }

    out[0] = std::log(static_cast<double>(rows));
    out[1] = features.empty() ? 0.0 : std::log(static_cast<double>(features.size()));
    out[2] = features.empty()
                 ? 0.0
                 : static_cast<double>(numeric_names.size()) / features.size();
    out[3] = features.empty()
                 ? 0.0
                 : static_cast<double>(categorical_names.size()) / features.size();

    std::size_t missing = 0;
    std::size_t zero_variance = 0;
    std::vector<double> abs_skews, kurtoses, target_correlations;
    const std::vector<double> target = numeric_coded_target(table);

    for (const std::string& name : numeric_names) {
        const Column& col = table.column(name);
        for (std::size_t r = 0; r < rows; ++r) {
            if (col.missing(r)) {
                ++missing;
            }
        }
        const NumericStats stats = numeric_stats(col.num);
        if (stats.finite <= 1 || stats.variance < 1e-24) {
            ++zero_variance;
        }
        abs_skews.push_back(std::abs(stats.skew));
        kurtoses.push_back(stats.kurtosis);
        target_correlations.push_back(std::abs(pearson_present(col.num, target)));
    }

    std::vector<double> cardinalities;
    for (const std::string& name : categorical_names) {
        const Column& col = table.column(name);
        std::map<std::string, std::size_t> distinct;
        for (std::size_t r = 0; r < rows; ++r) {
            if (col.missing(r)) {
                ++missing;
            } else {
                ++distinct[*col.cat[r]];
            }
        }
        if (distinct.size() <= 1) {
            ++zero_variance;
        }
        cardinalities.push_back(static_cast<double>(distinct.size()));
    }

    out[4] = features.empty()
                 ? 0.0
                 : static_cast<double>(missing) / (rows * features.size());
    out[5] = features.empty()
                 ? 0.0
                 : static_cast<double>(zero_variance) / features.size();
    out[6] = mean_of(abs_skews);
    out[7] = std_of(abs_skews);
    out[8] = max_of(abs_skews);
    out[9] = mean_of(kurtoses);
    out[10] = std_of(kurtoses);
    out[11] = kurtoses.empty() ? 0.0 : *std::max_element(kurtoses.begin(), kurtoses.end());
    out[12] = mean_of(cardinalities);
    out[13] = mean_of(target_correlations);
    out[14] = max_of(target_correlations);

    if (table.task == TaskKind::Classification) {
        std::map<double, std::size_t> counts;
        for (double v : target) {
            ++counts[v];
        }
        double entropy = 0.0;
        for (const auto& [label, count] : counts) {
            (void)label;
            const double p = static_cast<double>(count) / rows;
            entropy -= p * std::log(p);
        }
        out[15] = entropy;
    } else {
        const double mean = mean_of(target);
        const double stddev = std_of(target);
        out[15] = std::abs(mean) < 1e-12 ? 0.0 : stddev / std::abs(mean);
    }

    // Mean absolute pairwise correlation over a capped numeric sample.
    std::vector<std::string> sample = numeric_names;
    if (sample.size() > kPairwiseSampleCap) {
        std::vector<std::string> chosen;
        std::mt19937 rng(kPairwiseSampleSeed);
        std::sample(sample.begin(), sample.end(), std::back_inserter(chosen),
                    kPairwiseSampleCap, rng);
        sample = std::move(chosen);
    }
    std::vector<double> pair_correlations;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        for (std::size_t j = i + 1; j < sample.size(); ++j) {
            pair_correlations.push_back(std::abs(
                pearson_present(table.column(sample[i]).num, table.column(sample[j]).num)));
        }
    }
    out[16] = mean_of(pair_correlations);
    out[17] = static_cast<double>(features.size()) / rows;

    for (double& v : out) {
        if (!std::isfinite(v)) {
            v = 0.0;
        }
    }
    return meta;
}

}  // namespace tandem
