#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "tandem/tabular.hpp"

namespace tandem {

// Fixed-length dataset descriptor. The engine computes one per dataset
// state (on its train split) and feeds it to the surrogate next to encoded
// hyperparameters, so length and entry order never change.
inline constexpr std::size_t kMetaFeatureCount = 18;

struct MetaFeatureVector {
    std::array<double, kMetaFeatureCount> values{};

    double operator[](std::size_t i) const { return values[i]; }
};

// Entry names in vector order, for logs and reports.
const std::array<std::string, kMetaFeatureCount>& meta_feature_names();

// Conventions: undefined statistics are 0; every entry is finite; column
// aggregation runs in sorted-name order so column order never matters; the
// pairwise-correlation entry samples at most 20 numeric columns with a
// fixed internal seed.
MetaFeatureVector compute_meta_features(const DataTable& table);

}  // namespace tandem
