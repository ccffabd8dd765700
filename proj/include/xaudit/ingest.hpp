#pragma once

#include "xaudit/dataset.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace xaudit {

/// Converts ProPublica's compas-scores-two-years.csv into the numeric layout
/// expected by compas_schema(). Returns the number of rows written.
std::size_t ingest_compas(const std::filesystem::path& raw, const std::filesystem::path& out);

/// Converts the UCI german.data file (space separated, coded categoricals)
/// into a numeric CSV. Returns the number of rows written.
std::size_t ingest_german(const std::filesystem::path& raw, const std::filesystem::path& out);

std::vector<FeatureMeta> compas_schema();
std::vector<FeatureMeta> german_schema();

}  // namespace xaudit
