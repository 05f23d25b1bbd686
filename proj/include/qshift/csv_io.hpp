#pragma once

#include "qshift/sample.hpp"

namespace qshift {

// Reads a CSV with header {time?, y, x1..xp}; the optional leading time/date
// column is ignored (rows are observed at i/n). Without covariate columns the
// design is the all-ones column. log_transform applies natural log to y after
// a positivity check.
RegressionSample ingest_csv(const std::string& path, bool log_transform);

// RFC-4180 CSV with '.' decimals, '\n' line endings and 17 significant
// digits; written atomically (temp file + rename).
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

std::string format_double(double v);  // shortest 17-significant-digit form

// Writes a RegressionSample back out as y,x1..xp columns.
void export_sample(const std::string& path, const RegressionSample& sample);

}  // namespace qshift
