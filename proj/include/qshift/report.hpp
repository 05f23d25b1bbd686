#pragma once

#include "qshift/testing.hpp"

namespace qshift {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr const char* kReportSchemaVersion = "1";

// Serializes a test report to the structured document format (JSON with a
// stable field order and a schema version).
std::string emit_report(const TestReport& report);

// Parses an emitted report back into the generic document and re-serializes;
// used for round-trip validation.
std::string reserialize_report(const std::string& doc);

// Band curves of an SCB result as (t, center, lo, hi) rows.
void write_band_csv(const std::string& path, const ScbResult& scb);

// Writes the emitted document atomically.
void write_report(const std::string& path, const TestReport& report);

}  // namespace qshift
