#include "qshift/report.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "qshift/csv_io.hpp"

namespace qshift {

namespace {

using ordered_json = nlohmann::ordered_json;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ordered_json tuning_json(const TuningSelection& t) {
  ordered_json j;
  j["b_mean"] = t.b_mean;
  j["C_s"] = t.C_s;
  j["b_sit"] = t.b_sit;
  j["b_scb"] = t.b_scb;
  j["b_used"] = t.b_used;
  j["h"] = t.h;
  j["M_s"] = t.M_s;
  j["w_n"] = t.w_n;
  return j;
}

ordered_json reject_json(const std::map<double, bool>& m) {
  ordered_json j;
  for (const auto& [a, rej] : m) j[format_double(a)] = rej;
  return j;
}

}  // namespace

std::string emit_report(const TestReport& report) {
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["library_version"] = kLibraryVersion;

  ordered_json cfg;
  cfg["mode"] = report.mode == TestMode::SIT ? "sit" : "scb";
  cfg["dependence"] =
      report.dependence == Dependence::independent ? "independent" : "dependent";
  cfg["tau"] = report.tau;
  cfg["seed"] = report.seed;
  cfg["n1"] = report.n1;
  cfg["n2"] = report.n2;
  cfg["Q"] = report.Q;
  j["config"] = cfg;
  j["config_hash"] = fnv1a(cfg.dump());

  ordered_json shift;
  shift["d_tilde"] = report.shift.d_tilde;
  shift["d_hat"] = report.shift.d_hat;
  shift["a_hat"] = report.shift.a_hat;
  shift["b_hat"] = report.shift.b_hat;
  shift["eta"] = report.shift.eta;
  shift["window_lo"] = report.shift.window_lo;
  shift["window_hi"] = report.shift.window_hi;
  j["shift"] = shift;

  j["tuning1"] = tuning_json(report.tuning1);
  j["tuning2"] = tuning_json(report.tuning2);

  if (report.sit) {
    ordered_json s;
    s["T"] = report.sit->T;
    s["p_value"] = report.sit->p_value;
    s["Q"] = static_cast<int>(report.sit->boot.size());
    s["reject_at"] = reject_json(report.sit->reject_at);
    j["sit"] = s;
  }
  if (report.scb) {
    ordered_json s;
    s["alpha"] = report.scb->alpha;
    s["multiplier"] = report.scb->multiplier;
    s["zero_inside"] = report.scb->zero_inside;
    s["Q"] = static_cast<int>(report.scb->boot.size());
    s["reject_at"] = reject_json(report.scb->reject_at);
    j["scb"] = s;
  }

  j["warnings"] = report.warnings.messages;
  j["clip_count"] = report.warnings.clip_count;
  j["range_clamp_count"] = report.warnings.range_clamp_count;
  return j.dump(2) + "\n";
}

std::string reserialize_report(const std::string& doc) {
  const ordered_json j = ordered_json::parse(doc);
  return j.dump(2) + "\n";
}

void write_band_csv(const std::string& path, const ScbResult& scb) {
  std::vector<std::vector<double>> rows;
  rows.reserve(scb.grid.size());
  for (std::size_t k = 0; k < scb.grid.size(); ++k)
    rows.push_back({scb.grid[k], scb.center[k], scb.band_lo[k], scb.band_hi[k]});
  write_csv(path, {"t", "center", "lo", "hi"}, rows);
}

void write_report(const std::string& path, const TestReport& report) {
  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::ParseError, "cannot write '" + path + "'");
    out << emit_report(report);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw Error(ErrorKind::ParseError, "rename failed for '" + path + "'");
}

}  // namespace qshift
