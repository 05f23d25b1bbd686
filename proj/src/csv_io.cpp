#include "qshift/csv_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace qshift {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, int row, int col) {
  const std::string s = trim(field);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ParseError, "row " + std::to_string(row) + ", column " +
                                           std::to_string(col) + ": '" + s +
                                           "' is not numeric");
  }
}

bool is_time_column(const std::string& name) {
  std::string low;
  for (const char c : name) low += static_cast<char>(std::tolower(c));
  return low == "time" || low == "date" || low == "t" || low == "index";
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

RegressionSample ingest_csv(const std::string& path, bool log_transform) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorKind::ParseError, "'" + path + "' is empty");
  const std::vector<std::string> header = split_csv_line(line);

  int y_col = -1;
  std::vector<int> x_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    std::string low;
    for (const char ch : name) low += static_cast<char>(std::tolower(ch));
    if (low == "y") y_col = static_cast<int>(c);
    else if (!low.empty() && low[0] == 'x') x_cols.push_back(static_cast<int>(c));
    else if (!is_time_column(low) && !low.empty())
      throw Error(ErrorKind::ParseError, "unrecognized column '" + name + "'");
  }
  if (y_col < 0) throw Error(ErrorKind::ParseError, "no 'y' column in '" + path + "'");

  std::vector<double> ys;
  std::vector<std::vector<double>> xs;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error(ErrorKind::ParseError,
                  "row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    ys.push_back(parse_number(fields[static_cast<std::size_t>(y_col)], row, y_col + 1));
    std::vector<double> xrow;
    for (const int c : x_cols)
      xrow.push_back(parse_number(fields[static_cast<std::size_t>(c)], row, c + 1));
    xs.push_back(std::move(xrow));
  }
  const int n = static_cast<int>(ys.size());
  if (n == 0) throw Error(ErrorKind::ParseError, "'" + path + "' has no data rows");

  RegressionSample sample;
  sample.y.resize(n);
  const int p = x_cols.empty() ? 1 : static_cast<int>(x_cols.size());
  sample.X.resize(n, p);
  for (int i = 0; i < n; ++i) {
    double y = ys[static_cast<std::size_t>(i)];
    if (log_transform) {
      if (!(y > 0.0))
        throw Error(ErrorKind::NonPositiveForLog,
                    "row " + std::to_string(i + 2) + ": y = " + format_double(y));
      y = std::log(y);
    }
    sample.y(i) = y;
    if (x_cols.empty()) {
      sample.X(i, 0) = 1.0;
    } else {
      for (int j = 0; j < p; ++j)
        sample.X(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return sample;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::ParseError, "cannot write '" + path + "'");
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c) out << ',';
      out << quote_if_needed(header[c]);
    }
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (c) out << ',';
        out << format_double(r[c]);
      }
      out << '\n';
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw Error(ErrorKind::ParseError, "rename failed for '" + path + "'");
}

void export_sample(const std::string& path, const RegressionSample& sample) {
  std::vector<std::string> header{"y"};
  for (int j = 1; j <= sample.p(); ++j) header.push_back("x" + std::to_string(j));
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(sample.n()));
  for (int i = 0; i < sample.n(); ++i) {
    std::vector<double> r{sample.y(i)};
    for (int j = 0; j < sample.p(); ++j) r.push_back(sample.X(i, j));
    rows.push_back(std::move(r));
  }
  write_csv(path, header, rows);
}

}  // namespace qshift
