#ifndef CPSYS_IO_HPP_
#define CPSYS_IO_HPP_

#include <cerrno>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cpsys/band.hpp"
#include "cpsys/error.hpp"
#include "cpsys/sample.hpp"
#include "cpsys/step_cdf.hpp"

namespace cps::io {

using json = nlohmann::json;

// Shortest exact text for a double: 17 significant digits always round-trip.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      if (!cur.empty() || was_quoted) throw DataError("row " + std::to_string(row) + ": stray quote");
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      if (was_quoted) throw DataError("row " + std::to_string(row) + ": text after closing quote");
      cur.push_back(c);
    }
  }
  if (quoted) throw DataError("row " + std::to_string(row) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline double parse_number(const std::string& text, std::size_t row, std::string_view column) {
  std::size_t b = 0, e = text.size();
  while (b < e && (text[b] == ' ' || text[b] == '\t')) ++b;
  while (e > b && (text[e - 1] == ' ' || text[e - 1] == '\t')) --e;
  const std::string s = text.substr(b, e - b);
  if (s.empty()) {
    throw DataError("row " + std::to_string(row) + ", column '" + std::string(column) + "': empty value");
  }
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
    throw DataError("row " + std::to_string(row) + ", column '" + std::string(column) +
                    "': not a finite number: '" + s + "'");
  }
  return v;
}

// Reads a sample from CSV with header columns x, y and optional weight (any
// order; other columns are ignored). Rows are numbered from 1 after the header.
inline WeightedSample read_sample_csv(std::istream& in, const std::string& source = "input") {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const std::vector<std::string> header = split_csv_line(line, 0);
  std::optional<std::size_t> cx, cy, cw;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "x") cx = i;
    else if (header[i] == "y") cy = i;
    else if (header[i] == "weight") cw = i;
  }
  if (!cx) throw DataError(source + ": missing column 'x'");
  if (!cy) throw DataError(source + ": missing column 'y'");
  std::vector<double> x, y, w;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line, row);
    if (f.size() != header.size()) {
      throw DataError(source + ": row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    try {
      x.push_back(parse_number(f[*cx], row, "x"));
      y.push_back(parse_number(f[*cy], row, "y"));
      const double wt = cw ? parse_number(f[*cw], row, "weight") : 1.0;
      if (wt < 0.0) throw DataError("row " + std::to_string(row) + ", column 'weight': negative weight");
      w.push_back(wt);
    } catch (const DataError& e) {
      throw DataError(source + ": " + e.what());
    }
  }
  if (x.empty()) throw DataError(source + ": no data rows");
  try {
    return WeightedSample(std::move(x), std::move(y), std::move(w));
  } catch (const UsageError& e) {
    throw DataError(source + ": " + e.what());
  }
}

inline WeightedSample read_sample_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_sample_csv(in, path);
}

inline void write_sample_csv(std::ostream& out, const WeightedSample& s) {
  out << "x,y,weight\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << format_double(s.x()[i]) << ',' << format_double(s.y()[i]) << ',' << format_double(s.w()[i])
        << '\n';
  }
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << content;
  if (!out) throw UsageError("write failed for '" + path + "'");
}

inline void write_sample_csv(const std::string& path, const WeightedSample& s) {
  std::ostringstream os;
  write_sample_csv(os, s);
  write_text_file(path, os.str());
}

inline json to_json(const StepCDF& cdf) { return {{"jumps", cdf.jumps()}, {"cum", cdf.cum()}}; }

inline json to_json(const StepFunction& f) {
  return {{"base", f.base()}, {"jumps", f.jumps()}, {"levels", f.levels()}};
}

// Bounds as separate step functions, the training outcome range, and the
// support interval widened by the cutoff.
inline json to_json(const PredictiveBand& band, double support_cutoff = kDefaultSupportCutoff) {
  const OutcomeRange r = band.outcome_range();
  return {{"lower", to_json(band.lower())},
          {"upper", to_json(band.upper())},
          {"outcome_range", {r.lo, r.hi}},
          {"support", {r.lo - support_cutoff, r.hi + support_cutoff}}};
}

inline std::vector<double> json_doubles(const json& j, const char* what) {
  if (!j.is_array()) throw DataError(std::string("expected an array for '") + what + "'");
  std::vector<double> out;
  out.reserve(j.size());
  for (const json& v : j) {
    if (!v.is_number()) throw DataError(std::string("non-numeric entry in '") + what + "'");
    out.push_back(v.get<double>());
  }
  return out;
}

inline StepCDF step_cdf_from_json(const json& j) {
  try {
    return StepCDF(json_doubles(j.at("jumps"), "jumps"), json_doubles(j.at("cum"), "cum"));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed CDF: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid CDF: ") + e.what());
  }
}

inline StepFunction step_function_from_json(const json& j) {
  try {
    return StepFunction(j.at("base").get<double>(), json_doubles(j.at("jumps"), "jumps"),
                        json_doubles(j.at("levels"), "levels"));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed step function: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid step function: ") + e.what());
  }
}

inline PredictiveBand band_from_json(const json& j) {
  try {
    const json& r = j.at("outcome_range");
    return PredictiveBand(step_function_from_json(j.at("lower")), step_function_from_json(j.at("upper")),
                          {r.at(0).get<double>(), r.at(1).get<double>()});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed band: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid band: ") + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace cps::io

#endif  // CPSYS_IO_HPP_
