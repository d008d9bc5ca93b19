#pragma once

#include <cstdio>
#include <ostream>
#include <string>

namespace advdyn::csv {

/// Shortest text that round-trips the double (%.17g); "nan"/"inf" pass through.
inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// First line of every emitted CSV: "# advdyn-csv <kind> v<version>".
inline void write_schema(std::ostream& os, const std::string& kind, int version) {
  os << "# advdyn-csv " << kind << " v" << version << '\n';
}

/// RFC 4180 quoting for a text field.
inline std::string field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace advdyn::csv
