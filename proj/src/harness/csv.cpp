#include "fpdm/harness/csv.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "fpdm/errors.hpp"

namespace fpdm::harness {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << csv_field(fields[i]);
  }
  os << '\n';
}

bool read_csv_row(std::istream& is, std::vector<std::string>& fields) {
  fields.clear();
  if (is.peek() == std::char_traits<char>::eof()) return false;
  std::string cur;
  bool quoted = false, any = false;
  char c;
  while (is.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (is.peek() == '"') {
          is.get(c);
          cur += '"';
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      if (is.peek() == '\n') is.get(c);
      break;
    } else {
      cur += c;
    }
  }
  if (quoted) throw UsageError("CSV: unterminated quoted field");
  if (!any) return false;
  fields.push_back(std::move(cur));
  return true;
}

CsvTable read_csv(std::istream& is) {
  CsvTable t;
  if (!read_csv_row(is, t.header)) throw UsageError("CSV: missing header row");
  std::vector<std::string> row;
  while (read_csv_row(is, row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != t.header.size()) {
      throw UsageError("CSV: row has " + std::to_string(row.size()) + " fields, header has " +
                       std::to_string(t.header.size()));
    }
    t.rows.push_back(row);
  }
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  return read_csv(in);
}

}  // namespace fpdm::harness
