#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fpdm::harness {

// RFC-4180 quoting: fields holding a comma, quote, CR or LF are wrapped in
// quotes with inner quotes doubled. Rows end with "\n".
std::string csv_field(const std::string& s);
void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

// Splits one record, honouring quoted fields (which may span lines).
// Returns false at end of input.
bool read_csv_row(std::istream& is, std::vector<std::string>& fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(std::istream& is);
CsvTable read_csv(const std::string& path);

}  // namespace fpdm::harness
