#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace auxskip {

// Shortest decimal text that round-trips the double ("nan", "inf", "-inf"
// for non-finite values).
std::string format_double(double v);

// RFC 4180 style writer; fields containing separators or quotes are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  void comment(const std::string& line) { os_ << "# " << line << '\n'; }
  void row(const std::vector<std::string>& cells);

 private:
  std::ostream& os_;
};

}  // namespace auxskip
