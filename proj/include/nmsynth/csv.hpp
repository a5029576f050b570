#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmsynth {

// Error raised for malformed or inconsistent input files. Carries the
// file and 1-based row so callers can point at the offending line.
class DataError : public std::runtime_error {
public:
  DataError(std::string file, long row, const std::string& what)
      : std::runtime_error(format(file, row, what)), file_(std::move(file)), row_(row) {}
  const std::string& file() const { return file_; }
  long row() const { return row_; }

private:
  static std::string format(const std::string& file, long row, const std::string& what);
  std::string file_;
  long row_;
};

// Comma-delimited UTF-8 table with a mandatory header row. Fields may be
// double-quoted; quotes inside quoted fields are doubled (RFC 4180 subset).
class CsvTable {
public:
  static CsvTable read_file(const std::string& path);
  static CsvTable from_string(const std::string& text, const std::string& name = "<string>");

  const std::string& source() const { return source_; }
  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return cells_.size(); }

  bool has_column(const std::string& name) const;
  // Throws DataError when the column is missing.
  std::size_t column(const std::string& name) const;
  // Columns whose header matches prefix1, prefix2, ... in order; stops at the
  // first gap. Used for x1..xp / xbar1..xbarp / z1..zm families.
  std::vector<std::size_t> column_family(const std::string& prefix) const;

  const std::string& cell(std::size_t row, std::size_t col) const { return cells_[row][col]; }
  std::string get(std::size_t row, const std::string& col) const { return cells_[row][column(col)]; }

  // Typed accessors; throw DataError naming file/row on parse failure.
  double number(std::size_t row, std::size_t col) const;
  long integer(std::size_t row, std::size_t col) const;

  // 1-based file line of a data row (header is line 1).
  long file_row(std::size_t row) const { return static_cast<long>(row) + 2; }

private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> cells_;
  std::map<std::string, std::size_t> index_;
};

// Writes one CSV row, quoting fields that need it.
std::string csv_join(const std::vector<std::string>& fields);

// Fixed, locale-independent float formatting used for every file this
// project writes, so identical runs produce byte-identical outputs.
std::string format_double(double v);

}  // namespace nmsynth
