#include "nmsynth/csv.hpp"

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nmsynth {

std::string DataError::format(const std::string& file, long row, const std::string& what) {
  std::ostringstream os;
  os << file;
  if (row > 0) os << ":" << row;
  os << ": " << what;
  return os.str();
}

namespace {

std::vector<std::string> split_record(const std::string& line, const std::string& source, long file_row) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      if (!field.empty()) throw DataError(source, file_row, "unexpected quote inside unquoted field");
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
    ++i;
  }
  if (quoted) throw DataError(source, file_row, "unterminated quoted field");
  out.push_back(field);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

CsvTable CsvTable::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path, 0, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path);
}

CsvTable CsvTable::from_string(const std::string& text, const std::string& name) {
  CsvTable t;
  t.source_ = name;
  std::istringstream in(text);
  std::string line;
  long file_row = 0;
  while (std::getline(in, line)) {
    ++file_row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (file_row == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
      line.erase(0, 3);  // UTF-8 BOM
    }
    if (line.empty() && in.peek() == EOF) break;
    auto fields = split_record(line, name, file_row);
    if (file_row == 1) {
      for (auto& f : fields) t.header_.push_back(trim(f));
      for (std::size_t c = 0; c < t.header_.size(); ++c) t.index_.emplace(t.header_[c], c);
    } else {
      if (fields.size() != t.header_.size()) {
        std::ostringstream os;
        os << "expected " << t.header_.size() << " fields, found " << fields.size();
        throw DataError(name, file_row, os.str());
      }
      for (auto& f : fields) f = trim(f);
      t.cells_.push_back(std::move(fields));
    }
  }
  if (t.header_.empty()) throw DataError(name, 1, "missing header row");
  return t;
}

bool CsvTable::has_column(const std::string& name) const { return index_.count(name) > 0; }

std::size_t CsvTable::column(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError(source_, 1, "missing required column '" + name + "'");
  return it->second;
}

std::vector<std::size_t> CsvTable::column_family(const std::string& prefix) const {
  std::vector<std::size_t> cols;
  for (int i = 1;; ++i) {
    auto it = index_.find(prefix + std::to_string(i));
    if (it == index_.end()) break;
    cols.push_back(it->second);
  }
  return cols;
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  const std::string& s = cells_[row][col];
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw DataError(source_, file_row(row), "column '" + header_[col] + "': not a number: '" + s + "'");
  }
  return v;
}

long CsvTable::integer(std::size_t row, std::size_t col) const {
  const std::string& s = cells_[row][col];
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw DataError(source_, file_row(row), "column '" + header_[col] + "': not an integer: '" + s + "'");
  }
  return v;
}

std::string csv_join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n") != std::string::npos) {
      out.push_back('"');
      for (char c : f) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
      }
      out.push_back('"');
    } else {
      out += f;
    }
  }
  out.push_back('\n');
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace nmsynth
