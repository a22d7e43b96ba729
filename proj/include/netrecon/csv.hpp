#pragma once

// Minimal CSV reading/writing. Fields are comma-separated without quoting
// (identifiers and numbers only); lines starting with '#' carry artifact
// metadata such as the config fingerprint and are kept separate from rows.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "netrecon/common.hpp"

namespace netrecon {

struct CsvFile {
  std::vector<std::string> comments;              // '#' lines, in order, without '#'
  std::vector<std::vector<std::string>> rows;     // includes the header row if any
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.back() == ' ' || f.back() == '\r')) f.pop_back();
    std::size_t i = 0;
    while (i < f.size() && f[i] == ' ') ++i;
    f.erase(0, i);
  }
  return out;
}

inline CsvFile read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("MissingInput", "cannot open " + path);
  CsvFile csv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      csv.comments.push_back(line.substr(1));
      continue;
    }
    csv.rows.push_back(split_csv_line(line));
  }
  return csv;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) fail("WriteFailed", "cannot open " + path + " for writing");
    path_ = path;
  }
  void comment(const std::string& text) { out_ << '#' << text << '\n'; }
  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }
  void close() {
    out_.close();
    if (!out_) fail("WriteFailed", "error writing " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace netrecon
