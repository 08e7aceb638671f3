#pragma once

// RFC-4180 CSV reading and writing. A header row is required; every record
// must have as many fields as the header.

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "seqsynth/error.hpp"

namespace seqsynth {

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

// Splits text into records of fields. Returns the 1-based line on which each
// record starts, for diagnostics.
inline std::vector<std::vector<std::string>> split_csv(std::string_view text,
                                                       std::vector<std::size_t>& record_lines,
                                                       std::string_view source) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    const bool blank_line = record.empty() && field.empty() && !field_started;
    end_field();
    if (!blank_line) {
      records.push_back(std::move(record));
      record_lines.push_back(record_line);
    }
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started || !field.empty()) {
          throw Error(ErrorCode::ParseError, std::string(source) + ":" + std::to_string(line) +
                                                 ": stray quote inside unquoted field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        [[fallthrough]];
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::ParseError,
                std::string(source) + ":" + std::to_string(record_line) + ": unterminated quoted field");
  }
  if (!field.empty() || field_started || !record.empty()) end_record();
  return records;
}

inline bool needs_quotes(std::string_view field) {
  return field.find_first_of(",\"\r\n") != std::string_view::npos;
}

}  // namespace detail

inline RawTable parse_csv(std::string_view text, std::string_view source = "<csv>") {
  std::vector<std::size_t> lines;
  auto records = detail::split_csv(text, lines, source);
  if (records.empty()) throw Error(ErrorCode::ParseError, std::string(source) + ": missing header row");
  RawTable table;
  table.header = std::move(records.front());
  // Strip a UTF-8 byte order mark.
  if (!table.header.empty() && table.header.front().rfind("\xEF\xBB\xBF", 0) == 0) {
    table.header.front().erase(0, 3);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw Error(ErrorCode::ParseError,
                  std::string(source) + ":" + std::to_string(lines[r]) + ": expected " +
                      std::to_string(table.header.size()) + " fields, found " +
                      std::to_string(records[r].size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

inline RawTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), path);
}

inline void write_csv(std::ostream& out, const RawTable& table) {
  auto write_record = [&out](const std::vector<std::string>& record) {
    for (std::size_t i = 0; i < record.size(); ++i) {
      if (i > 0) out << ',';
      if (detail::needs_quotes(record[i])) {
        out << '"';
        for (char c : record[i]) {
          if (c == '"') out << '"';
          out << c;
        }
        out << '"';
      } else {
        out << record[i];
      }
    }
    out << '\n';
  };
  write_record(table.header);
  for (const auto& row : table.rows) write_record(row);
}

inline std::string to_csv_string(const RawTable& table) {
  std::ostringstream out;
  write_csv(out, table);
  return out.str();
}

inline void write_csv_file(const std::string& path, const RawTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  write_csv(out, table);
}

}  // namespace seqsynth
