#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace sampleval::io {

/// Minimal comma-separated reader for the flat, unquoted layouts this project
/// reads and writes. Errors carry the file name and 1-based line number.
class CsvReader {
 public:
  CsvReader(std::istream& in, std::string source_name);

  /// Header fields (first line).
  const std::vector<std::string>& header() const { return header_; }
  /// Index of a header column, or throws naming the missing column.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;

  /// Reads the next non-empty row; false at end of input.
  bool next(std::vector<std::string_view>& fields);
  std::size_t line() const { return line_; }

  /// Throws Error("<source>:<line>: <what>").
  [[noreturn]] void fail(std::string_view what) const;

 private:
  std::istream& in_;
  std::string source_;
  std::string buffer_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

double parse_double(std::string_view field, const CsvReader& at);
long long parse_int(std::string_view field, const CsvReader& at);

/// Hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Writes `contents` to `path` (creating parent directories).
void write_file(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Fixed-format decimal rendering used in every CSV this project writes, so
/// output bytes do not depend on stream state or locale.
std::string format_double(double v, int digits = 12);

}  // namespace sampleval::io
