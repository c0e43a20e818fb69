#pragma once

#include <string>
#include <vector>

namespace linft {

/// Formats a double with 12 significant digits, locale-independent.
std::string format_sig(double v);

/// RFC-4180 field quoting (quotes only when the field needs it).
std::string csv_field(const std::string& raw);

/// Minimal CSV builder: comment line, header, rows; LF line endings.
class CsvBuilder {
 public:
  void comment(const std::string& text);
  void row(const std::vector<std::string>& fields);
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

/// Writes content to path, creating parent directories when needed.
void write_file(const std::string& path, const std::string& content);

}  // namespace linft
