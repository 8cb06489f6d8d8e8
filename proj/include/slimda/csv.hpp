#pragma once

#include <string>
#include <vector>

namespace slimda {

/// RFC-4180 style writer: comma separated, LF line endings, fields quoted
/// only when they contain a comma, quote or newline.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    /// Throws ConfigError if the field count differs from the header.
    void row(const std::vector<std::string>& fields);
    const std::string& str() const noexcept { return text_; }
    std::size_t row_count() const noexcept { return rows_; }

    static std::string escape(const std::string& field);

private:
    void append(const std::vector<std::string>& fields);

    std::size_t columns_;
    std::size_t rows_ = 0;
    std::string text_;
};

/// Fixed "%.10g" formatting so reports are byte-stable.
std::string csv_real(double v);

/// Splits one CSV document into rows of unescaped fields.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

} // namespace slimda
