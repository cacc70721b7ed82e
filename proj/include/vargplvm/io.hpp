#pragma once

#include "vargplvm/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace vargplvm {

// Comma-separated numbers, '.' decimal point, at most one header row. Empty
// fields are missing values and come back as NaN.
enum class HeaderMode { Auto, Yes, No };

struct CsvTable {
    std::vector<std::string> header;  // empty when the file has none
    MatrixXd values;

    BoolMatrix observed() const { return values.array().isFinite(); }
};

// Auto treats the first line as a header if any of its fields is non-empty
// and not a number. Throws IoError naming the line on a wrong field count or a
// field that is not a number.
CsvTable parse_csv(std::istream& in, const std::string& source, HeaderMode header = HeaderMode::Auto);
CsvTable read_csv(const std::string& path, HeaderMode header = HeaderMode::Auto);

// NaN is written as an empty field; other values with 17 significant digits.
void write_csv(std::ostream& out, const MatrixXd& values, const std::vector<std::string>& header = {});
void write_csv(const std::string& path, const MatrixXd& values, const std::vector<std::string>& header = {});

// Arrays in the model file are {rows, cols, data} with data row-major, either
// as a list of decimal numbers or as one base64 string of little-endian
// float64 values.
enum class ArrayEncoding { Decimal, Base64 };

std::string model_to_json(const Model& model, ArrayEncoding encoding = ArrayEncoding::Decimal);
Model model_from_json(const std::string& text);
void save_model(const std::string& path, const Model& model, ArrayEncoding encoding = ArrayEncoding::Decimal);
Model load_model(const std::string& path);

}  // namespace vargplvm
