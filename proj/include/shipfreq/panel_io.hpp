#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "shipfreq/panel.hpp"

namespace shipfreq {

/// Required panel columns, in file order. Files may carry the trade-value
/// columns ln_pershipment_value, ln_export_value and ln_export_weight after
/// these; empty fields mean "absent".
const std::vector<std::string>& panel_columns();
const std::vector<std::string>& optional_panel_columns();

void write_panel(const Panel& panel, std::ostream& out);
void write_panel(const Panel& panel, const std::filesystem::path& path);

/// Throws ValidationError with the line number on a malformed row and
/// naming the key on a duplicate cell. `source` prefixes messages.
Panel read_panel(std::istream& in, const std::string& source = "panel");
Panel read_panel(const std::filesystem::path& path);

void write_countries(const std::vector<CountryProfile>& countries, std::ostream& out);
void write_countries(const std::vector<CountryProfile>& countries, const std::filesystem::path& path);

/// Shortest representation that reads back to the same double.
std::string format_double(double value);

}  // namespace shipfreq
