#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "shipfreq/estimation.hpp"
#include "shipfreq/panel.hpp"
#include "shipfreq/procurement.hpp"
#include "shipfreq/statics.hpp"

namespace shipfreq::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_roundtrip_failed = 1,
    exit_validation = 2,
    exit_numerical = 3,
    exit_internal = 4,
};

enum class Command { solve, statics, simulate, estimate, roundtrip };

std::string_view to_string(Command c);
Command parse_command(std::string_view name);

/// Sectioned key-value settings read from an INI file. Keys before the
/// first section belong to section "run". Every lookup marks the key as
/// used so that misspelt keys can be reported.
class ConfigFile {
public:
    static ConfigFile load(const std::filesystem::path& path);
    static ConfigFile parse(std::istream& in, const std::string& source);

    /// "section.key=value"; the key may itself contain dots.
    void set(std::string_view assignment);

    bool has_section(const std::string& section) const;
    void require_section(const std::string& section) const;

    std::optional<std::string> text(const std::string& section, const std::string& key);
    std::string text(const std::string& section, const std::string& key, const std::string& fallback);
    std::string required_text(const std::string& section, const std::string& key);
    double number(const std::string& section, const std::string& key, double fallback);
    double required_number(const std::string& section, const std::string& key);
    std::int64_t integer(const std::string& section, const std::string& key, std::int64_t fallback);
    bool boolean(const std::string& section, const std::string& key, bool fallback);
    /// Comma-separated list with blanks trimmed.
    std::optional<std::vector<std::string>> list(const std::string& section, const std::string& key);
    /// All entries of a free-form section, marked used.
    std::map<std::string, std::string> entries(const std::string& section);

    /// Throws ValidationError for unused keys in `sections`.
    void reject_unused(const std::vector<std::string>& sections) const;

    /// "section.key = value" lines in sorted order.
    std::string echo() const;

    const std::filesystem::path& base_dir() const { return base_dir_; }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
    mutable std::set<std::pair<std::string, std::string>> used_;
    std::string source_;
    std::filesystem::path base_dir_;
};

ModelParams read_model(ConfigFile& config);
ModelVariant read_variant(ConfigFile& config);
ParameterGrid read_grid(ConfigFile& config);
DgpConfig read_dgp(ConfigFile& config, std::uint64_t seed);
EstimationSpec read_estimation(ConfigFile& config);
PpmlOptions read_ppml_options(ConfigFile& config);

/// One row of the planted-versus-recovered comparison.
struct RecoveryRow {
    std::string term;
    double planted = 0.0;
    double estimate = 0.0;
    double se = 0.0;
    double z = 0.0;
    bool omitted = false;
};

std::vector<RecoveryRow> compare_plants(const EstimateResult& result,
                                        const std::map<std::string, double>& betas);
std::string recovery_csv(const std::vector<RecoveryRow>& rows);

/// Single-line CSV record of a solution, with header.
std::string solution_csv(const ModelSolution& s);

/// Full command line without the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace shipfreq::cli
