#pragma once

#include "levytree/mechanism.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace levytree::lab {

using json = nlohmann::json;

// ---- configuration -----------------------------------------------------

// Schema violations map to exit status 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class KeyType { integer, real, text, boolean, int_list, real_list };

struct KeySpec {
    std::string key;  // section.name
    KeyType type;
    std::string fallback;
    std::string help;
};

const std::vector<KeySpec>& schema();

struct ExperimentSpec {
    std::string name;
    std::string summary;
    bool stochastic;
};

const std::vector<ExperimentSpec>& experiments();
const ExperimentSpec* find_experiment(const std::string& name);

class LabConfig {
public:
    LabConfig() = default;

    // raw value with the schema default filled in
    std::string raw(const std::string& key) const;
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    long integer(const std::string& key) const;
    double real(const std::string& key) const;
    std::string text(const std::string& key) const { return raw(key); }
    bool boolean(const std::string& key) const;
    std::vector<long> int_list(const std::string& key) const;
    std::vector<double> real_list(const std::string& key) const;

    std::string experiment() const { return raw("experiment.name"); }
    std::vector<std::uint64_t> seeds() const;
    mechanism::MechanismDescriptor mechanism() const;

    // every schema key with its effective value
    json echo() const;
    const std::map<std::string, std::string>& explicit_values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

LabConfig parse_config(const std::string& text);
LabConfig load_config(const std::filesystem::path& path);
// applies key=value overrides; throws ConfigError on malformed items
void apply_overrides(LabConfig& cfg, const std::vector<std::string>& overrides);
// throws ConfigError describing the first violation
void validate_config(const LabConfig& cfg);

// ---- artifacts ---------------------------------------------------------

inline constexpr const char* kOutputDirEnv = "LEVYTREE_OUTPUT_DIR";

// JSON text with sorted keys and 17 significant digits for floats
std::string dump_json(const json& doc);
std::string format_real(double x);
std::string sha256_hex(const std::string& bytes);

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    CsvTable& row() { rows_.emplace_back(); return *this; }
    CsvTable& operator<<(double x);
    CsvTable& operator<<(long x);
    CsvTable& operator<<(int x) { return *this << static_cast<long>(x); }
    CsvTable& operator<<(std::size_t x) { return *this << static_cast<long>(x); }
    CsvTable& operator<<(bool x) { return *this << std::string(x ? "true" : "false"); }
    CsvTable& operator<<(const std::string& x);
    CsvTable& operator<<(const char* x) { return *this << std::string(x); }

    std::string str(const std::string& preamble = "") const;
    std::size_t size() const { return rows_.size(); }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct ArtifactEntry {
    std::string path;  // relative to the run directory
    std::string sha256;
    std::size_t bytes;
};

class ArtifactSet {
public:
    explicit ArtifactSet(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }
    void write_text(const std::string& name, const std::string& body);
    void write_bytes(const std::string& name, const std::string& body) { write_text(name, body); }
    void write_csv(const std::string& name, const CsvTable& table, const std::string& preamble = "");
    void write_json(const std::string& name, const json& doc);
    // manifest.json: every file written so far with its hash, plus a timestamp
    void write_manifest(const std::string& experiment, int status);
    const std::vector<ArtifactEntry>& entries() const { return entries_; }

private:
    std::filesystem::path dir_;
    std::vector<ArtifactEntry> entries_;
};

// run directory: $LEVYTREE_OUTPUT_DIR or experiment.output_dir, then the experiment name
std::filesystem::path output_root(const LabConfig& cfg);

// ---- experiments -------------------------------------------------------

struct RunResult {
    int status = 0;  // 0 success, 1 runtime failure, 2 schema violation
    json summary;
    std::filesystem::path dir;
    std::vector<ArtifactEntry> files;
    std::string error;
};

// summary document with the config echo and code version around `results`
json emit_summary(const std::string& experiment, const LabConfig& cfg, const json& results);

// runs the experiment the config names and writes its artifacts
RunResult run_experiment(const LabConfig& cfg);

// the experiment body: fills artifacts and returns the result section
json run_body(const LabConfig& cfg, ArtifactSet& out);

}  // namespace levytree::lab
