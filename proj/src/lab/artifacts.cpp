#include "levytree/lab.hpp"
#include "levytree/version.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

namespace levytree::lab {

namespace fs = std::filesystem;

std::string format_real(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

void quote(const std::string& s, std::string& out)
{
    out += '"';
    for (unsigned char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        default:
            if (c < 0x20) {
                char buf[8];
                std::snprintf(buf, sizeof buf, "\\u%04x", c);
                out += buf;
            } else {
                out += static_cast<char>(c);
            }
        }
    }
    out += '"';
}

void emit(const json& j, int depth, std::string& out)
{
    const std::string pad(2 * (depth + 1), ' ');
    const std::string close(2 * depth, ' ');
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += "{\n";
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {  // std::map order: sorted keys
            if (!first) out += ",\n";
            first = false;
            out += pad;
            quote(it.key(), out);
            out += ": ";
            emit(it.value(), depth + 1, out);
        }
        out += "\n" + close + "}";
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        out += "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) out += ",\n";
            out += pad;
            emit(j[i], depth + 1, out);
        }
        out += "\n" + close + "]";
        return;
    }
    case json::value_t::number_float: {
        double x = j.get<double>();
        if (!std::isfinite(x)) {
            out += "null";
        } else {
            std::string s = format_real(x);
            if (s.find_first_of(".en") == std::string::npos) s += ".0";
            out += s;
        }
        return;
    }
    case json::value_t::string:
        quote(j.get<std::string>(), out);
        return;
    default:
        out += j.dump();
    }
}

std::string utc_timestamp()
{
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::string dump_json(const json& doc)
{
    std::string out;
    emit(doc, 0, out);
    out += '\n';
    return out;
}

std::string sha256_hex(const std::string& bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

CsvTable& CsvTable::operator<<(double x)
{
    rows_.back().push_back(format_real(x));
    return *this;
}

CsvTable& CsvTable::operator<<(long x)
{
    rows_.back().push_back(std::to_string(x));
    return *this;
}

CsvTable& CsvTable::operator<<(const std::string& x)
{
    if (x.find_first_of(",\"\n") == std::string::npos) {
        rows_.back().push_back(x);
    } else {
        std::string q = "\"";
        for (char c : x) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        rows_.back().push_back(q + "\"");
    }
    return *this;
}

std::string CsvTable::str(const std::string& preamble) const
{
    std::string out = preamble;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
}

ArtifactSet::ArtifactSet(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

void ArtifactSet::write_text(const std::string& name, const std::string& body)
{
    fs::path p = dir_ / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw std::runtime_error("cannot write artifact '" + p.string() + "'");
    for (auto& e : entries_)
        if (e.path == name) {
            e = {name, sha256_hex(body), body.size()};
            return;
        }
    entries_.push_back({name, sha256_hex(body), body.size()});
}

void ArtifactSet::write_csv(const std::string& name, const CsvTable& table, const std::string& preamble)
{
    write_text(name, table.str(preamble));
}

void ArtifactSet::write_json(const std::string& name, const json& doc) { write_text(name, dump_json(doc)); }

void ArtifactSet::write_manifest(const std::string& experiment, int status)
{
    json files = json::array();
    for (const auto& e : entries_) files.push_back({{"path", e.path}, {"sha256", e.sha256}, {"bytes", e.bytes}});
    json doc = {{"experiment", experiment},
                {"version", kVersion},
                {"status", status},
                {"created_utc", utc_timestamp()},
                {"files", files}};
    std::string body = dump_json(doc);
    std::ofstream f(dir_ / "manifest.json", std::ios::binary);
    f << body;
    if (!f) throw std::runtime_error("cannot write manifest");
}

fs::path output_root(const LabConfig& cfg)
{
    fs::path root = cfg.text("experiment.output_dir");
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) root = env;
    return root / cfg.experiment();
}

json emit_summary(const std::string& experiment, const LabConfig& cfg, const json& results)
{
    return {{"experiment", experiment},
            {"version", kVersion},
            {"config", cfg.echo()},
            {"results", results.is_null() ? json::object() : results}};
}

}  // namespace levytree::lab
