#include "hcd/io.hpp"

#include "hcd/core.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace hcd::io {

std::string format_cell(const Cell& c)
{
    if (const auto* d = std::get_if<double>(&c)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", *d);
        return buf;
    }
    if (const auto* i = std::get_if<std::int64_t>(&c))
        return std::to_string(*i);
    const std::string& s = std::get<std::string>(c);
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"')
            q += '"';
        q += ch;
    }
    return q + "\"";
}

void CsvTable::add(std::vector<Cell> row)
{
    if (row.size() != header_.size())
        throw std::invalid_argument("CsvTable: row width does not match the header");
    rows_.push_back(std::move(row));
}

std::string CsvTable::str() const
{
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i)
        out += (i ? "," : "") + header_[i];
    out += '\n';
    for (const auto& r : rows_) {
        for (std::size_t i = 0; i < r.size(); ++i)
            out += (i ? "," : "") + format_cell(r[i]);
        out += '\n';
    }
    return out;
}

void CsvTable::write(const std::filesystem::path& path) const { write_file(path, str()); }

std::string sha256_hex(const std::string& bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void write_file(const std::filesystem::path& path, const std::string& bytes)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw ConfigError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw ConfigError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string RunManifest::to_json() const
{
    nlohmann::ordered_json j;
    j["artifact_version"] = artifact_version;
    j["config_hash"] = config_hash;
    j["commands"] = commands;
    j["timings"] = nlohmann::ordered_json::array();
    for (const auto& t : timings)
        j["timings"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    j["files"] = nlohmann::ordered_json::array();
    for (const auto& f : files)
        j["files"].push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    j["assertions"] = nlohmann::ordered_json::array();
    for (const auto& a : assertions)
        j["assertions"].push_back({{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text)
{
    const auto j = nlohmann::json::parse(text);
    RunManifest m;
    m.artifact_version = j.at("artifact_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    if (j.contains("commands"))
        m.commands = j.at("commands").get<std::vector<std::string>>();
    for (const auto& t : j.at("timings"))
        m.timings.push_back({t.at("stage").get<std::string>(), t.at("seconds").get<double>()});
    for (const auto& f : j.at("files"))
        m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                           f.at("bytes").get<std::uintmax_t>()});
    for (const auto& a : j.at("assertions"))
        m.assertions.push_back({a.at("name").get<std::string>(), a.at("pass").get<bool>(),
                                a.at("detail").get<std::string>()});
    return m;
}

bool RunManifest::verify(const std::filesystem::path& dir) const
{
    for (const auto& f : files) {
        const auto p = dir / f.path;
        if (!std::filesystem::exists(p) || sha256_file(p) != f.sha256)
            return false;
    }
    return true;
}

} // namespace hcd::io
