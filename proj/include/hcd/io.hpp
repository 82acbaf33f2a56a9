#pragma once

// Flat-file persistence: CSV tables, SHA-256 checksums, run manifests.

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace hcd::io {

/// One CSV cell. Doubles are written with %.17g so values round-trip exactly.
using Cell = std::variant<double, std::int64_t, std::string>;

std::string format_cell(const Cell& c);

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<Cell> row);
    std::size_t rows() const { return rows_.size(); }
    std::string str() const;
    void write(const std::filesystem::path& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<Cell>> rows_;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& path, const std::string& bytes);

struct FileEntry {
    std::string path;  // relative to the campaign directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct AssertionRecord {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunManifest {
    std::string artifact_version;
    std::string config_hash;
    std::vector<std::string> commands;  // completed sub-commands
    std::vector<StageTiming> timings;
    std::vector<FileEntry> files;
    std::vector<AssertionRecord> assertions;

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
    /// True when every listed file exists under `dir` with the recorded checksum.
    bool verify(const std::filesystem::path& dir) const;
};

} // namespace hcd::io
