#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace nkem {

// Little-endian binary primitives. The build targets little-endian hosts;
// widths are fixed so files are portable across compilers.
namespace bin {
void write_bytes(std::ostream& os, const void* p, std::size_t n);
void read_bytes(std::istream& is, void* p, std::size_t n);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
}  // namespace bin

/// Raw image/sinogram payload: f64 little-endian, row-major, no header.
void write_raw_f64(const std::filesystem::path& path, const std::vector<double>& v);
std::vector<double> read_raw_f64(const std::filesystem::path& path);
std::vector<double> read_raw_f64(const std::filesystem::path& path, std::size_t expected_len);

/// Structured-text sidecar / manifest block: ordered key = value lines,
/// '#' comments, blank lines ignored. Round-trips losslessly for keys
/// written through this API.
struct KvFile {
    std::vector<std::pair<std::string, std::string>> entries;

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;

    void set_i64(const std::string& key, std::int64_t v);
    void set_u64(const std::string& key, std::uint64_t v);
    void set_f64(const std::string& key, double v);
    std::int64_t get_i64(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_f64(const std::string& key) const;

    void save(const std::filesystem::path& path) const;
    static KvFile load(const std::filesystem::path& path);
};

/// Shortest round-trip decimal form of a double.
std::string format_f64(double v);
double parse_f64(const std::string& s);

/// FNV-1a over a byte string; used for config hashes in run manifests.
std::uint64_t fnv1a(const std::string& bytes);

/// 16-bit binary PGM (P5, maxval 65535, MSB-first samples) with a linear
/// window [lo, hi] mapped onto [0, 65535].
void write_pgm16(const std::filesystem::path& path, const std::vector<double>& v,
                 int width, int height, double lo, double hi);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace nkem
