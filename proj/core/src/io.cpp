#include "nkem/io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nkem {

namespace bin {

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw std::runtime_error("binary write failed");
}

void read_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (is.gcount() != static_cast<std::streamsize>(n))
        throw std::runtime_error("binary read failed (truncated file?)");
}

void write_u32(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, 4); }
void write_u64(std::ostream& os, std::uint64_t v) { write_bytes(os, &v, 8); }
void write_f64(std::ostream& os, double v) { write_bytes(os, &v, 8); }

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    read_bytes(is, &v, 4);
    return v;
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v;
    read_bytes(is, &v, 8);
    return v;
}
double read_f64(std::istream& is) {
    double v;
    read_bytes(is, &v, 8);
    return v;
}

}  // namespace bin

void write_raw_f64(const std::filesystem::path& path, const std::vector<double>& v) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    bin::write_bytes(os, v.data(), v.size() * sizeof(double));
}

std::vector<double> read_raw_f64(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw std::runtime_error("cannot open for read: " + path.string());
    const auto bytes = static_cast<std::size_t>(is.tellg());
    if (bytes % sizeof(double) != 0)
        throw std::runtime_error("raw f64 file has odd size: " + path.string());
    is.seekg(0);
    std::vector<double> v(bytes / sizeof(double));
    if (!v.empty()) bin::read_bytes(is, v.data(), bytes);
    return v;
}

std::vector<double> read_raw_f64(const std::filesystem::path& path, std::size_t expected_len) {
    auto v = read_raw_f64(path);
    if (v.size() != expected_len)
        throw std::runtime_error("raw f64 file " + path.string() + ": expected " +
                                 std::to_string(expected_len) + " values, got " +
                                 std::to_string(v.size()));
    return v;
}

void KvFile::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries.emplace_back(key, value);
}

bool KvFile::has(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return true;
    return false;
}

const std::string& KvFile::get(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return v;
    throw std::runtime_error("missing key: " + key);
}

std::string KvFile::get_or(const std::string& key, const std::string& fallback) const {
    for (const auto& [k, v] : entries)
        if (k == key) return v;
    return fallback;
}

void KvFile::set_i64(const std::string& key, std::int64_t v) { set(key, std::to_string(v)); }
void KvFile::set_u64(const std::string& key, std::uint64_t v) { set(key, std::to_string(v)); }
void KvFile::set_f64(const std::string& key, double v) { set(key, format_f64(v)); }

std::int64_t KvFile::get_i64(const std::string& key) const { return std::stoll(get(key)); }
std::uint64_t KvFile::get_u64(const std::string& key) const { return std::stoull(get(key)); }
double KvFile::get_f64(const std::string& key) const { return parse_f64(get(key)); }

void KvFile::save(const std::filesystem::path& path) const {
    std::ostringstream os;
    for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
    write_text_file(path, os.str());
}

KvFile KvFile::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open for read: " + path.string());
    KvFile kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed line in " + path.string() + ": " + line);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv.entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
}

std::string format_f64(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_f64(const std::string& s) {
    double v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::runtime_error("cannot parse float: '" + s + "'");
    return v;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_pgm16(const std::filesystem::path& path, const std::vector<double>& v,
                 int width, int height, double lo, double hi) {
    if (static_cast<std::size_t>(width) * height != v.size())
        throw std::invalid_argument("write_pgm16: dims do not match data length");
    if (!(hi > lo)) hi = lo + 1.0;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os << "P5\n" << width << " " << height << "\n65535\n";
    const double s = 65535.0 / (hi - lo);
    for (double x : v) {
        double t = (x - lo) * s;
        if (t < 0.0) t = 0.0;
        if (t > 65535.0) t = 65535.0;
        const auto q = static_cast<std::uint16_t>(t + 0.5);
        const unsigned char msb = static_cast<unsigned char>(q >> 8);
        const unsigned char lsb = static_cast<unsigned char>(q & 0xFF);
        os.put(static_cast<char>(msb));
        os.put(static_cast<char>(lsb));
    }
    if (!os) throw std::runtime_error("pgm write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for read: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os << text;
    if (!os) throw std::runtime_error("text write failed: " + path.string());
}

}  // namespace nkem
