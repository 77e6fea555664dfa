#include "nkem/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <stdexcept>

#include "nkem/io.hpp"

namespace nkem {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("config: " + msg); }

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' ||
                        c == '-';
        if (!ok) return false;
    }
    return true;
}

std::vector<std::string> split_list(const std::string& value, const std::string& where) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = value.find(',', start);
        const std::string piece =
            trim(comma == std::string::npos ? value.substr(start) : value.substr(start, comma - start));
        if (piece.empty()) fail(where + ": empty list element");
        out.push_back(piece);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::int64_t parse_i64(const std::string& s, const std::string& where) {
    std::int64_t v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) fail(where + ": not an integer: '" + s + "'");
    return v;
}

}  // namespace

const std::string* ConfigSection::find(const std::string& key) const {
    for (const auto& e : entries) {
        if (e.key == key) return &e.value;
    }
    return nullptr;
}

Config Config::parse(const std::string& text, std::filesystem::path base_dir) {
    Config cfg;
    cfg.base_dir_ = std::move(base_dir);

    ConfigSection* current = nullptr;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string line =
            nl == std::string::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;

        const std::string at = "line " + std::to_string(line_no);
        if (t.front() == '[') {
            if (t.back() != ']') fail(at + ": malformed section header: '" + t + "'");
            const std::string name = trim(t.substr(1, t.size() - 2));
            if (!valid_name(name)) fail(at + ": invalid section name: '" + name + "'");
            for (const auto& s : cfg.sections_) {
                if (s.name == name) fail(at + ": duplicate section [" + name + "]");
            }
            cfg.sections_.push_back(ConfigSection{name, {}});
            current = &cfg.sections_.back();
            continue;
        }

        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) fail(at + ": expected 'key = value': '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (!valid_name(key)) fail(at + ": invalid key: '" + key + "'");
        if (current == nullptr) fail(at + ": key '" + key + "' before any [section]");
        if (current->find(key) != nullptr) {
            fail(at + ": duplicate key '" + key + "' in [" + current->name + "]");
        }
        current->entries.push_back(ConfigEntry{key, value});
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    Config cfg = parse(read_text_file(path), path.has_parent_path() ? path.parent_path()
                                                                    : std::filesystem::path("."));
    return cfg;
}

std::string Config::serialize() const {
    std::string out;
    bool first = true;
    for (const auto& s : sections_) {
        if (!first) out += '\n';
        first = false;
        out += '[' + s.name + "]\n";
        for (const auto& e : s.entries) out += e.key + " = " + e.value + '\n';
    }
    return out;
}

void Config::save(const std::filesystem::path& path) const {
    write_text_file(path, serialize());
}

bool Config::has_section(const std::string& section) const {
    for (const auto& s : sections_) {
        if (s.name == section) return true;
    }
    return false;
}

bool Config::has(const std::string& section, const std::string& key) const {
    for (const auto& s : sections_) {
        if (s.name == section) return s.find(key) != nullptr;
    }
    return false;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    if (!valid_name(section) || !valid_name(key)) fail("set: invalid section or key name");
    for (auto& s : sections_) {
        if (s.name != section) continue;
        for (auto& e : s.entries) {
            if (e.key == key) {
                e.value = value;
                return;
            }
        }
        s.entries.push_back(ConfigEntry{key, value});
        return;
    }
    sections_.push_back(ConfigSection{section, {ConfigEntry{key, value}}});
}

const std::string& Config::require(const std::string& section, const std::string& key) const {
    for (const auto& s : sections_) {
        if (s.name == section) {
            if (const std::string* v = s.find(key)) return *v;
            fail("missing key " + section + "." + key);
        }
    }
    fail("missing section [" + section + "] (wanted " + section + "." + key + ")");
}

std::string Config::get_str(const std::string& section, const std::string& key) const {
    return require(section, key);
}

std::string Config::get_str_or(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
    return has(section, key) ? require(section, key) : fallback;
}

double Config::get_f64(const std::string& section, const std::string& key) const {
    try {
        return parse_f64(require(section, key));
    } catch (const std::exception& e) {
        fail(section + "." + key + ": " + e.what());
    }
}

double Config::get_f64_or(const std::string& section, const std::string& key,
                          double fallback) const {
    return has(section, key) ? get_f64(section, key) : fallback;
}

std::int64_t Config::get_i64(const std::string& section, const std::string& key) const {
    return parse_i64(require(section, key), section + "." + key);
}

std::int64_t Config::get_i64_or(const std::string& section, const std::string& key,
                                std::int64_t fallback) const {
    return has(section, key) ? get_i64(section, key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key) const {
    const std::string& s = require(section, key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        fail(section + "." + key + ": not an unsigned integer: '" + s + "'");
    }
    return v;
}

std::uint64_t Config::get_u64_or(const std::string& section, const std::string& key,
                                 std::uint64_t fallback) const {
    return has(section, key) ? get_u64(section, key) : fallback;
}

bool Config::get_bool(const std::string& section, const std::string& key) const {
    const std::string& s = require(section, key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    fail(section + "." + key + ": not a boolean: '" + s + "'");
}

bool Config::get_bool_or(const std::string& section, const std::string& key,
                         bool fallback) const {
    return has(section, key) ? get_bool(section, key) : fallback;
}

std::vector<double> Config::get_f64_list(const std::string& section,
                                         const std::string& key) const {
    const std::string where = section + "." + key;
    std::vector<double> out;
    for (const std::string& piece : split_list(require(section, key), where)) {
        try {
            out.push_back(parse_f64(piece));
        } catch (const std::exception& e) {
            fail(where + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::int64_t> Config::get_i64_list(const std::string& section,
                                               const std::string& key) const {
    const std::string where = section + "." + key;
    std::vector<std::int64_t> out;
    for (const std::string& piece : split_list(require(section, key), where)) {
        out.push_back(parse_i64(piece, where));
    }
    return out;
}

std::filesystem::path Config::resolve_path(const std::string& value) const {
    const std::filesystem::path p(value);
    return p.is_absolute() ? p : base_dir_ / p;
}

std::string Config::content_hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(serialize())));
    return std::string(buf);
}

}  // namespace nkem
