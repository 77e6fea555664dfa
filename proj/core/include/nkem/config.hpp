#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nkem {

/// One `key = value` entry, in file order.
struct ConfigEntry {
    std::string key;
    std::string value;
};

struct ConfigSection {
    std::string name;
    std::vector<ConfigEntry> entries;

    /// Pointer to the value for key, or nullptr when absent.
    const std::string* find(const std::string& key) const;
};

/// Sectioned key-value configuration document.
///
/// Dialect: `[section]` headers followed by `key = value` lines. Full-line
/// comments start with '#' or ';' (after optional leading whitespace);
/// values are taken verbatim after trimming surrounding whitespace, so they
/// may contain any character including '#'. Keys and section names match
/// [A-Za-z0-9_.-]+ and are case-sensitive. Duplicate sections or duplicate
/// keys within a section are errors. parse(serialize()) reproduces the
/// document exactly (comments are not retained).
class Config {
  public:
    Config() = default;

    /// Parses text; base_dir anchors relative paths from resolve_path.
    static Config parse(const std::string& text, std::filesystem::path base_dir = ".");
    static Config load(const std::filesystem::path& path);

    std::string serialize() const;
    void save(const std::filesystem::path& path) const;

    bool has_section(const std::string& section) const;
    bool has(const std::string& section, const std::string& key) const;

    /// Sets (or appends) a value, creating the section if needed; used for
    /// command-line overrides before the document is interpreted.
    void set(const std::string& section, const std::string& key, const std::string& value);

    /// Typed getters. Missing keys or malformed values throw
    /// std::runtime_error naming "section.key". The *_or forms fall back
    /// when the key (or its whole section) is absent.
    std::string get_str(const std::string& section, const std::string& key) const;
    std::string get_str_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_f64(const std::string& section, const std::string& key) const;
    double get_f64_or(const std::string& section, const std::string& key, double fallback) const;
    std::int64_t get_i64(const std::string& section, const std::string& key) const;
    std::int64_t get_i64_or(const std::string& section, const std::string& key,
                            std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key) const;
    std::uint64_t get_u64_or(const std::string& section, const std::string& key,
                             std::uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;

    /// Comma-separated lists; surrounding whitespace per element is
    /// trimmed, empty elements are errors.
    std::vector<double> get_f64_list(const std::string& section, const std::string& key) const;
    std::vector<std::int64_t> get_i64_list(const std::string& section,
                                           const std::string& key) const;

    /// Resolves a path value relative to the config file's directory;
    /// absolute values pass through.
    std::filesystem::path resolve_path(const std::string& value) const;

    const std::vector<ConfigSection>& sections() const { return sections_; }
    const std::filesystem::path& base_dir() const { return base_dir_; }

    /// FNV-1a of the canonical serialization as 16-digit lowercase hex;
    /// identifies the config in run manifests.
    std::string content_hash() const;

  private:
    const std::string& require(const std::string& section, const std::string& key) const;

    std::vector<ConfigSection> sections_;
    std::filesystem::path base_dir_ = ".";
};

}  // namespace nkem
