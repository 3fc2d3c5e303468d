#pragma once

// Keyed plain-text configuration:
//
//   # comment
//   [section]
//   key = value
//   key = "quoted value", other = 2
//
// Several `key = value` pairs may share a line when separated by commas
// outside quotes.

#include <cctype>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace impulse {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConfigEntry {
    std::string key;
    std::string value;
    bool quoted = false;
    int line = 0;
};

class ConfigFile {
public:
    using Section = std::vector<ConfigEntry>;

    static ConfigFile parse(std::string_view text) {
        ConfigFile cfg;
        std::string section;
        int line_no = 0;
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            ++line_no;
            cfg.parse_line(text.substr(start, end - start), line_no, section);
            start = end + 1;
        }
        return cfg;
    }

    bool has_section(const std::string& name) const { return sections_.count(name) != 0; }

    const Section& section(const std::string& name) const {
        static const Section empty;
        const auto it = sections_.find(name);
        return it == sections_.end() ? empty : it->second;
    }

    const ConfigEntry* find(const std::string& sec, std::string_view key) const {
        for (const auto& e : section(sec))
            if (e.key == key) return &e;
        return nullptr;
    }

    std::vector<std::string> section_names() const {
        std::vector<std::string> out;
        for (const auto& [name, _] : sections_) out.push_back(name);
        return out;
    }

private:
    static std::string_view trim(std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    }

    static std::string where(int line) { return "line " + std::to_string(line) + ": "; }

    void parse_line(std::string_view raw, int line_no, std::string& section) {
        // Strip comments that are not inside quotes.
        bool in_quote = false;
        std::size_t cut = raw.size();
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] == '"') in_quote = !in_quote;
            else if (raw[i] == '#' && !in_quote) {
                cut = i;
                break;
            }
        }
        if (in_quote) throw ConfigError(where(line_no) + "unterminated quote");
        const std::string_view line = trim(raw.substr(0, cut));
        if (line.empty()) return;

        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where(line_no) + "malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section.empty()) throw ConfigError(where(line_no) + "empty section name");
            sections_[section];
            return;
        }
        if (section.empty()) throw ConfigError(where(line_no) + "entry outside any section");

        std::size_t pos = 0;
        while (pos < line.size()) {
            std::size_t next = pos;
            bool q = false;
            while (next < line.size() && (q || line[next] != ',')) {
                if (line[next] == '"') q = !q;
                ++next;
            }
            const std::string_view item = trim(line.substr(pos, next - pos));
            if (!item.empty()) sections_[section].push_back(parse_entry(item, line_no));
            pos = next + 1;
        }
    }

    static ConfigEntry parse_entry(std::string_view item, int line_no) {
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where(line_no) + "expected key = value");
        ConfigEntry e;
        e.key = std::string(trim(item.substr(0, eq)));
        e.line = line_no;
        if (e.key.empty()) throw ConfigError(where(line_no) + "missing key");
        std::string_view value = trim(item.substr(eq + 1));
        if (!value.empty() && value.front() == '"') {
            if (value.size() < 2 || value.back() != '"')
                throw ConfigError(where(line_no) + "malformed quoted value for '" + e.key + "'");
            value = value.substr(1, value.size() - 2);
            e.quoted = true;
        }
        if (value.empty()) throw ConfigError(where(line_no) + "empty value for '" + e.key + "'");
        e.value = std::string(value);
        return e;
    }

    std::map<std::string, Section> sections_;
};

} // namespace impulse
