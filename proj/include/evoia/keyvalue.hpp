#pragma once
// Flat "key = value" config files. Blank lines and #-comments are ignored.

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

namespace evoia {

inline std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::map<std::string, std::string> parse_key_value_text(const std::string& text,
                                                               const std::string& origin = "<string>") {
    std::map<std::string, std::string> out;
    std::size_t pos = 0;
    int lineno = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + " line " + std::to_string(lineno) +
                                     ": expected key = value");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(origin + " line " + std::to_string(lineno) + ": empty key");
        out[key] = value;
    }
    return out;
}

inline std::map<std::string, std::string> parse_key_value_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_key_value_text(text, path);
}

class KeyValueReader {
public:
    explicit KeyValueReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    double get(const std::string& key, double fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(*it);
        return std::stod(it->second);
    }
    long get(const std::string& key, long fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(*it);
        return std::stol(it->second);
    }
    int get(const std::string& key, int fallback) { return static_cast<int>(get(key, static_cast<long>(fallback))); }
    std::string get(const std::string& key, const std::string& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(*it);
        return it->second;
    }

    // keys present in the file but never consumed; callers report them as errors
    std::map<std::string, std::string> unused() const {
        std::map<std::string, std::string> out;
        for (const auto& [k, v] : kv_)
            if (!used_.count(k)) out.emplace(k, v);
        return out;
    }

private:
    std::map<std::string, std::string> kv_;
    std::map<std::string, std::string> used_;
};

}  // namespace evoia
