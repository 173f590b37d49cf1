#pragma once

#include <map>
#include <string>
#include <vector>

namespace ocsr {

// Flat key=value configuration. '#' starts a comment, blank lines ignored.
// Later assignments win, so command-line overrides are applied by set().
class Config {
public:
    Config() = default;

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    // "key=value" as passed on a command line
    void set_kv(const std::string& kv);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get_str(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;
    int get_int(const std::string& key, int def) const;
    long get_long(const std::string& key, long def) const;
    bool get_bool(const std::string& key, bool def) const;

    const std::map<std::string, std::string>& items() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace ocsr
