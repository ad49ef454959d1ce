#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mie/errors.hpp"

namespace mie {

// Minimal TOML-subset document: [section] headers, bare keys, numbers,
// strings, booleans, and (nested, possibly multi-line) arrays. Enough for
// scenario files; anything fancier belongs in the library API.
class TomlValue {
public:
    enum class Kind { number, boolean, string, array };

    static TomlValue number(double v) {
        TomlValue t;
        t.kind_ = Kind::number;
        t.num_ = v;
        return t;
    }
    static TomlValue boolean(bool v) {
        TomlValue t;
        t.kind_ = Kind::boolean;
        t.bool_ = v;
        return t;
    }
    static TomlValue string(std::string v) {
        TomlValue t;
        t.kind_ = Kind::string;
        t.str_ = std::move(v);
        return t;
    }
    static TomlValue array(std::vector<TomlValue> v) {
        TomlValue t;
        t.kind_ = Kind::array;
        t.arr_ = std::move(v);
        return t;
    }

    Kind kind() const { return kind_; }
    bool is_number() const { return kind_ == Kind::number; }
    bool is_string() const { return kind_ == Kind::string; }
    bool is_array() const { return kind_ == Kind::array; }
    bool is_bool() const { return kind_ == Kind::boolean; }

    double as_number() const {
        if (kind_ != Kind::number) throw config_error("config: expected a number");
        return num_;
    }
    long as_integer() const {
        double v = as_number();
        if (v != std::floor(v)) throw config_error("config: expected an integer");
        return static_cast<long>(v);
    }
    bool as_bool() const {
        if (kind_ != Kind::boolean) throw config_error("config: expected a boolean");
        return bool_;
    }
    const std::string& as_string() const {
        if (kind_ != Kind::string) throw config_error("config: expected a string");
        return str_;
    }
    const std::vector<TomlValue>& as_array() const {
        if (kind_ != Kind::array) throw config_error("config: expected an array");
        return arr_;
    }

    std::vector<double> as_number_array() const {
        std::vector<double> out;
        for (const TomlValue& v : as_array()) out.push_back(v.as_number());
        return out;
    }

private:
    Kind kind_ = Kind::number;
    double num_ = 0.0;
    bool bool_ = false;
    std::string str_;
    std::vector<TomlValue> arr_;
};

class TomlTable {
public:
    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    const TomlValue& at(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw config_error("config: missing key '" + key + "'");
        return it->second;
    }

    double number_or(const std::string& key, double fallback) const {
        return has(key) ? at(key).as_number() : fallback;
    }
    long integer_or(const std::string& key, long fallback) const {
        return has(key) ? at(key).as_integer() : fallback;
    }
    std::string string_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? at(key).as_string() : fallback;
    }

    void set(const std::string& key, TomlValue v) { entries_.insert_or_assign(key, std::move(v)); }
    const std::map<std::string, TomlValue>& entries() const { return entries_; }

private:
    std::map<std::string, TomlValue> entries_;
};

class TomlDocument {
public:
    bool has_section(const std::string& name) const { return sections_.count(name) > 0; }

    const TomlTable& section(const std::string& name) const {
        auto it = sections_.find(name);
        if (it == sections_.end()) throw config_error("config: missing section [" + name + "]");
        return it->second;
    }

    TomlTable& section_mutable(const std::string& name) { return sections_[name]; }
    const TomlTable& root() const { return root_; }
    TomlTable& root_mutable() { return root_; }

private:
    TomlTable root_;
    std::map<std::string, TomlTable> sections_;
};

namespace toml_detail {

struct Cursor {
    const std::string& text;
    std::size_t pos = 0;
    int line = 1;

    bool done() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    void advance() {
        if (text[pos] == '\n') ++line;
        ++pos;
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw config_error("config line " + std::to_string(line) + ": " + what);
    }
};

inline void skip_inline_ws(Cursor& c) {
    while (!c.done() && (c.peek() == ' ' || c.peek() == '\t' || c.peek() == '\r')) c.advance();
}

// Skips whitespace, newlines, and # comments.
inline void skip_blank(Cursor& c) {
    while (!c.done()) {
        char ch = c.peek();
        if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
            c.advance();
        } else if (ch == '#') {
            while (!c.done() && c.peek() != '\n') c.advance();
        } else {
            break;
        }
    }
}

inline bool is_bare_char(char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
}

inline std::string parse_bare(Cursor& c) {
    std::string out;
    while (!c.done() && is_bare_char(c.peek())) {
        out.push_back(c.peek());
        c.advance();
    }
    if (out.empty()) c.fail("expected a key");
    return out;
}

inline TomlValue parse_value(Cursor& c);

inline TomlValue parse_array(Cursor& c) {
    c.advance();  // '['
    std::vector<TomlValue> items;
    while (true) {
        skip_blank(c);
        if (c.done()) c.fail("unterminated array");
        if (c.peek() == ']') {
            c.advance();
            return TomlValue::array(std::move(items));
        }
        items.push_back(parse_value(c));
        skip_blank(c);
        if (c.done()) c.fail("unterminated array");
        if (c.peek() == ',') {
            c.advance();
        } else if (c.peek() != ']') {
            c.fail("expected ',' or ']' in array");
        }
    }
}

inline TomlValue parse_string(Cursor& c) {
    c.advance();  // '"'
    std::string out;
    while (true) {
        if (c.done()) c.fail("unterminated string");
        char ch = c.peek();
        if (ch == '"') {
            c.advance();
            return TomlValue::string(std::move(out));
        }
        if (ch == '\\') {
            c.advance();
            if (c.done()) c.fail("dangling escape");
            char esc = c.peek();
            if (esc == '"' || esc == '\\') {
                out.push_back(esc);
            } else if (esc == 'n') {
                out.push_back('\n');
            } else if (esc == 't') {
                out.push_back('\t');
            } else {
                c.fail("unsupported escape");
            }
            c.advance();
            continue;
        }
        if (ch == '\n') c.fail("unterminated string");
        out.push_back(ch);
        c.advance();
    }
}

inline TomlValue parse_value(Cursor& c) {
    skip_blank(c);
    if (c.done()) c.fail("expected a value");
    char ch = c.peek();
    if (ch == '[') return parse_array(c);
    if (ch == '"') return parse_string(c);
    // bare token: number, boolean, or inf/-inf
    std::string token;
    while (!c.done()) {
        char t = c.peek();
        if (t == ',' || t == ']' || t == '\n' || t == '#' || t == ' ' || t == '\t' || t == '\r')
            break;
        token.push_back(t);
        c.advance();
    }
    if (token == "true") return TomlValue::boolean(true);
    if (token == "false") return TomlValue::boolean(false);
    if (token == "inf" || token == "+inf")
        return TomlValue::number(std::numeric_limits<double>::infinity());
    if (token == "-inf") return TomlValue::number(-std::numeric_limits<double>::infinity());
    try {
        std::size_t used = 0;
        double v = std::stod(token, &used);
        if (used != token.size()) c.fail("malformed number '" + token + "'");
        return TomlValue::number(v);
    } catch (const config_error&) {
        throw;
    } catch (const std::exception&) {
        c.fail("malformed value '" + token + "'");
    }
}

}  // namespace toml_detail

inline TomlDocument parse_toml(const std::string& text) {
    toml_detail::Cursor c{text};
    TomlDocument doc;
    TomlTable* current = &doc.root_mutable();
    while (true) {
        toml_detail::skip_blank(c);
        if (c.done()) break;
        if (c.peek() == '[') {
            c.advance();
            toml_detail::skip_inline_ws(c);
            std::string name = toml_detail::parse_bare(c);
            toml_detail::skip_inline_ws(c);
            if (c.done() || c.peek() != ']') c.fail("expected ']' closing section header");
            c.advance();
            current = &doc.section_mutable(name);
            continue;
        }
        std::string key = toml_detail::parse_bare(c);
        toml_detail::skip_inline_ws(c);
        if (c.done() || c.peek() != '=') c.fail("expected '=' after key '" + key + "'");
        c.advance();
        current->set(key, toml_detail::parse_value(c));
    }
    return doc;
}

inline TomlDocument parse_toml_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_toml(buf.str());
}

}  // namespace mie
