#pragma once

// Minimal comma-separated reader/writer for the pipeline's numeric tables.
// No quoting: none of the schemas contain commas inside fields.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "relapse/core.hpp"

namespace relapse::csv {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataContractError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write on '" + path.string() + "'");
}

/// Iterates the lines of a table, splitting each into fields. Reads either an
/// in-memory buffer or a file in fixed-size chunks, so large streams never sit
/// in memory whole. Field views stay valid until the next call to next().
class Reader {
public:
    explicit Reader(std::string_view text) : text_(text), eof_(true) {}

    explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), eof_(false) {
        if (!in_) throw DataContractError("cannot open '" + path.string() + "'");
    }

    /// Advances to the next non-empty line. Returns false at end of input.
    bool next() {
        while (true) {
            std::size_t end = text_.find('\n', pos_);
            if (end == std::string_view::npos && !eof_) {
                refill();
                continue;
            }
            if (pos_ >= text_.size()) return false;
            if (end == std::string_view::npos) end = text_.size();
            std::string_view line = text_.substr(pos_, end - pos_);
            pos_ = end + 1;
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (line.empty()) continue;
            split(line);
            return true;
        }
    }

    const std::vector<std::string_view>& fields() const { return fields_; }
    /// 1-based physical line number of the current row.
    std::size_t line_no() const { return line_no_; }

private:
    static constexpr std::size_t kChunk = 1 << 20;

    void refill() {
        buffer_.erase(0, std::min(pos_, buffer_.size()));
        pos_ = 0;
        const std::size_t old = buffer_.size();
        buffer_.resize(old + kChunk);
        in_.read(buffer_.data() + old, static_cast<std::streamsize>(kChunk));
        buffer_.resize(old + static_cast<std::size_t>(in_.gcount()));
        if (!in_) eof_ = true;
        text_ = buffer_;
    }

    void split(std::string_view line) {
        fields_.clear();
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string_view::npos) {
                fields_.push_back(line.substr(start));
                break;
            }
            fields_.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
    }

    std::ifstream in_;
    std::string buffer_;
    std::string_view text_;
    std::size_t pos_ = 0;
    bool eof_;
    std::size_t line_no_ = 0;
    std::vector<std::string_view> fields_;
};

/// Buffered file writer; callers append into buf() and call maybe_flush().
class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : path_(path) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    ~Writer() {
        if (out_.is_open()) out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    }
    Writer(const Writer&) = delete;
    Writer& operator=(const Writer&) = delete;

    std::string& buf() { return buf_; }

    void maybe_flush() {
        if (buf_.size() >= (1u << 20)) flush();
    }

    void close() {
        flush();
        out_.close();
        if (!out_) throw std::runtime_error("short write on '" + path_.string() + "'");
    }

private:
    void flush() {
        out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        buf_.clear();
    }

    std::filesystem::path path_;
    std::ofstream out_;
    std::string buf_;
};

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

/// Parses a finite double. Empty fields map to kMissing when `allow_empty`.
inline std::optional<double> parse_double(std::string_view s, bool allow_empty) {
    s = trim(s);
    if (s.empty()) return allow_empty ? std::optional<double>(kMissing) : std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

/// Shortest round-trip representation; missing values become an empty field.
inline void append_double(std::string& out, double v) {
    if (is_missing(v)) return;
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

inline void append_int(std::string& out, std::int64_t v) {
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

/// Checks that the header row matches `expected` exactly.
inline void expect_header(Reader& reader, const std::vector<std::string_view>& expected,
                          const std::string& file) {
    if (!reader.next()) throw DataContractError("'" + file + "' has no header row");
    const auto& f = reader.fields();
    bool ok = f.size() == expected.size();
    for (std::size_t i = 0; ok && i < f.size(); ++i) {
        std::string_view name = trim(f[i]);
        if (i == 0 && name.starts_with("\xEF\xBB\xBF")) name.remove_prefix(3);
        ok = name == expected[i];
    }
    if (!ok) {
        std::string want;
        for (auto e : expected) {
            if (!want.empty()) want += ',';
            want += e;
        }
        throw DataContractError("'" + file + "' header mismatch, expected '" + want + "'");
    }
}

}  // namespace relapse::csv
