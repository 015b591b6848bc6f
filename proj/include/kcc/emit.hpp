#pragma once

// Output formatting. CSV rows use RFC-4180-style quoting, a header row, '.'
// decimal separator and 17 significant digits, so every numeric field
// round-trips to the same double. JSON goes through nlohmann::ordered_json to
// keep key order (and therefore bytes) stable across runs.

#include <charconv>
#include <complex>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcc/linalg.hpp"

namespace kcc {

using Json = nlohmann::ordered_json;

// Shortest representation that round-trips; used for human-facing text.
// Zero is emitted unsigned.
inline std::string format_double(double v) {
    if (v == 0.0) return "0";
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Fixed 17 significant digits for CSV fields.
inline std::string format_double17(double v) {
    if (v == 0.0) return "0";
    char buf[48];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) { row(header); }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ += ',';
            out_ += quote(cells[i]);
        }
        out_ += '\n';
    }

    const std::string& str() const noexcept { return out_; }

private:
    static std::string quote(const std::string& s) {
        if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        q += '"';
        return q;
    }

    std::string out_;
};

inline Json to_json(const Vec& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(x);
    return a;
}

inline Json to_json(const Mat& m) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        Json r = Json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline Json to_json(const Ten3& t) {
    Json t0 = Json::array();
    for (std::size_t i = 0; i < t.dim0(); ++i) {
        Json t1 = Json::array();
        for (std::size_t j = 0; j < t.dim1(); ++j) {
            Json t2 = Json::array();
            for (std::size_t k = 0; k < t.dim2(); ++k) t2.push_back(t(i, j, k));
            t1.push_back(std::move(t2));
        }
        t0.push_back(std::move(t1));
    }
    return t0;
}

inline Json to_json(const std::vector<std::complex<double>>& eig) {
    Json a = Json::array();
    for (const auto& l : eig) a.push_back(Json{{"re", l.real()}, {"im", l.imag()}});
    return a;
}

} // namespace kcc
