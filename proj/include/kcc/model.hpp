#pragma once

// Vector-field models and the line-based model file format:
//
//   # comment to end of line, blank lines ignored
//   dim 2
//   param a 2.0
//   x1' = a*x2
//   x2' = -x1
//
// The `dim` line must appear exactly once and before any component line.
// Every component x1'..xn' must be defined exactly once. Parameters must be
// declared on an earlier line than their first use.

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kcc/errors.hpp"
#include "kcc/expr.hpp"

namespace kcc {

// First and second partial derivative trees of every component, built once per
// model. d2 stores one tree per unordered index pair and mirrors the pointer,
// so the evaluated Hessian is symmetric bit for bit.
struct DerivTables {
    std::vector<std::vector<ExprPtr>> d1;               // d1[i][j] = dX^i/dx^j
    std::vector<std::vector<std::vector<ExprPtr>>> d2;  // d2[i][j][k], j,k full
    bool domain_warning = false;
};

class VectorFieldModel {
public:
    VectorFieldModel(int n, std::vector<ExprPtr> components,
                     std::map<std::string, double> params)
        : n_(n), components_(std::move(components)), params_(std::move(params)),
          cache_(std::make_shared<Cache>()) {
        if (n_ < 1) throw SemanticError("dimension must be at least 1");
        if (components_.size() != static_cast<std::size_t>(n_))
            throw SemanticError("expected " + std::to_string(n_) + " components, got " +
                                std::to_string(components_.size()));
    }

    int dim() const noexcept { return n_; }
    const std::vector<ExprPtr>& components() const noexcept { return components_; }
    const std::map<std::string, double>& params() const noexcept { return params_; }

    // i is 0-based here and everywhere in the numeric layer.
    double eval_component(std::size_t i, std::span<const double> x) const {
        return evaluate(components_[i], x, params_);
    }

    std::vector<double> eval(std::span<const double> x) const {
        std::vector<double> v(static_cast<std::size_t>(n_));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = eval_component(i, x);
        return v;
    }

    // Same expressions, different parameter values. The derivative cache is
    // shared: the trees do not depend on parameter values.
    VectorFieldModel with_params(std::map<std::string, double> params) const {
        for (const auto& [name, value] : params)
            if (!params_.count(name)) throw SemanticError("unknown parameter '" + name + "'");
        std::map<std::string, double> merged = params_;
        for (const auto& [name, value] : params) merged[name] = value;
        VectorFieldModel m(n_, components_, std::move(merged));
        m.cache_ = cache_;
        return m;
    }

    // Built on first use, then immutable; safe for concurrent readers.
    const DerivTables& derivatives() const {
        std::call_once(cache_->once, [this] {
            auto t = std::make_unique<DerivTables>();
            const std::size_t n = static_cast<std::size_t>(n_);
            t->d1.resize(n);
            t->d2.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                t->d1[i].resize(n);
                for (std::size_t j = 0; j < n; ++j) {
                    Derivative d = differentiate(components_[i], static_cast<int>(j) + 1);
                    t->d1[i][j] = d.expr;
                    t->domain_warning |= d.domain_warning;
                }
                t->d2[i].assign(n, std::vector<ExprPtr>(n));
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t k = j; k < n; ++k) {
                        Derivative d = differentiate(t->d1[i][j], static_cast<int>(k) + 1);
                        t->d2[i][j][k] = d.expr;
                        t->d2[i][k][j] = d.expr;
                        t->domain_warning |= d.domain_warning;
                    }
            }
            cache_->tables = std::move(t);
        });
        return *cache_->tables;
    }

private:
    struct Cache {
        std::once_flag once;
        std::unique_ptr<DerivTables> tables;
    };

    int n_;
    std::vector<ExprPtr> components_;
    std::map<std::string, double> params_;
    std::shared_ptr<Cache> cache_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

inline double parse_param_number(std::string_view text, int line) {
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw SyntaxError(line, 1, "malformed number '" + std::string(text) + "'");
    return v;
}

} // namespace detail

inline VectorFieldModel parse_model(std::string_view source) {
    int n = 0;
    bool dim_seen = false;
    std::map<std::string, double> params;
    std::set<std::string> param_names;
    std::vector<ExprPtr> components;
    std::vector<bool> defined;

    std::istringstream in{std::string(source)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;

        std::size_t ws = line.find_first_of(" \t");
        std::string_view head = line.substr(0, ws);

        if (head == "dim") {
            if (dim_seen) throw SemanticError("duplicate dim line at line " +
                                              std::to_string(line_no));
            if (ws == std::string_view::npos)
                throw SyntaxError(line_no, static_cast<int>(line.size()) + 1,
                                  "expected dimension after 'dim'");
            std::string_view rest = detail::trim(line.substr(ws));
            int value = 0;
            auto res = std::from_chars(rest.data(), rest.data() + rest.size(), value);
            if (res.ec != std::errc() || res.ptr != rest.data() + rest.size())
                throw SyntaxError(line_no, 1, "malformed dimension '" + std::string(rest) + "'");
            if (value < 1) throw SemanticError("dimension must be at least 1 (line " +
                                               std::to_string(line_no) + ")");
            n = value;
            dim_seen = true;
            components.assign(static_cast<std::size_t>(n), nullptr);
            defined.assign(static_cast<std::size_t>(n), false);
            continue;
        }

        if (head == "param") {
            if (ws == std::string_view::npos)
                throw SyntaxError(line_no, static_cast<int>(line.size()) + 1,
                                  "expected name and value after 'param'");
            std::string_view rest = detail::trim(line.substr(ws));
            std::size_t ws2 = rest.find_first_of(" \t");
            if (ws2 == std::string_view::npos)
                throw SyntaxError(line_no, 1, "expected value after parameter name");
            std::string name(detail::trim(rest.substr(0, ws2)));
            std::string_view value_text = detail::trim(rest.substr(ws2));
            if (name.empty() || !detail::is_ident_start(name[0]))
                throw SyntaxError(line_no, 1, "malformed parameter name '" + name + "'");
            for (char c : name)
                if (!detail::is_ident_char(c))
                    throw SyntaxError(line_no, 1, "malformed parameter name '" + name + "'");
            if (detail::function_table().count(name) || detail::is_rejected_function(name))
                throw SemanticError("parameter name '" + name + "' collides with a function name (line " +
                                    std::to_string(line_no) + ")");
            if (name.size() >= 2 && name[0] == 'x') {
                bool digits = true;
                for (std::size_t i = 1; i < name.size(); ++i)
                    if (!detail::is_digit(name[i])) digits = false;
                if (digits)
                    throw SemanticError("parameter name '" + name +
                                        "' collides with a variable name (line " +
                                        std::to_string(line_no) + ")");
            }
            if (param_names.count(name))
                throw SemanticError("duplicate parameter '" + name + "' (line " +
                                    std::to_string(line_no) + ")");
            params[name] = detail::parse_param_number(value_text, line_no);
            param_names.insert(name);
            continue;
        }

        // Component line: x<INT>' = EXPR
        if (!head.empty() && head[0] == 'x') {
            std::size_t eq = line.find('=');
            if (eq == std::string_view::npos)
                throw SyntaxError(line_no, static_cast<int>(line.size()) + 1, "expected '='");
            std::string_view lhs = detail::trim(line.substr(0, eq));
            if (lhs.size() < 3 || lhs.back() != '\'')
                throw SyntaxError(line_no, 1, "expected component declaration like \"x1' = ...\"");
            std::string_view idx_text = lhs.substr(1, lhs.size() - 2);
            int idx = 0;
            auto res = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), idx);
            if (res.ec != std::errc() || res.ptr != idx_text.data() + idx_text.size())
                throw SyntaxError(line_no, 2, "malformed component index '" +
                                  std::string(idx_text) + "'");
            if (!dim_seen)
                throw SemanticError("component defined before dim line (line " +
                                    std::to_string(line_no) + ")");
            if (idx < 1 || idx > n)
                throw SemanticError("component index " + std::to_string(idx) +
                                    " out of range 1.." + std::to_string(n) + " (line " +
                                    std::to_string(line_no) + ")");
            if (defined[static_cast<std::size_t>(idx) - 1])
                throw SemanticError("component x" + std::to_string(idx) +
                                    "' defined twice (line " + std::to_string(line_no) + ")");
            std::string_view expr_text = line.substr(eq + 1);
            // Column offset so error positions refer to the full line.
            int col0 = static_cast<int>((line.data() - raw.data()) + static_cast<std::ptrdiff_t>(eq) + 1);
            components[static_cast<std::size_t>(idx) - 1] =
                parse_expression(expr_text, n, param_names, line_no, col0);
            defined[static_cast<std::size_t>(idx) - 1] = true;
            continue;
        }

        throw SyntaxError(line_no, 1, "unrecognized line '" + std::string(line) + "'");
    }

    if (!dim_seen) throw SemanticError("model has no dim line");
    for (int i = 0; i < n; ++i)
        if (!defined[static_cast<std::size_t>(i)])
            throw SemanticError("component x" + std::to_string(i + 1) + "' is not defined");

    return VectorFieldModel(n, std::move(components), std::move(params));
}

inline VectorFieldModel parse_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_model(buf.str());
}

} // namespace kcc
