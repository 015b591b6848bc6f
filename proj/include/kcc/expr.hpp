#pragma once

// Expression trees for vector-field components.
//
// Grammar (precedence low to high, `^` right-associative):
//
//   expr    := term (('+'|'-') term)*
//   term    := factor (('*'|'/') factor)*
//   factor  := '-' factor | power
//   power   := primary ('^' factor)?
//   primary := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
//
// Identifiers are the variables x1..xn, the functions sin cos tan exp ln sqrt
// tanh, or declared parameter names. Numeric literals are decimal with an
// optional exponent. Trees are immutable after construction; the only rewrite
// ever applied is constant folding of literal subtrees.

#include <charconv>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "kcc/errors.hpp"

namespace kcc {

enum class UnaryOp { Neg, Sin, Cos, Tan, Exp, Ln, Sqrt, Tanh };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Kind { Constant, Variable, Parameter, Unary, Binary };

    Kind kind;
    double value = 0.0;   // Constant
    int index = 0;        // Variable, 1-based as written in source (x1..xn)
    std::string name;     // Parameter
    UnaryOp uop = UnaryOp::Neg;
    BinaryOp bop = BinaryOp::Add;
    ExprPtr lhs;          // Unary operand or binary left
    ExprPtr rhs;          // binary right
};

inline ExprPtr make_constant(double v) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Constant;
    e->value = v;
    return e;
}

inline ExprPtr make_variable(int index) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Variable;
    e->index = index;
    return e;
}

inline ExprPtr make_parameter(std::string name) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Parameter;
    e->name = std::move(name);
    return e;
}

namespace detail {

inline double apply_unary(UnaryOp op, double x) {
    switch (op) {
        case UnaryOp::Neg: return -x;
        case UnaryOp::Sin: return std::sin(x);
        case UnaryOp::Cos: return std::cos(x);
        case UnaryOp::Tan: return std::tan(x);
        case UnaryOp::Exp: return std::exp(x);
        case UnaryOp::Ln: return std::log(x);
        case UnaryOp::Sqrt: return std::sqrt(x);
        case UnaryOp::Tanh: return std::tanh(x);
    }
    return 0.0;
}

inline double apply_binary(BinaryOp op, double a, double b) {
    switch (op) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div: return a / b;
        case BinaryOp::Pow: return std::pow(a, b);
    }
    return 0.0;
}

} // namespace detail

// Node constructors fold literal operands when the folded value is finite;
// domain violations are left in the tree so they surface at evaluation.
inline ExprPtr make_unary(UnaryOp op, ExprPtr a) {
    if (a->kind == Expr::Kind::Constant) {
        const double v = detail::apply_unary(op, a->value);
        if (std::isfinite(v)) return make_constant(v);
    }
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Unary;
    e->uop = op;
    e->lhs = std::move(a);
    return e;
}

inline ExprPtr make_binary(BinaryOp op, ExprPtr a, ExprPtr b) {
    if (a->kind == Expr::Kind::Constant && b->kind == Expr::Kind::Constant) {
        const double v = detail::apply_binary(op, a->value, b->value);
        if (std::isfinite(v)) return make_constant(v);
    }
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Binary;
    e->bop = op;
    e->lhs = std::move(a);
    e->rhs = std::move(b);
    return e;
}

// ---------------------------------------------------------------------------
// Printing (used by diagnostics and the parse/print round-trip tests)

namespace detail {

inline std::string format_shortest(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Precedence levels: + - (1), * / (2), unary - (3), ^ (4), atoms (5).
inline int precedence(const Expr& e) {
    switch (e.kind) {
        case Expr::Kind::Constant: return e.value < 0.0 ? 3 : 5;
        case Expr::Kind::Variable:
        case Expr::Kind::Parameter: return 5;
        case Expr::Kind::Unary: return e.uop == UnaryOp::Neg ? 3 : 5;
        case Expr::Kind::Binary:
            switch (e.bop) {
                case BinaryOp::Add:
                case BinaryOp::Sub: return 1;
                case BinaryOp::Mul:
                case BinaryOp::Div: return 2;
                case BinaryOp::Pow: return 4;
            }
    }
    return 5;
}

inline const char* unary_name(UnaryOp op) {
    switch (op) {
        case UnaryOp::Neg: return "-";
        case UnaryOp::Sin: return "sin";
        case UnaryOp::Cos: return "cos";
        case UnaryOp::Tan: return "tan";
        case UnaryOp::Exp: return "exp";
        case UnaryOp::Ln: return "ln";
        case UnaryOp::Sqrt: return "sqrt";
        case UnaryOp::Tanh: return "tanh";
    }
    return "?";
}

inline void print_node(const Expr& e, std::string& out) {
    const auto child = [&out](const ExprPtr& c, int min_prec) {
        if (precedence(*c) < min_prec) {
            out += '(';
            print_node(*c, out);
            out += ')';
        } else {
            print_node(*c, out);
        }
    };
    switch (e.kind) {
        case Expr::Kind::Constant:
            out += format_shortest(e.value);
            return;
        case Expr::Kind::Variable:
            out += 'x';
            out += std::to_string(e.index);
            return;
        case Expr::Kind::Parameter:
            out += e.name;
            return;
        case Expr::Kind::Unary:
            if (e.uop == UnaryOp::Neg) {
                out += '-';
                child(e.lhs, 3);
            } else {
                out += unary_name(e.uop);
                out += '(';
                print_node(*e.lhs, out);
                out += ')';
            }
            return;
        case Expr::Kind::Binary: {
            const char* sym = "";
            int lp = 0, rp = 0;
            switch (e.bop) {
                case BinaryOp::Add: sym = " + "; lp = 1; rp = 2; break;
                case BinaryOp::Sub: sym = " - "; lp = 1; rp = 2; break;
                case BinaryOp::Mul: sym = "*"; lp = 2; rp = 3; break;
                case BinaryOp::Div: sym = "/"; lp = 2; rp = 3; break;
                case BinaryOp::Pow: sym = "^"; lp = 5; rp = 3; break;
            }
            child(e.lhs, lp);
            out += sym;
            child(e.rhs, rp);
            return;
        }
    }
}

} // namespace detail

inline std::string to_string(const ExprPtr& e) {
    std::string out;
    detail::print_node(*e, out);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

[[noreturn]] inline void eval_fail(const Expr& e, const std::string& reason) {
    std::string node;
    print_node(e, node);
    throw EvalError(reason + " in '" + node + "'");
}

inline double eval_node(const Expr& e, std::span<const double> x,
                        const std::map<std::string, double>& params) {
    switch (e.kind) {
        case Expr::Kind::Constant:
            return e.value;
        case Expr::Kind::Variable:
            if (e.index < 1 || static_cast<std::size_t>(e.index) > x.size())
                eval_fail(e, "variable index out of range");
            return x[static_cast<std::size_t>(e.index) - 1];
        case Expr::Kind::Parameter: {
            auto it = params.find(e.name);
            if (it == params.end()) eval_fail(e, "unknown parameter");
            return it->second;
        }
        case Expr::Kind::Unary: {
            const double a = eval_node(*e.lhs, x, params);
            if (e.uop == UnaryOp::Ln && a <= 0.0) eval_fail(e, "ln of a non-positive value");
            if (e.uop == UnaryOp::Sqrt && a < 0.0) eval_fail(e, "sqrt of a negative value");
            const double v = apply_unary(e.uop, a);
            if (!std::isfinite(v) && std::isfinite(a)) eval_fail(e, "non-finite result");
            return v;
        }
        case Expr::Kind::Binary: {
            const double a = eval_node(*e.lhs, x, params);
            const double b = eval_node(*e.rhs, x, params);
            if (e.bop == BinaryOp::Div && b == 0.0) eval_fail(e, "division by zero");
            const double v = apply_binary(e.bop, a, b);
            if (!std::isfinite(v) && std::isfinite(a) && std::isfinite(b))
                eval_fail(e, "non-finite result");
            return v;
        }
    }
    return 0.0;
}

} // namespace detail

inline double evaluate(const ExprPtr& e, std::span<const double> x,
                       const std::map<std::string, double>& params) {
    return detail::eval_node(*e, x, params);
}

// ---------------------------------------------------------------------------
// Structural differentiation
//
// `axis` is 1-based, matching the variable numbering x1..xn. The result is
// exact; no rewriting beyond constant folding is applied, so derivative trees
// can be large. `domain_warning` is set when a rule introduces ln or division
// (a potentially singular evaluation point): d(ln u), d(sqrt u), d(u/v), and
// the exp*ln rewrite for a power with non-constant exponent.

struct Derivative {
    ExprPtr expr;
    bool domain_warning = false;
};

namespace detail {

inline ExprPtr diff_node(const ExprPtr& e, int axis, bool& warn) {
    using K = Expr::Kind;
    switch (e->kind) {
        case K::Constant:
        case K::Parameter:
            return make_constant(0.0);
        case K::Variable:
            return make_constant(e->index == axis ? 1.0 : 0.0);
        case K::Unary: {
            ExprPtr du = diff_node(e->lhs, axis, warn);
            const ExprPtr& u = e->lhs;
            switch (e->uop) {
                case UnaryOp::Neg:
                    return make_unary(UnaryOp::Neg, du);
                case UnaryOp::Sin:
                    return make_binary(BinaryOp::Mul, make_unary(UnaryOp::Cos, u), du);
                case UnaryOp::Cos:
                    return make_binary(BinaryOp::Mul,
                                       make_unary(UnaryOp::Neg, make_unary(UnaryOp::Sin, u)), du);
                case UnaryOp::Tan:
                    // d tan u = (1 + tan^2 u) u'
                    return make_binary(
                        BinaryOp::Mul,
                        make_binary(BinaryOp::Add, make_constant(1.0),
                                    make_binary(BinaryOp::Pow, make_unary(UnaryOp::Tan, u),
                                                make_constant(2.0))),
                        du);
                case UnaryOp::Exp:
                    return make_binary(BinaryOp::Mul, make_unary(UnaryOp::Exp, u), du);
                case UnaryOp::Ln:
                    warn = true;
                    return make_binary(BinaryOp::Div, du, u);
                case UnaryOp::Sqrt:
                    warn = true;
                    return make_binary(
                        BinaryOp::Div, du,
                        make_binary(BinaryOp::Mul, make_constant(2.0), make_unary(UnaryOp::Sqrt, u)));
                case UnaryOp::Tanh:
                    // d tanh u = (1 - tanh^2 u) u'
                    return make_binary(
                        BinaryOp::Mul,
                        make_binary(BinaryOp::Sub, make_constant(1.0),
                                    make_binary(BinaryOp::Pow, make_unary(UnaryOp::Tanh, u),
                                                make_constant(2.0))),
                        du);
            }
            return make_constant(0.0);
        }
        case K::Binary: {
            const ExprPtr& u = e->lhs;
            const ExprPtr& v = e->rhs;
            switch (e->bop) {
                case BinaryOp::Add:
                    return make_binary(BinaryOp::Add, diff_node(u, axis, warn),
                                       diff_node(v, axis, warn));
                case BinaryOp::Sub:
                    return make_binary(BinaryOp::Sub, diff_node(u, axis, warn),
                                       diff_node(v, axis, warn));
                case BinaryOp::Mul:
                    return make_binary(
                        BinaryOp::Add, make_binary(BinaryOp::Mul, diff_node(u, axis, warn), v),
                        make_binary(BinaryOp::Mul, u, diff_node(v, axis, warn)));
                case BinaryOp::Div: {
                    warn = true;
                    ExprPtr num = make_binary(
                        BinaryOp::Sub, make_binary(BinaryOp::Mul, diff_node(u, axis, warn), v),
                        make_binary(BinaryOp::Mul, u, diff_node(v, axis, warn)));
                    return make_binary(BinaryOp::Div, num,
                                       make_binary(BinaryOp::Pow, v, make_constant(2.0)));
                }
                case BinaryOp::Pow: {
                    if (v->kind == K::Constant) {
                        // d u^c = c u^(c-1) u'
                        ExprPtr p = make_binary(BinaryOp::Pow, u, make_constant(v->value - 1.0));
                        return make_binary(
                            BinaryOp::Mul,
                            make_binary(BinaryOp::Mul, make_constant(v->value), p),
                            diff_node(u, axis, warn));
                    }
                    // General exponent via u^v = exp(v ln u):
                    // d u^v = u^v (v' ln u + v u'/u)
                    warn = true;
                    ExprPtr term1 =
                        make_binary(BinaryOp::Mul, diff_node(v, axis, warn), make_unary(UnaryOp::Ln, u));
                    ExprPtr term2 = make_binary(
                        BinaryOp::Mul, v, make_binary(BinaryOp::Div, diff_node(u, axis, warn), u));
                    return make_binary(BinaryOp::Mul, e,
                                       make_binary(BinaryOp::Add, term1, term2));
                }
            }
            return make_constant(0.0);
        }
    }
    return make_constant(0.0);
}

} // namespace detail

inline Derivative differentiate(const ExprPtr& e, int axis) {
    Derivative d;
    d.expr = detail::diff_node(e, axis, d.domain_warning);
    return d;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline const std::map<std::string_view, UnaryOp>& function_table() {
    static const std::map<std::string_view, UnaryOp> table = {
        {"sin", UnaryOp::Sin}, {"cos", UnaryOp::Cos},   {"tan", UnaryOp::Tan},
        {"exp", UnaryOp::Exp}, {"ln", UnaryOp::Ln},     {"sqrt", UnaryOp::Sqrt},
        {"tanh", UnaryOp::Tanh}};
    return table;
}

// Non-smooth function names get a targeted message; the formulas downstream
// need two continuous derivatives.
inline bool is_rejected_function(std::string_view name) {
    return name == "abs" || name == "sign" || name == "floor" || name == "ceil" ||
           name == "min" || name == "max" || name == "mod";
}

class ExprParser {
public:
    ExprParser(std::string_view src, int n_vars, const std::set<std::string>& params,
               int line, int column_offset)
        : src_(src), n_(n_vars), params_(params), line_(line), col0_(column_offset) {}

    ExprPtr parse_all() {
        ExprPtr e = parse_expr();
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected trailing input");
        return e;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
    int n_;
    const std::set<std::string>& params_;
    int line_;
    int col0_;

    [[noreturn]] void fail(const std::string& msg) const {
        throw SyntaxError(line_, col0_ + static_cast<int>(pos_) + 1, msg);
    }

    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) ++pos_;
    }

    bool peek_is(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }

    bool consume(char c) {
        if (peek_is(c)) {
            ++pos_;
            return true;
        }
        return false;
    }

    ExprPtr parse_expr() {
        ExprPtr e = parse_term();
        for (;;) {
            if (consume('+'))
                e = make_binary(BinaryOp::Add, e, parse_term());
            else if (consume('-'))
                e = make_binary(BinaryOp::Sub, e, parse_term());
            else
                return e;
        }
    }

    ExprPtr parse_term() {
        ExprPtr e = parse_factor();
        for (;;) {
            if (consume('*'))
                e = make_binary(BinaryOp::Mul, e, parse_factor());
            else if (consume('/'))
                e = make_binary(BinaryOp::Div, e, parse_factor());
            else
                return e;
        }
    }

    ExprPtr parse_factor() {
        if (consume('-')) return make_unary(UnaryOp::Neg, parse_factor());
        return parse_power();
    }

    ExprPtr parse_power() {
        ExprPtr base = parse_primary();
        if (consume('^')) {
            // Exponent parses as a factor, so `x^-2` works and `a^b^c`
            // associates to the right.
            return make_binary(BinaryOp::Pow, base, parse_factor());
        }
        return base;
    }

    ExprPtr parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of expression");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            ExprPtr e = parse_expr();
            if (!consume(')')) fail("expected ')'");
            return e;
        }
        if (is_digit(c) || c == '.') return parse_number();
        if (is_ident_start(c)) return parse_identifier();
        fail(std::string("unexpected character '") + c + "'");
    }

    ExprPtr parse_number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
        }
        if (pos_ == start || (pos_ == start + 1 && src_[start] == '.'))
            fail("malformed number");
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && is_digit(src_[pos_])) {
                while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
            } else {
                pos_ = mark; // not an exponent; leave 'e...' for the caller to choke on
            }
        }
        double v = 0.0;
        auto res = std::from_chars(src_.data() + start, src_.data() + pos_, v);
        if (res.ec != std::errc() || res.ptr != src_.data() + pos_) fail("malformed number");
        return make_constant(v);
    }

    ExprPtr parse_identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
        const std::string_view name = src_.substr(start, pos_ - start);

        if (auto it = function_table().find(name); it != function_table().end()) {
            if (!consume('(')) fail("expected '(' after function name");
            ExprPtr arg = parse_expr();
            if (!consume(')')) fail("unclosed parenthesis in function call");
            return make_unary(it->second, arg);
        }
        if (is_rejected_function(name))
            throw SemanticError("function '" + std::string(name) +
                                "' is not supported (twice-differentiable primitives only)");
        if (name == "log")
            throw SemanticError("unknown function 'log' (the natural logarithm is 'ln')");

        // x<digits> is a variable reference.
        if (name.size() >= 2 && name[0] == 'x' && is_digit(name[1])) {
            bool all_digits = true;
            for (std::size_t i = 1; i < name.size(); ++i)
                if (!is_digit(name[i])) all_digits = false;
            if (all_digits) {
                int idx = 0;
                auto res = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
                if (res.ec != std::errc()) throw SemanticError("bad variable index in '" +
                                                               std::string(name) + "'");
                if (idx < 1 || idx > n_)
                    throw SemanticError("variable index " + std::to_string(idx) +
                                        " out of range 1.." + std::to_string(n_));
                return make_variable(idx);
            }
        }
        if (params_.count(std::string(name))) return make_parameter(std::string(name));
        throw SemanticError("unknown identifier '" + std::string(name) + "'");
    }
};

} // namespace detail

inline ExprPtr parse_expression(std::string_view src, int n_vars,
                                const std::set<std::string>& params = {},
                                int line = 0, int column_offset = 0) {
    if (n_vars < 1) throw SemanticError("dimension must be at least 1");
    return detail::ExprParser(src, n_vars, params, line, column_offset).parse_all();
}

// True when the tree contains a node that can fail at evaluation time.
inline bool has_singular_ops(const ExprPtr& e) {
    switch (e->kind) {
        case Expr::Kind::Constant:
        case Expr::Kind::Variable:
        case Expr::Kind::Parameter:
            return false;
        case Expr::Kind::Unary:
            if (e->uop == UnaryOp::Ln || e->uop == UnaryOp::Sqrt) return true;
            return has_singular_ops(e->lhs);
        case Expr::Kind::Binary:
            if (e->bop == BinaryOp::Div) return true;
            return has_singular_ops(e->lhs) || has_singular_ops(e->rhs);
    }
    return false;
}

} // namespace kcc
