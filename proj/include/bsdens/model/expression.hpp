#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "bsdens/errors.hpp"

namespace bsdens::model {

/// Variables an expression may reference; the evaluation context is indexed by this enum.
enum class Var : int { t = 0, x = 1, y = 2, z = 3, w = 4 };
inline constexpr int kVarCount = 5;
using VarValues = std::array<double, kVarCount>;

/// Arithmetic expression over t, x, y, z, w with symbolic differentiation.
///
/// Grammar (whitespace ignored, `^` binds tighter than unary minus and is right-associative):
///   expr    := term (("+" | "-") term)*
///   term    := unary (("*" | "/") unary)*
///   unary   := ("+" | "-") unary | power
///   power   := primary ("^" unary)?
///   primary := number | name | func "(" expr ")" | "(" expr ")"
///   func    := exp | log | sin | cos | tanh | abs | sqrt
///   name    := a permitted variable or the constants pi, e
class Expression {
public:
    enum class Op { constant, variable, add, sub, mul, div, pow, neg, exp, log, sin, cos, tanh, abs, sqrt, sign };

    struct Node {
        Op op;
        double value = 0.0;
        int var = 0;
        std::shared_ptr<const Node> a, b;
    };
    using NodePtr = std::shared_ptr<const Node>;

    Expression() : root_(make_const(0.0)) {}
    explicit Expression(NodePtr root) : root_(std::move(root)) {}

    /// Parses `text`; symbols outside `allowed` raise ParseError naming the symbol (column is 1-based).
    static Expression parse(std::string_view text, std::string_view allowed = "txyz") {
        Parser p{text, allowed};
        auto n = p.parse_expr();
        p.skip_ws();
        if (p.pos != text.size()) p.fail("unexpected character '" + std::string(1, text[p.pos]) + "'");
        return Expression(std::move(n));
    }

    double operator()(const VarValues& v) const { return eval(*root_, v); }

    double operator()(double t, double x, double y = 0.0, double z = 0.0, double w = 0.0) const {
        return eval(*root_, VarValues{t, x, y, z, w});
    }

    Expression derivative(Var v) const { return Expression(simplify(diff(root_, static_cast<int>(v)))); }

    bool depends_on(Var v) const { return uses(*root_, static_cast<int>(v)); }

    bool is_constant() const { return root_->op == Op::constant; }

    std::string to_string() const { return print(*root_); }

    const NodePtr& root() const { return root_; }

private:
    NodePtr root_;

    static NodePtr make_const(double v) { return std::make_shared<Node>(Node{Op::constant, v, 0, nullptr, nullptr}); }
    static NodePtr make_var(int i) { return std::make_shared<Node>(Node{Op::variable, 0.0, i, nullptr, nullptr}); }
    static NodePtr make(Op op, NodePtr a, NodePtr b = nullptr) {
        return simplify(std::make_shared<Node>(Node{op, 0.0, 0, std::move(a), std::move(b)}));
    }

    static bool is_const(const NodePtr& n, double v) { return n->op == Op::constant && n->value == v; }

    /// Local algebraic folding; keeps derivative trees small.
    static NodePtr simplify(NodePtr n) {
        const auto& a = n->a;
        const auto& b = n->b;
        const bool ca = a && a->op == Op::constant, cb = b && b->op == Op::constant;
        if (a && ca && (!b || cb) && n->op != Op::constant && n->op != Op::variable) {
            return make_const(eval(*n, VarValues{}));
        }
        switch (n->op) {
            case Op::add:
                if (is_const(a, 0.0)) return b;
                if (is_const(b, 0.0)) return a;
                break;
            case Op::sub:
                if (is_const(b, 0.0)) return a;
                if (is_const(a, 0.0)) return make(Op::neg, b);
                break;
            case Op::mul:
                if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
                if (is_const(a, 1.0)) return b;
                if (is_const(b, 1.0)) return a;
                break;
            case Op::div:
                if (is_const(a, 0.0)) return make_const(0.0);
                if (is_const(b, 1.0)) return a;
                break;
            case Op::pow:
                if (is_const(b, 0.0)) return make_const(1.0);
                if (is_const(b, 1.0)) return a;
                break;
            case Op::neg:
                if (a->op == Op::neg) return a->a;
                break;
            default:
                break;
        }
        return n;
    }

    static double eval(const Node& n, const VarValues& v) {
        switch (n.op) {
            case Op::constant: return n.value;
            case Op::variable: return v[n.var];
            case Op::add: return eval(*n.a, v) + eval(*n.b, v);
            case Op::sub: return eval(*n.a, v) - eval(*n.b, v);
            case Op::mul: return eval(*n.a, v) * eval(*n.b, v);
            case Op::div: return eval(*n.a, v) / eval(*n.b, v);
            case Op::pow: {
                const double base = eval(*n.a, v);
                const double ex = eval(*n.b, v);
                return std::pow(base, ex);
            }
            case Op::neg: return -eval(*n.a, v);
            case Op::exp: return std::exp(eval(*n.a, v));
            case Op::log: return std::log(eval(*n.a, v));
            case Op::sin: return std::sin(eval(*n.a, v));
            case Op::cos: return std::cos(eval(*n.a, v));
            case Op::tanh: return std::tanh(eval(*n.a, v));
            case Op::abs: return std::abs(eval(*n.a, v));
            case Op::sqrt: return std::sqrt(eval(*n.a, v));
            case Op::sign: {
                const double s = eval(*n.a, v);
                return s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
            }
        }
        return 0.0;
    }

    static bool uses(const Node& n, int i) {
        if (n.op == Op::variable) return n.var == i;
        return (n.a && uses(*n.a, i)) || (n.b && uses(*n.b, i));
    }

    static NodePtr diff(const NodePtr& n, int i) {
        const auto& a = n->a;
        const auto& b = n->b;
        switch (n->op) {
            case Op::constant: return make_const(0.0);
            case Op::variable: return make_const(n->var == i ? 1.0 : 0.0);
            case Op::add: return make(Op::add, diff(a, i), diff(b, i));
            case Op::sub: return make(Op::sub, diff(a, i), diff(b, i));
            case Op::mul: return make(Op::add, make(Op::mul, diff(a, i), b), make(Op::mul, a, diff(b, i)));
            case Op::div:
                return make(Op::div, make(Op::sub, make(Op::mul, diff(a, i), b), make(Op::mul, a, diff(b, i))),
                            make(Op::mul, b, b));
            case Op::pow: {
                if (!uses(*b, i)) {
                    // d(a^c) = c a^(c-1) a'
                    return make(Op::mul, make(Op::mul, b, make(Op::pow, a, make(Op::sub, b, make_const(1.0)))),
                                diff(a, i));
                }
                // d(a^b) = a^b (b' log a + b a'/a)
                return make(Op::mul, n,
                            make(Op::add, make(Op::mul, diff(b, i), make(Op::log, a)),
                                 make(Op::div, make(Op::mul, b, diff(a, i)), a)));
            }
            case Op::neg: return make(Op::neg, diff(a, i));
            case Op::exp: return make(Op::mul, n, diff(a, i));
            case Op::log: return make(Op::div, diff(a, i), a);
            case Op::sin: return make(Op::mul, make(Op::cos, a), diff(a, i));
            case Op::cos: return make(Op::neg, make(Op::mul, make(Op::sin, a), diff(a, i)));
            case Op::tanh:
                return make(Op::mul, make(Op::sub, make_const(1.0), make(Op::mul, n, n)), diff(a, i));
            case Op::abs: return make(Op::mul, make(Op::sign, a), diff(a, i));
            case Op::sqrt: return make(Op::div, diff(a, i), make(Op::mul, make_const(2.0), n));
            case Op::sign: return make_const(0.0);
        }
        return make_const(0.0);
    }

    static std::string print(const Node& n) {
        static constexpr const char* names = "txyzw";
        auto fn = [](const char* f, const Node& m) { return std::string(f) + "(" + print(m) + ")"; };
        switch (n.op) {
            case Op::constant: {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.17g", n.value);
                return buf;
            }
            case Op::variable: return std::string(1, names[n.var]);
            case Op::add: return "(" + print(*n.a) + " + " + print(*n.b) + ")";
            case Op::sub: return "(" + print(*n.a) + " - " + print(*n.b) + ")";
            case Op::mul: return "(" + print(*n.a) + " * " + print(*n.b) + ")";
            case Op::div: return "(" + print(*n.a) + " / " + print(*n.b) + ")";
            case Op::pow: return "(" + print(*n.a) + " ^ " + print(*n.b) + ")";
            case Op::neg: return "(-" + print(*n.a) + ")";
            case Op::exp: return fn("exp", *n.a);
            case Op::log: return fn("log", *n.a);
            case Op::sin: return fn("sin", *n.a);
            case Op::cos: return fn("cos", *n.a);
            case Op::tanh: return fn("tanh", *n.a);
            case Op::abs: return fn("abs", *n.a);
            case Op::sqrt: return fn("sqrt", *n.a);
            case Op::sign: return fn("sign", *n.a);
        }
        return "?";
    }

    struct Parser {
        std::string_view s;
        std::string_view allowed;
        std::size_t pos = 0;

        [[noreturn]] void fail(const std::string& msg) const {
            throw ParseError(msg, 1, static_cast<int>(pos) + 1);
        }

        void skip_ws() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }

        bool accept(char c) {
            skip_ws();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }

        NodePtr parse_expr() {
            auto lhs = parse_term();
            for (;;) {
                if (accept('+')) lhs = make(Op::add, lhs, parse_term());
                else if (accept('-')) lhs = make(Op::sub, lhs, parse_term());
                else return lhs;
            }
        }

        NodePtr parse_term() {
            auto lhs = parse_unary();
            for (;;) {
                if (accept('*')) lhs = make(Op::mul, lhs, parse_unary());
                else if (accept('/')) lhs = make(Op::div, lhs, parse_unary());
                else return lhs;
            }
        }

        NodePtr parse_unary() {
            if (accept('-')) return make(Op::neg, parse_unary());
            if (accept('+')) return parse_unary();
            return parse_power();
        }

        NodePtr parse_power() {
            auto base = parse_primary();
            if (accept('^')) return make(Op::pow, base, parse_unary());
            return base;
        }

        NodePtr parse_primary() {
            skip_ws();
            if (pos >= s.size()) fail("unexpected end of expression");
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                const std::string rest(s.substr(pos));
                char* end = nullptr;
                const double v = std::strtod(rest.c_str(), &end);
                if (end == rest.c_str()) fail("malformed number");
                pos += static_cast<std::size_t>(end - rest.c_str());
                return make_const(v);
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                const std::size_t start = pos;
                while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
                const std::string name(s.substr(start, pos - start));
                static const std::pair<const char*, Op> funcs[] = {{"exp", Op::exp},   {"log", Op::log},
                                                                   {"sin", Op::sin},   {"cos", Op::cos},
                                                                   {"tanh", Op::tanh}, {"abs", Op::abs},
                                                                   {"sqrt", Op::sqrt}};
                for (const auto& [fname, op] : funcs) {
                    if (name == fname) {
                        if (!accept('(')) fail("expected '(' after " + name);
                        auto arg = parse_expr();
                        if (!accept(')')) fail("expected ')'");
                        return make(op, arg);
                    }
                }
                if (name == "pi") return make_const(std::numbers::pi);
                if (name == "e") return make_const(std::numbers::e);
                if (name.size() == 1 && allowed.find(name[0]) != std::string_view::npos) {
                    static constexpr std::string_view order = "txyzw";
                    return make_var(static_cast<int>(order.find(name[0])));
                }
                pos = start;
                fail("undefined symbol '" + name + "'");
            }
            if (accept('(')) {
                auto inner = parse_expr();
                if (!accept(')')) fail("expected ')'");
                return inner;
            }
            fail("unexpected character '" + std::string(1, c) + "'");
        }
    };
};

}  // namespace bsdens::model
