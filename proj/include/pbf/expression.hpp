#pragma once

#include <cctype>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pbf/error.hpp"

namespace pbf {

/// Small arithmetic expression over named covariates, used to express true
/// regression functions in configs and on the command line ("x^2",
/// "exp(0.5*x) - z", ...). Supports + - * / ^, unary minus, parentheses and
/// exp, log, sqrt, sin, cos, abs.
class Expression {
public:
    Expression() = default;

    static Expression parse(const std::string& text, std::vector<std::string> variables = {"x", "z"}) {
        Expression e;
        e.text_ = text;
        e.variables_ = std::move(variables);
        Parser p{text, e.variables_, 0};
        e.root_ = p.parseSum();
        p.skipSpace();
        if (p.pos != text.size())
            fail(ErrorCode::ParseError, "data-model", "unexpected '" + text.substr(p.pos) + "' in expression '" + text + "'");
        return e;
    }

    bool empty() const noexcept { return root_ == nullptr; }
    const std::string& text() const noexcept { return text_; }

    double operator()(std::span<const double> vars) const { return eval(*root_, vars); }
    double operator()(double x) const {
        const double v[1] = {x};
        return eval(*root_, v);
    }

private:
    enum class Op { Number, Var, Add, Sub, Mul, Div, Pow, Neg, Exp, Log, Sqrt, Sin, Cos, Abs };

    struct Node {
        Op op;
        double value = 0.0;
        std::size_t var = 0;
        std::shared_ptr<const Node> lhs, rhs;
    };
    using NodePtr = std::shared_ptr<const Node>;

    static NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
        auto n = std::make_shared<Node>();
        n->op = op;
        n->lhs = std::move(a);
        n->rhs = std::move(b);
        return n;
    }

    struct Parser {
        const std::string& s;
        const std::vector<std::string>& vars;
        std::size_t pos;

        void skipSpace() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool eat(char c) {
            skipSpace();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }
        NodePtr parseSum() {
            NodePtr lhs = parseProduct();
            for (;;) {
                if (eat('+')) lhs = make(Op::Add, lhs, parseProduct());
                else if (eat('-')) lhs = make(Op::Sub, lhs, parseProduct());
                else return lhs;
            }
        }
        NodePtr parseProduct() {
            NodePtr lhs = parseUnary();
            for (;;) {
                if (eat('*')) lhs = make(Op::Mul, lhs, parseUnary());
                else if (eat('/')) lhs = make(Op::Div, lhs, parseUnary());
                else return lhs;
            }
        }
        NodePtr parseUnary() {
            if (eat('-')) return make(Op::Neg, parseUnary());
            if (eat('+')) return parseUnary();
            return parsePower();
        }
        NodePtr parsePower() {
            NodePtr base = parseAtom();
            if (eat('^')) return make(Op::Pow, base, parseUnary());  // right associative
            return base;
        }
        NodePtr parseAtom() {
            skipSpace();
            if (pos >= s.size()) fail(ErrorCode::ParseError, "data-model", "unexpected end of expression '" + s + "'");
            if (eat('(')) {
                NodePtr inner = parseSum();
                if (!eat(')')) fail(ErrorCode::ParseError, "data-model", "missing ')' in '" + s + "'");
                return inner;
            }
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                std::size_t used = 0;
                const double v = std::stod(s.substr(pos), &used);
                pos += used;
                auto n = std::make_shared<Node>();
                n->op = Op::Number;
                n->value = v;
                return n;
            }
            if (std::isalpha(static_cast<unsigned char>(c))) {
                const std::size_t start = pos;
                while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
                const std::string name = s.substr(start, pos - start);
                for (std::size_t k = 0; k < vars.size(); ++k) {
                    if (vars[k] == name) {
                        auto n = std::make_shared<Node>();
                        n->op = Op::Var;
                        n->var = k;
                        return n;
                    }
                }
                static const std::pair<const char*, Op> functions[] = {
                    {"exp", Op::Exp}, {"log", Op::Log}, {"sqrt", Op::Sqrt},
                    {"sin", Op::Sin}, {"cos", Op::Cos}, {"abs", Op::Abs}};
                for (const auto& [fname, op] : functions) {
                    if (name == fname) {
                        if (!eat('(')) fail(ErrorCode::ParseError, "data-model", name + " needs '('");
                        NodePtr arg = parseSum();
                        if (!eat(')')) fail(ErrorCode::ParseError, "data-model", "missing ')' after " + name);
                        return make(op, arg);
                    }
                }
                if (name == "pi") {
                    auto n = std::make_shared<Node>();
                    n->op = Op::Number;
                    n->value = 3.14159265358979323846;
                    return n;
                }
                fail(ErrorCode::ParseError, "data-model", "unknown identifier '" + name + "'");
            }
            fail(ErrorCode::ParseError, "data-model", std::string("unexpected character '") + c + "'");
        }
    };

    static double eval(const Node& n, std::span<const double> v) {
        switch (n.op) {
            case Op::Number: return n.value;
            case Op::Var:
                if (n.var >= v.size()) fail(ErrorCode::DimensionMismatch, "data-model", "expression variable out of range");
                return v[n.var];
            case Op::Add: return eval(*n.lhs, v) + eval(*n.rhs, v);
            case Op::Sub: return eval(*n.lhs, v) - eval(*n.rhs, v);
            case Op::Mul: return eval(*n.lhs, v) * eval(*n.rhs, v);
            case Op::Div: return eval(*n.lhs, v) / eval(*n.rhs, v);
            case Op::Pow: {
                const double base = eval(*n.lhs, v);
                const double e = eval(*n.rhs, v);
                if (e == std::round(e) && std::fabs(e) <= 16) {
                    double r = 1.0;
                    for (int k = 0; k < static_cast<int>(std::fabs(e)); ++k) r *= base;
                    return e < 0 ? 1.0 / r : r;
                }
                return std::pow(base, e);
            }
            case Op::Neg: return -eval(*n.lhs, v);
            case Op::Exp: return std::exp(eval(*n.lhs, v));
            case Op::Log: return std::log(eval(*n.lhs, v));
            case Op::Sqrt: return std::sqrt(eval(*n.lhs, v));
            case Op::Sin: return std::sin(eval(*n.lhs, v));
            case Op::Cos: return std::cos(eval(*n.lhs, v));
            case Op::Abs: return std::fabs(eval(*n.lhs, v));
        }
        return 0.0;
    }

    std::string text_;
    std::vector<std::string> variables_;
    NodePtr root_;
};

}  // namespace pbf
