#pragma once

/// Arithmetic expressions over one or two real variables.
///
/// Grammar (usual precedence, `^` right-associative and binding tighter
/// than unary minus, so `-x^2` is `-(x^2)`):
///
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := ('-' | '+') unary | power
///   power   := primary ('^' unary)?
///   primary := number | name | func '(' expr ')' | '(' expr ')'
///
/// Functions: exp log sin cos sqrt abs. Named parameters are substituted at
/// parse time, so a parsed Expr is closed over its variables only. The
/// parsed tree is constant-folded and flattened into postfix code.

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace impulse {

using ParamTable = std::map<std::string, double, std::less<>>;

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " at position " + std::to_string(position)),
          position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

enum class OpCode : unsigned char {
    constant, var0, var1,
    neg, add, sub, mul, div, pow,
    exp, log, sin, cos, sqrt, abs,
};

struct Instr {
    OpCode op;
    double value = 0.0;
};

inline bool is_unary_fn(OpCode op) {
    return op >= OpCode::exp || op == OpCode::neg;
}

inline bool is_binary(OpCode op) {
    return op >= OpCode::add && op <= OpCode::pow;
}

inline double apply_unary(OpCode op, double a) {
    switch (op) {
    case OpCode::neg: return -a;
    case OpCode::exp: return std::exp(a);
    case OpCode::log:
        if (!(a > 0.0)) throw EvalError("log of non-positive value");
        return std::log(a);
    case OpCode::sin: return std::sin(a);
    case OpCode::cos: return std::cos(a);
    case OpCode::sqrt:
        if (a < 0.0) throw EvalError("sqrt of negative value");
        return std::sqrt(a);
    case OpCode::abs: return std::fabs(a);
    default: break;
    }
    throw EvalError("bad unary opcode");
}

inline double apply_binary(OpCode op, double a, double b) {
    switch (op) {
    case OpCode::add: return a + b;
    case OpCode::sub: return a - b;
    case OpCode::mul: return a * b;
    case OpCode::div:
        if (b == 0.0) throw EvalError("division by zero");
        return a / b;
    case OpCode::pow: {
        const double r = std::pow(a, b);
        if (std::isnan(r) && !std::isnan(a) && !std::isnan(b))
            throw EvalError("pow domain error");
        return r;
    }
    default: break;
    }
    throw EvalError("bad binary opcode");
}

struct Node {
    OpCode op;
    double value = 0.0;
    std::unique_ptr<Node> lhs;
    std::unique_ptr<Node> rhs;

    bool is_constant() const { return op == OpCode::constant; }
};

using NodePtr = std::unique_ptr<Node>;

inline NodePtr make_leaf(OpCode op, double value = 0.0) {
    auto n = std::make_unique<Node>();
    n->op = op;
    n->value = value;
    return n;
}

// Folds constant subtrees. Folding an invalid constant operation (such as
// log(-1)) is a parse-time error rather than a deferred evaluation error.
inline NodePtr make_node(OpCode op, NodePtr lhs, NodePtr rhs, std::size_t pos) {
    try {
        if (rhs == nullptr && lhs->is_constant())
            return make_leaf(OpCode::constant, apply_unary(op, lhs->value));
        if (rhs != nullptr && lhs->is_constant() && rhs->is_constant())
            return make_leaf(OpCode::constant, apply_binary(op, lhs->value, rhs->value));
    } catch (const EvalError& e) {
        throw ParseError(std::string("constant expression: ") + e.what(), pos);
    }
    auto n = std::make_unique<Node>();
    n->op = op;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
}

class Parser {
public:
    Parser(std::string_view text, const std::vector<std::string>& vars, const ParamTable& params)
        : text_(text), vars_(vars), params_(params) {}

    NodePtr parse() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
        auto n = parse_expr();
        skip_ws();
        if (pos_ != text_.size())
            throw ParseError(std::string("unexpected character '") + text_[pos_] + "'", pos_);
        return n;
    }

private:
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr parse_expr() {
        auto lhs = parse_term();
        for (;;) {
            const std::size_t at = pos_;
            if (accept('+')) lhs = make_node(OpCode::add, std::move(lhs), parse_term(), at);
            else if (accept('-')) lhs = make_node(OpCode::sub, std::move(lhs), parse_term(), at);
            else return lhs;
        }
    }

    NodePtr parse_term() {
        auto lhs = parse_unary();
        for (;;) {
            const std::size_t at = pos_;
            if (accept('*')) lhs = make_node(OpCode::mul, std::move(lhs), parse_unary(), at);
            else if (accept('/')) lhs = make_node(OpCode::div, std::move(lhs), parse_unary(), at);
            else return lhs;
        }
    }

    NodePtr parse_unary() {
        const std::size_t at = pos_;
        if (accept('-')) return make_node(OpCode::neg, parse_unary(), nullptr, at);
        if (accept('+')) return parse_unary();
        return parse_power();
    }

    NodePtr parse_power() {
        auto base = parse_primary();
        const std::size_t at = pos_;
        if (accept('^')) return make_node(OpCode::pow, std::move(base), parse_unary(), at);
        return base;
    }

    NodePtr parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("unexpected end of expression", pos_);
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            auto n = parse_expr();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }

    NodePtr parse_number() {
        const std::size_t start = pos_;
        // strtod needs a terminated buffer; copy the longest plausible token.
        std::size_t end = pos_;
        while (end < text_.size()) {
            const char ch = text_[end];
            if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') {
                ++end;
            } else if ((ch == 'e' || ch == 'E') && end + 1 < text_.size()) {
                std::size_t k = end + 1;
                if (text_[k] == '+' || text_[k] == '-') ++k;
                if (k < text_.size() && std::isdigit(static_cast<unsigned char>(text_[k]))) {
                    end = k;
                } else {
                    break;
                }
            } else {
                break;
            }
        }
        const std::string token(text_.substr(start, end - start));
        char* stop = nullptr;
        const double v = std::strtod(token.c_str(), &stop);
        if (stop != token.c_str() + token.size()) throw ParseError("malformed number '" + token + "'", start);
        pos_ = end;
        return make_leaf(OpCode::constant, v);
    }

    NodePtr parse_name() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        const std::string name(text_.substr(start, pos_ - start));

        static const std::map<std::string, OpCode, std::less<>> functions = {
            {"exp", OpCode::exp}, {"log", OpCode::log}, {"sin", OpCode::sin},
            {"cos", OpCode::cos}, {"sqrt", OpCode::sqrt}, {"abs", OpCode::abs},
        };

        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '(') {
            const auto fn = functions.find(name);
            if (fn == functions.end()) throw ParseError("unknown function '" + name + "'", start);
            ++pos_;
            auto arg = parse_expr();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return make_node(fn->second, std::move(arg), nullptr, start);
        }
        for (std::size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i] == name) return make_leaf(i == 0 ? OpCode::var0 : OpCode::var1);
        if (const auto p = params_.find(name); p != params_.end())
            return make_leaf(OpCode::constant, p->second);
        if (name == "pi") return make_leaf(OpCode::constant, std::numbers::pi);
        throw ParseError("unknown identifier '" + name + "'", start);
    }

    std::string_view text_;
    const std::vector<std::string>& vars_;
    const ParamTable& params_;
    std::size_t pos_ = 0;
};

inline void emit(const Node& n, std::vector<Instr>& code) {
    if (n.lhs) emit(*n.lhs, code);
    if (n.rhs) emit(*n.rhs, code);
    code.push_back({n.op, n.value});
}

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

/// Immutable compiled expression in up to two variables.
class Expr {
public:
    static constexpr std::size_t max_stack = 64;

    Expr() : Expr(0.0) {}

    explicit Expr(double constant)
        : code_(std::make_shared<std::vector<detail::Instr>>(
              std::vector<detail::Instr>{{detail::OpCode::constant, constant}})),
          vars_(std::make_shared<std::vector<std::string>>()) {}

    double operator()(double x, double y = 0.0) const {
        const auto& code = *code_;
        if (code.size() == 1 && code[0].op == detail::OpCode::constant) return code[0].value;
        std::array<double, max_stack> stack;
        std::size_t top = 0;
        for (const auto& ins : code) {
            using detail::OpCode;
            switch (ins.op) {
            case OpCode::constant: stack[top++] = ins.value; break;
            case OpCode::var0: stack[top++] = x; break;
            case OpCode::var1: stack[top++] = y; break;
            case OpCode::add: --top; stack[top - 1] += stack[top]; break;
            case OpCode::sub: --top; stack[top - 1] -= stack[top]; break;
            case OpCode::mul: --top; stack[top - 1] *= stack[top]; break;
            default:
                if (detail::is_binary(ins.op)) {
                    --top;
                    stack[top - 1] = detail::apply_binary(ins.op, stack[top - 1], stack[top]);
                } else {
                    stack[top - 1] = detail::apply_unary(ins.op, stack[top - 1]);
                }
            }
        }
        return stack[0];
    }

    bool is_constant() const {
        return code_->size() == 1 && (*code_)[0].op == detail::OpCode::constant;
    }

    /// Value of a constant expression; only meaningful when is_constant().
    double constant_value() const { return (*code_)[0].value; }

    const std::vector<std::string>& variables() const { return *vars_; }

    /// Fully parenthesized infix form that parses back to an equivalent Expr.
    std::string to_string() const {
        std::vector<std::string> stack;
        for (const auto& ins : *code_) {
            using detail::OpCode;
            switch (ins.op) {
            case OpCode::constant: {
                std::string s = detail::format_number(ins.value);
                stack.push_back(ins.value < 0 ? "(" + s + ")" : s);
                break;
            }
            case OpCode::var0: stack.push_back(var_name(0)); break;
            case OpCode::var1: stack.push_back(var_name(1)); break;
            default:
                if (detail::is_binary(ins.op)) {
                    std::string rhs = std::move(stack.back());
                    stack.pop_back();
                    std::string lhs = std::move(stack.back());
                    stack.pop_back();
                    static constexpr const char* sym = "+-*/^";
                    const char op = sym[static_cast<int>(ins.op) - static_cast<int>(OpCode::add)];
                    stack.push_back("(" + lhs + " " + op + " " + rhs + ")");
                } else {
                    static const char* names[] = {"exp", "log", "sin", "cos", "sqrt", "abs"};
                    std::string arg = std::move(stack.back());
                    stack.pop_back();
                    if (ins.op == OpCode::neg) {
                        stack.push_back("(-" + arg + ")");
                    } else {
                        const int k = static_cast<int>(ins.op) - static_cast<int>(OpCode::exp);
                        stack.push_back(std::string(names[k]) + "(" + arg + ")");
                    }
                }
            }
        }
        return stack.empty() ? std::string("0") : stack.back();
    }

    friend Expr parse_expr(std::string_view text, const std::vector<std::string>& vars,
                           const ParamTable& params);

private:
    std::string var_name(std::size_t i) const {
        return i < vars_->size() ? (*vars_)[i] : (i == 0 ? "x" : "y");
    }

    std::shared_ptr<const std::vector<detail::Instr>> code_;
    std::shared_ptr<const std::vector<std::string>> vars_;
};

/// Parses `text` over the variables `vars` (at most two), substituting
/// named parameters from `params`.
inline Expr parse_expr(std::string_view text, const std::vector<std::string>& vars,
                       const ParamTable& params = {}) {
    if (vars.size() > 2) throw std::invalid_argument("at most two expression variables");
    detail::Parser parser(text, vars, params);
    const auto tree = parser.parse();

    std::vector<detail::Instr> code;
    detail::emit(*tree, code);

    std::size_t depth = 0, max_depth = 0;
    for (const auto& ins : code) {
        if (ins.op <= detail::OpCode::var1) ++depth;
        else if (detail::is_binary(ins.op)) --depth;
        max_depth = std::max(max_depth, depth);
    }
    if (max_depth > Expr::max_stack) throw ParseError("expression nested too deeply", 0);

    Expr e;
    e.code_ = std::make_shared<const std::vector<detail::Instr>>(std::move(code));
    e.vars_ = std::make_shared<const std::vector<std::string>>(vars);
    return e;
}

} // namespace impulse
