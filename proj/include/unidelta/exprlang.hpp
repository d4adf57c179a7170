#pragma once
// Mini expression language for user-defined phi maps at the CLI.
//
// Grammar (recursive descent, '^' right-associative, unary minus binding
// looser than '^' so "-t1^2" is -(t1^2)):
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | base
//   base   := atom ('^' factor)?
//   atom   := number | t<k> | func '(' expr (',' expr)? ')' | '(' expr ')'
// Functions: sqrt, abs, exp, log, sign (arity 1); min, max (arity 2).
//
// Domains are guard-derived: every division, sqrt, log and fractional power
// contributes a guard; the induced trichotomy matches the built-ins' boundary
// strip convention (width 1e-8).

#include <cctype>
#include <charconv>
#include <cmath>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "funcspace.hpp"

namespace unidelta {

struct SyntaxError : Error {
    std::size_t offset;
    SyntaxError(std::size_t off, const std::string& msg)
        : Error("syntax error at offset " + std::to_string(off) + ": " + msg), offset(off) {}
};

struct UnknownFunction : Error {
    explicit UnknownFunction(const std::string& msg) : Error(msg) {}
};

struct ArityError : Error {
    explicit ArityError(const std::string& msg) : Error(msg) {}
};

namespace expr {

enum class Kind { num, var, add, sub, mul, div, pow, neg, call };
enum class Func { sqrt_fn, abs_fn, exp_fn, log_fn, sign_fn, min_fn, max_fn };

inline const char* func_name(Func f) {
    switch (f) {
        case Func::sqrt_fn: return "sqrt";
        case Func::abs_fn: return "abs";
        case Func::exp_fn: return "exp";
        case Func::log_fn: return "log";
        case Func::sign_fn: return "sign";
        case Func::min_fn: return "min";
        default: return "max";
    }
}

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    Kind kind;
    double value = 0.0;    // num
    int var_index = 0;     // var: 1-based
    Func func = Func::sqrt_fn;
    NodePtr a, b;          // operands / call arguments
};

inline NodePtr make_num(double v) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::num;
    n->value = v;
    return n;
}

inline NodePtr make_var(int idx) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::var;
    n->var_index = idx;
    return n;
}

inline NodePtr make_bin(Kind k, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

inline NodePtr make_neg(NodePtr a) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::neg;
    n->a = std::move(a);
    return n;
}

inline NodePtr make_call(Func f, NodePtr a, NodePtr b = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::call;
    n->func = f;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

inline double eval_node(const Node& n, const Vec& t) {
    switch (n.kind) {
        case Kind::num: return n.value;
        case Kind::var: return t[static_cast<std::size_t>(n.var_index - 1)];
        case Kind::add: return eval_node(*n.a, t) + eval_node(*n.b, t);
        case Kind::sub: return eval_node(*n.a, t) - eval_node(*n.b, t);
        case Kind::mul: return eval_node(*n.a, t) * eval_node(*n.b, t);
        case Kind::div: return eval_node(*n.a, t) / eval_node(*n.b, t);
        case Kind::pow: return std::pow(eval_node(*n.a, t), eval_node(*n.b, t));
        case Kind::neg: return -eval_node(*n.a, t);
        case Kind::call: {
            const double x = eval_node(*n.a, t);
            switch (n.func) {
                case Func::sqrt_fn: return std::sqrt(x);
                case Func::abs_fn: return std::fabs(x);
                case Func::exp_fn: return std::exp(x);
                case Func::log_fn: return std::log(x);
                case Func::sign_fn: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                case Func::min_fn: {
                    const double y = eval_node(*n.b, t);
                    return x < y ? x : y;
                }
                default: {
                    const double y = eval_node(*n.b, t);
                    return x > y ? x : y;
                }
            }
        }
    }
    return 0.0;  // unreachable
}

inline Region worse(Region a, Region b) {
    if (a == Region::outside || b == Region::outside) return Region::outside;
    if (a == Region::boundary || b == Region::boundary) return Region::boundary;
    return Region::inside;
}

/// Guard walk: classifies t against the expression's natural domain.
inline Region domain_node(const Node& n, const Vec& t) {
    switch (n.kind) {
        case Kind::num:
        case Kind::var: return Region::inside;
        case Kind::add:
        case Kind::sub:
        case Kind::mul: return worse(domain_node(*n.a, t), domain_node(*n.b, t));
        case Kind::div: {
            Region r = worse(domain_node(*n.a, t), domain_node(*n.b, t));
            if (r == Region::outside) return r;
            const double den = eval_node(*n.b, t);
            if (!std::isfinite(den) || std::fabs(den) <= kBoundaryStrip)
                return Region::boundary;
            return r;
        }
        case Kind::pow: {
            Region r = worse(domain_node(*n.a, t), domain_node(*n.b, t));
            if (r == Region::outside) return r;
            const double base = eval_node(*n.a, t);
            const double ex = eval_node(*n.b, t);
            const bool integral_exp = std::isfinite(ex) && ex == std::nearbyint(ex);
            if (base < -kBoundaryStrip && !integral_exp) return Region::outside;
            if (std::fabs(base) <= kBoundaryStrip && (ex < 0.0 || !integral_exp))
                return Region::boundary;
            return r;
        }
        case Kind::neg: return domain_node(*n.a, t);
        case Kind::call: {
            Region r = domain_node(*n.a, t);
            if (n.b) r = worse(r, domain_node(*n.b, t));
            if (r == Region::outside) return r;
            if (n.func == Func::sqrt_fn || n.func == Func::log_fn) {
                const double arg = eval_node(*n.a, t);
                if (arg < -kBoundaryStrip) return Region::outside;
                if (arg <= kBoundaryStrip) return Region::boundary;
            }
            return r;
        }
    }
    return Region::inside;  // unreachable
}

inline int max_var_node(const Node& n) {
    switch (n.kind) {
        case Kind::num: return 0;
        case Kind::var: return n.var_index;
        case Kind::neg: return max_var_node(*n.a);
        case Kind::call: return std::max(max_var_node(*n.a), n.b ? max_var_node(*n.b) : 0);
        default: return std::max(max_var_node(*n.a), max_var_node(*n.b));
    }
}

inline void collect_vars(const Node& n, std::set<int>& out) {
    switch (n.kind) {
        case Kind::num: return;
        case Kind::var: out.insert(n.var_index); return;
        case Kind::neg: collect_vars(*n.a, out); return;
        case Kind::call:
            collect_vars(*n.a, out);
            if (n.b) collect_vars(*n.b, out);
            return;
        default:
            collect_vars(*n.a, out);
            collect_vars(*n.b, out);
            return;
    }
}

inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Fully parenthesized canonical printing; reparsing yields an identical AST.
inline std::string print_node(const Node& n) {
    switch (n.kind) {
        case Kind::num: return format_double(n.value);
        case Kind::var: return "t" + std::to_string(n.var_index);
        case Kind::add: return "(" + print_node(*n.a) + "+" + print_node(*n.b) + ")";
        case Kind::sub: return "(" + print_node(*n.a) + "-" + print_node(*n.b) + ")";
        case Kind::mul: return "(" + print_node(*n.a) + "*" + print_node(*n.b) + ")";
        case Kind::div: return "(" + print_node(*n.a) + "/" + print_node(*n.b) + ")";
        case Kind::pow: return "(" + print_node(*n.a) + "^" + print_node(*n.b) + ")";
        case Kind::neg: return "(-" + print_node(*n.a) + ")";
        case Kind::call: {
            std::string s = std::string(func_name(n.func)) + "(" + print_node(*n.a);
            if (n.b) s += "," + print_node(*n.b);
            return s + ")";
        }
    }
    return {};  // unreachable
}

inline bool equal_nodes(const Node& x, const Node& y) {
    if (x.kind != y.kind) return false;
    switch (x.kind) {
        case Kind::num: return x.value == y.value;
        case Kind::var: return x.var_index == y.var_index;
        case Kind::neg: return equal_nodes(*x.a, *y.a);
        case Kind::call:
            if (x.func != y.func) return false;
            if (!equal_nodes(*x.a, *y.a)) return false;
            if (static_cast<bool>(x.b) != static_cast<bool>(y.b)) return false;
            return !x.b || equal_nodes(*x.b, *y.b);
        default: return equal_nodes(*x.a, *y.a) && equal_nodes(*x.b, *y.b);
    }
}

// ---------------------------------------------------------------------------
// Parser.
// ---------------------------------------------------------------------------
class Parser {
  public:
    explicit Parser(std::string src) : src_(std::move(src)) {}

    NodePtr parse() {
        if (src_.empty()) throw SyntaxError(0, "empty expression");
        NodePtr e = parse_expr();
        skip_ws();
        if (pos_ != src_.size())
            throw SyntaxError(pos_, "unexpected trailing input");
        return e;
    }

  private:
    std::string src_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    NodePtr parse_expr() {
        NodePtr lhs = parse_term();
        for (;;) {
            if (eat('+')) lhs = make_bin(Kind::add, lhs, parse_term());
            else if (eat('-')) lhs = make_bin(Kind::sub, lhs, parse_term());
            else return lhs;
        }
    }

    NodePtr parse_term() {
        NodePtr lhs = parse_factor();
        for (;;) {
            if (eat('*')) lhs = make_bin(Kind::mul, lhs, parse_factor());
            else if (eat('/')) lhs = make_bin(Kind::div, lhs, parse_factor());
            else return lhs;
        }
    }

    NodePtr parse_factor() {
        if (eat('-')) return make_neg(parse_factor());
        return parse_base();
    }

    NodePtr parse_base() {
        NodePtr lhs = parse_atom();
        if (eat('^')) return make_bin(Kind::pow, lhs, parse_factor());
        return lhs;
    }

    NodePtr parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) throw SyntaxError(pos_, "expected expression");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr e = parse_expr();
            if (!eat(')')) throw SyntaxError(pos_, "expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        throw SyntaxError(pos_, std::string("unexpected character '") + c + "'");
    }

    NodePtr parse_number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    ++pos_;
            } else {
                pos_ = mark;  // 'e' belonged to something else; not part of the number
            }
        }
        double v = 0.0;
        auto res = std::from_chars(src_.data() + start, src_.data() + pos_, v);
        if (res.ec != std::errc() || res.ptr != src_.data() + pos_)
            throw SyntaxError(start, "malformed number");
        return make_num(v);
    }

    NodePtr parse_ident() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        const std::string name = src_.substr(start, pos_ - start);
        // variable t<k>?
        if (name.size() >= 2 && name[0] == 't' &&
            name.find_first_not_of("0123456789", 1) == std::string::npos) {
            const long idx = std::strtol(name.c_str() + 1, nullptr, 10);
            if (idx < 1) throw SyntaxError(start, "variable indices start at t1");
            return make_var(static_cast<int>(idx));
        }
        skip_ws();
        if (pos_ >= src_.size() || src_[pos_] != '(')
            throw SyntaxError(start, "unknown variable '" + name + "' (variables are t1, t2, ...)");
        Func f;
        int arity;
        if (name == "sqrt") { f = Func::sqrt_fn; arity = 1; }
        else if (name == "abs") { f = Func::abs_fn; arity = 1; }
        else if (name == "exp") { f = Func::exp_fn; arity = 1; }
        else if (name == "log") { f = Func::log_fn; arity = 1; }
        else if (name == "sign") { f = Func::sign_fn; arity = 1; }
        else if (name == "min") { f = Func::min_fn; arity = 2; }
        else if (name == "max") { f = Func::max_fn; arity = 2; }
        else throw UnknownFunction("unknown function '" + name + "'");
        ++pos_;  // consume '('
        NodePtr a = parse_expr();
        NodePtr b = nullptr;
        if (eat(',')) {
            if (arity == 1)
                throw ArityError(name + " takes 1 argument");
            b = parse_expr();
        } else if (arity == 2) {
            throw ArityError(name + " takes 2 arguments");
        }
        if (!eat(')')) throw SyntaxError(pos_, "expected ')'");
        return make_call(f, a, b);
    }
};

}  // namespace expr

/// Parsed expression handle.
struct Expr {
    expr::NodePtr root;

    double eval(const Vec& t) const { return expr::eval_node(*root, t); }
    Region domain(const Vec& t) const { return expr::domain_node(*root, t); }
    int max_var() const { return expr::max_var_node(*root); }
    std::string print() const { return expr::print_node(*root); }
    bool equals(const Expr& other) const { return expr::equal_nodes(*root, *other.root); }
};

inline Expr parse(const std::string& src) { return Expr{expr::Parser(src).parse()}; }

/// Compiles component expressions into a PhiMap (finite-difference Jacobian,
/// guard-derived domain). Variable indices must be contiguous from t1 across
/// the union of components.
inline PhiMap compile_phi(const std::vector<std::string>& components) {
    if (components.empty()) throw EmptyError("compile_phi: no components");
    std::vector<Expr> exprs;
    exprs.reserve(components.size());
    std::set<int> used;
    int max_var = 0;
    for (const auto& src : components) {
        exprs.push_back(parse(src));
        expr::collect_vars(*exprs.back().root, used);
        max_var = std::max(max_var, exprs.back().max_var());
    }
    if (max_var == 0) throw DimensionError("compile_phi: no variables used");
    for (int k = 1; k <= max_var; ++k)
        if (used.find(k) == used.end())
            throw DimensionError("compile_phi: variable t" + std::to_string(k) +
                                 " missing (indices must be contiguous from t1)");

    PhiMap p;
    p.name = "expr";
    p.d_in = max_var;
    p.d_out = static_cast<int>(exprs.size());
    p.eval = [exprs](const Vec& t) {
        Vec out(exprs.size());
        for (std::size_t k = 0; k < exprs.size(); ++k) out[k] = exprs[k].eval(t);
        return out;
    };
    p.domain_pred = [exprs](const Vec& t) {
        Region r = Region::inside;
        for (const auto& e : exprs) r = expr::worse(r, e.domain(t));
        return r;
    };
    return p;
}

}  // namespace unidelta
