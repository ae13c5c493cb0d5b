#include "nonholo/expr.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>

namespace nonholo {

struct ExprNode {
    enum class Kind { Const, Var, Neg, Bin, Call };
    Kind kind;
    double value = 0.0;                     // Const
    std::string name;                       // Var
    BinOp op{};                             // Bin
    FuncOp fn{};                            // Call
    std::shared_ptr<const ExprNode> a, b;   // Neg/Call use a; Bin uses a,b
};

namespace {

using NodePtr = std::shared_ptr<const ExprNode>;

NodePtr make_const(double v) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Const;
    n->value = v;
    return n;
}

bool is_const(const NodePtr& n) { return n->kind == ExprNode::Kind::Const; }
bool is_const(const NodePtr& n, double v) { return is_const(n) && n->value == v; }

const char* func_name(FuncOp f) {
    switch (f) {
        case FuncOp::Sin:  return "sin";
        case FuncOp::Cos:  return "cos";
        case FuncOp::Exp:  return "exp";
        case FuncOp::Ln:   return "ln";
        case FuncOp::Sqrt: return "sqrt";
        case FuncOp::Atan: return "atan";
        case FuncOp::Abs:  return "abs";
        case FuncOp::Sign: return "sign";
    }
    return "?";
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

std::string fmt_double(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15)
        return std::to_string(static_cast<long long>(v));
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

// Smart constructors: constant folding plus the identity eliminations the
// simplification contract allows (x+0, x*1, x*0, x^1, x^0, -(-x), constant
// reassociation in products). These run at construction time, so diff()
// output stays compact and printing stays deterministic.
struct ExprFactory {
    static Expr wrap(NodePtr n) { return Expr(std::move(n)); }

    static Expr neg(const Expr& e) {
        const auto& n = e.node_;
        if (is_const(n)) return Expr(-n->value);
        if (n->kind == ExprNode::Kind::Neg) return wrap(n->a);
        auto r = std::make_shared<ExprNode>();
        r->kind = ExprNode::Kind::Neg;
        r->a = n;
        return wrap(r);
    }

    static Expr bin(BinOp op, const Expr& lhs, const Expr& rhs) {
        const auto& a = lhs.node_;
        const auto& b = rhs.node_;
        switch (op) {
            case BinOp::Add:
                if (is_const(a) && is_const(b)) return Expr(a->value + b->value);
                if (is_const(a, 0)) return rhs;
                if (is_const(b, 0)) return lhs;
                break;
            case BinOp::Sub:
                if (is_const(a) && is_const(b)) return Expr(a->value - b->value);
                if (is_const(b, 0)) return lhs;
                if (is_const(a, 0)) return neg(rhs);
                break;
            case BinOp::Mul:
                if (is_const(a) && is_const(b)) return Expr(a->value * b->value);
                if (is_const(a, 0) || is_const(b, 0)) return Expr(0.0);
                if (is_const(a, 1)) return rhs;
                if (is_const(b, 1)) return lhs;
                if (is_const(a)) {
                    if (b->kind == ExprNode::Kind::Neg)
                        return bin(BinOp::Mul, Expr(-a->value), wrap(b->a));
                    if (b->kind == ExprNode::Kind::Bin && b->op == BinOp::Mul && is_const(b->a))
                        return bin(BinOp::Mul, Expr(a->value * b->a->value), wrap(b->b));
                }
                break;
            case BinOp::Div:
                if (is_const(a) && is_const(b) && b->value != 0.0)
                    return Expr(a->value / b->value);
                if (is_const(b, 1)) return lhs;
                if (is_const(b, -1)) return neg(lhs);
                break;
            case BinOp::Pow:
                if (is_const(a) && is_const(b)) {
                    double v = std::pow(a->value, b->value);
                    if (std::isfinite(v)) return Expr(v);
                }
                if (is_const(b, 1)) return lhs;
                if (is_const(b, 0)) return Expr(1.0);
                break;
        }
        auto r = std::make_shared<ExprNode>();
        r->kind = ExprNode::Kind::Bin;
        r->op = op;
        r->a = a;
        r->b = b;
        return wrap(r);
    }

    static Expr call(FuncOp fn, const Expr& arg) {
        const auto& a = arg.node_;
        if (is_const(a)) {
            double x = a->value, v = 0.0;
            bool ok = true;
            switch (fn) {
                case FuncOp::Sin:  v = std::sin(x); break;
                case FuncOp::Cos:  v = std::cos(x); break;
                case FuncOp::Exp:  v = std::exp(x); break;
                case FuncOp::Ln:   ok = x > 0.0; v = ok ? std::log(x) : 0.0; break;
                case FuncOp::Sqrt: ok = x >= 0.0; v = ok ? std::sqrt(x) : 0.0; break;
                case FuncOp::Atan: v = std::atan(x); break;
                case FuncOp::Abs:  v = std::abs(x); break;
                case FuncOp::Sign: v = sign_of(x); break;
            }
            if (ok && std::isfinite(v)) return Expr(v);
        }
        auto r = std::make_shared<ExprNode>();
        r->kind = ExprNode::Kind::Call;
        r->fn = fn;
        r->a = a;
        return wrap(r);
    }
};

Expr::Expr() : node_(make_const(0.0)) {}
Expr::Expr(double value) : node_(make_const(value)) {}

Expr Expr::variable(std::string name) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Var;
    n->name = std::move(name);
    return Expr(std::move(n));
}

bool Expr::is_constant() const { return node_->kind == ExprNode::Kind::Const; }
bool Expr::is_constant(double v) const { return is_constant() && node_->value == v; }

double Expr::constant_value() const {
    assert(is_constant());
    return node_->value;
}

Expr operator+(const Expr& a, const Expr& b) { return ExprFactory::bin(BinOp::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return ExprFactory::bin(BinOp::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return ExprFactory::bin(BinOp::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return ExprFactory::bin(BinOp::Div, a, b); }
Expr operator-(const Expr& a) { return ExprFactory::neg(a); }
Expr pow(const Expr& a, const Expr& b) { return ExprFactory::bin(BinOp::Pow, a, b); }
Expr apply(FuncOp fn, const Expr& a) { return ExprFactory::call(fn, a); }

namespace {

std::string print_node(const ExprNode& n, int parent_prec);

// Precedence: Add/Sub = 1, Neg = 1 (below Mul so "(-x)*y" keeps parens),
// Mul/Div = 2, Pow = 3, atoms = 4.
int prec_of(const ExprNode& n) {
    switch (n.kind) {
        case ExprNode::Kind::Const: return n.value < 0.0 ? 1 : 4;
        case ExprNode::Kind::Var:
        case ExprNode::Kind::Call:  return 4;
        case ExprNode::Kind::Neg:   return 1;
        case ExprNode::Kind::Bin:
            switch (n.op) {
                case BinOp::Add: case BinOp::Sub: return 1;
                case BinOp::Mul: case BinOp::Div: return 2;
                case BinOp::Pow: return 3;
            }
    }
    return 4;
}

std::string maybe_paren(const ExprNode& n, bool need) {
    std::string s = print_node(n, 0);
    if (need) return "(" + s + ")";
    return s;
}

std::string print_node(const ExprNode& n, int) {
    switch (n.kind) {
        case ExprNode::Kind::Const:
            return fmt_double(n.value);
        case ExprNode::Kind::Var:
            return n.name;
        case ExprNode::Kind::Neg:
            return "-" + maybe_paren(*n.a, prec_of(*n.a) <= 1);
        case ExprNode::Kind::Call:
            return std::string(func_name(n.fn)) + "(" + print_node(*n.a, 0) + ")";
        case ExprNode::Kind::Bin: {
            int p = prec_of(n);
            const char* sym = "?";
            bool strict_rhs = false;   // right side needs parens at equal precedence
            bool strict_lhs = false;
            switch (n.op) {
                case BinOp::Add: sym = "+"; break;
                case BinOp::Sub: sym = "-"; strict_rhs = true; break;
                case BinOp::Mul: sym = "*"; break;
                case BinOp::Div: sym = "/"; strict_rhs = true; break;
                case BinOp::Pow: sym = "^"; strict_lhs = true; break;
            }
            int la = prec_of(*n.a), lb = prec_of(*n.b);
            std::string lhs = maybe_paren(*n.a, strict_lhs ? la <= p : la < p);
            std::string rhs = maybe_paren(*n.b, strict_rhs ? lb <= p : lb < p);
            return lhs + sym + rhs;
        }
    }
    return "?";
}

double eval_node(const ExprNode& n, const VarEnv& env) {
    switch (n.kind) {
        case ExprNode::Kind::Const:
            return n.value;
        case ExprNode::Kind::Var: {
            auto it = env.find(n.name);
            if (it == env.end())
                throw EvalError("unbound variable '" + n.name + "'");
            return it->second;
        }
        case ExprNode::Kind::Neg:
            return -eval_node(*n.a, env);
        case ExprNode::Kind::Call: {
            double x = eval_node(*n.a, env);
            switch (n.fn) {
                case FuncOp::Sin:  return std::sin(x);
                case FuncOp::Cos:  return std::cos(x);
                case FuncOp::Exp:  return std::exp(x);
                case FuncOp::Ln:
                    if (x <= 0.0)
                        throw EvalError("domain error: ln of nonpositive value in '" +
                                        print_node(n, 0) + "'");
                    return std::log(x);
                case FuncOp::Sqrt:
                    if (x < 0.0)
                        throw EvalError("domain error: sqrt of negative value in '" +
                                        print_node(n, 0) + "'");
                    return std::sqrt(x);
                case FuncOp::Atan: return std::atan(x);
                case FuncOp::Abs:  return std::abs(x);
                case FuncOp::Sign: return sign_of(x);
            }
            return 0.0;
        }
        case ExprNode::Kind::Bin: {
            double a = eval_node(*n.a, env);
            double b = eval_node(*n.b, env);
            switch (n.op) {
                case BinOp::Add: return a + b;
                case BinOp::Sub: return a - b;
                case BinOp::Mul: return a * b;
                case BinOp::Div:
                    if (b == 0.0)
                        throw EvalError("domain error: division by zero in '" +
                                        print_node(n, 0) + "'");
                    return a / b;
                case BinOp::Pow: {
                    double v = std::pow(a, b);
                    if (!std::isfinite(v))
                        throw EvalError("domain error: pow out of range in '" +
                                        print_node(n, 0) + "'");
                    return v;
                }
            }
            return 0.0;
        }
    }
    return 0.0;
}

Expr diff_node(const ExprNode& n, std::string_view var) {
    using F = ExprFactory;
    switch (n.kind) {
        case ExprNode::Kind::Const:
            return Expr(0.0);
        case ExprNode::Kind::Var:
            return Expr(n.name == var ? 1.0 : 0.0);
        case ExprNode::Kind::Neg:
            return -diff_node(*n.a, var);
        case ExprNode::Kind::Call: {
            Expr u = F::wrap(n.a);
            Expr du = diff_node(*n.a, var);
            switch (n.fn) {
                case FuncOp::Sin:  return cos(u) * du;
                case FuncOp::Cos:  return -(sin(u) * du);
                case FuncOp::Exp:  return exp(u) * du;
                case FuncOp::Ln:   return du / u;
                case FuncOp::Sqrt: return du / (Expr(2.0) * sqrt(u));
                case FuncOp::Atan: return du / (Expr(1.0) + u * u);
                // Convention at 0: d|x| = sign(x) (0 at 0), d sign(x) = 0.
                case FuncOp::Abs:  return sign(u) * du;
                case FuncOp::Sign: return Expr(0.0);
            }
            return Expr(0.0);
        }
        case ExprNode::Kind::Bin: {
            Expr a = F::wrap(n.a), b = F::wrap(n.b);
            Expr da = diff_node(*n.a, var), db = diff_node(*n.b, var);
            switch (n.op) {
                case BinOp::Add: return da + db;
                case BinOp::Sub: return da - db;
                case BinOp::Mul: return da * b + a * db;
                case BinOp::Div: return (da * b - a * db) / (b * b);
                case BinOp::Pow:
                    if (is_const(n.b))
                        return Expr(n.b->value) * pow(a, Expr(n.b->value - 1.0)) * da;
                    if (is_const(n.a))
                        return pow(a, b) * ln(a) * db;
                    return pow(a, b) * (db * ln(a) + b * da / a);
            }
            return Expr(0.0);
        }
    }
    return Expr(0.0);
}

void collect_vars(const ExprNode& n, std::set<std::string>& out) {
    switch (n.kind) {
        case ExprNode::Kind::Const: return;
        case ExprNode::Kind::Var: out.insert(n.name); return;
        case ExprNode::Kind::Neg:
        case ExprNode::Kind::Call: collect_vars(*n.a, out); return;
        case ExprNode::Kind::Bin:
            collect_vars(*n.a, out);
            collect_vars(*n.b, out);
            return;
    }
}

bool depends(const ExprNode& n, std::string_view var) {
    switch (n.kind) {
        case ExprNode::Kind::Const: return false;
        case ExprNode::Kind::Var: return n.name == var;
        case ExprNode::Kind::Neg:
        case ExprNode::Kind::Call: return depends(*n.a, var);
        case ExprNode::Kind::Bin: return depends(*n.a, var) || depends(*n.b, var);
    }
    return false;
}

Expr subst_node(const ExprNode& n, const std::map<std::string, Expr, std::less<>>& repl) {
    using F = ExprFactory;
    switch (n.kind) {
        case ExprNode::Kind::Const:
            return Expr(n.value);
        case ExprNode::Kind::Var: {
            auto it = repl.find(n.name);
            if (it != repl.end()) return it->second;
            return Expr::variable(n.name);
        }
        case ExprNode::Kind::Neg:
            return -subst_node(*n.a, repl);
        case ExprNode::Kind::Call:
            return apply(n.fn, subst_node(*n.a, repl));
        case ExprNode::Kind::Bin:
            return F::bin(n.op, subst_node(*n.a, repl), subst_node(*n.b, repl));
    }
    return Expr(0.0);
}

} // namespace

double Expr::evaluate(const VarEnv& env) const { return eval_node(*node_, env); }
Expr Expr::diff(std::string_view var) const { return diff_node(*node_, var); }
std::string Expr::str() const { return print_node(*node_, 0); }
bool Expr::depends_on(std::string_view var) const { return depends(*node_, var); }

Expr Expr::substitute(const std::map<std::string, Expr, std::less<>>& repl) const {
    return subst_node(*node_, repl);
}

std::vector<std::string> Expr::free_variables() const {
    std::set<std::string> s;
    collect_vars(*node_, s);
    return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------
// Parser: recursive descent, byte-offset error reporting.

namespace {

class Parser {
public:
    Parser(std::string_view text, std::span<const std::string> vars)
        : text_(text), vars_(vars) {}

    Expr run() {
        Expr e = parse_sum();
        skip_ws();
        if (pos_ != text_.size())
            fail(pos_, "unexpected character '" + std::string(1, text_[pos_]) + "'");
        return e;
    }

private:
    std::string_view text_;
    std::span<const std::string> vars_;
    std::size_t pos_ = 0;
    int depth_ = 0;

    struct DepthGuard {
        Parser& p;
        explicit DepthGuard(Parser& p) : p(p) {
            if (++p.depth_ > 256)
                p.fail(p.pos_, "expression nested too deeply");
        }
        ~DepthGuard() { --p.depth_; }
    };

    [[noreturn]] void fail(std::size_t at, const std::string& msg) {
        throw ParseError(at, "syntax error at offset " + std::to_string(at) + ": " + msg);
    }

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t'))
            ++pos_;
    }

    bool peek(char c) {
        skip_ws();
        return pos_ < text_.size() && text_[pos_] == c;
    }

    bool accept(char c) {
        if (peek(c)) { ++pos_; return true; }
        return false;
    }

    Expr parse_sum() {
        DepthGuard guard(*this);
        Expr e = parse_term();
        for (;;) {
            if (accept('+')) e = e + parse_term();
            else if (accept('-')) e = e - parse_term();
            else return e;
        }
    }

    Expr parse_term() {
        Expr e = parse_factor();
        for (;;) {
            if (accept('*')) e = e * parse_factor();
            else if (accept('/')) e = e / parse_factor();
            else return e;
        }
    }

    Expr parse_factor() {
        Expr base = parse_base();
        if (accept('^')) return pow(base, parse_factor());   // right-assoc
        return base;
    }

    Expr parse_base() {
        skip_ws();
        if (pos_ >= text_.size())
            fail(pos_, "unexpected end of input");
        char c = text_[pos_];
        if (c == '-') {
            ++pos_;
            return -parse_factor();
        }
        if (c == '(') {
            ++pos_;
            Expr e = parse_sum();
            if (!accept(')')) fail(pos_, "expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)))
            return parse_ident();
        fail(pos_, "unexpected character '" + std::string(1, c) + "'");
    }

    Expr parse_number() {
        double v = 0.0;
        const char* begin = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        auto [ptr, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc())
            fail(pos_, "malformed number");
        pos_ = static_cast<std::size_t>(ptr - text_.data());
        return Expr(v);
    }

    Expr parse_ident() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        std::string name(text_.substr(start, pos_ - start));

        static const std::pair<const char*, FuncOp> fns[] = {
            {"sin", FuncOp::Sin},   {"cos", FuncOp::Cos},  {"exp", FuncOp::Exp},
            {"ln", FuncOp::Ln},     {"sqrt", FuncOp::Sqrt}, {"atan", FuncOp::Atan},
            {"abs", FuncOp::Abs},   {"sign", FuncOp::Sign},
        };
        if (peek('(')) {
            for (auto& [fname, fop] : fns) {
                if (name == fname) {
                    ++pos_;   // consume '('
                    Expr arg = parse_sum();
                    std::size_t extra = 0;
                    while (accept(',')) { parse_sum(); ++extra; }
                    if (!accept(')')) fail(pos_, "expected ')'");
                    if (extra != 0)
                        fail(start, "function '" + name + "' expects 1 argument");
                    return apply(fop, arg);
                }
            }
            fail(start, "unknown function '" + name + "'");
        }
        for (const auto& v : vars_)
            if (v == name) return Expr::variable(name);
        throw ParseError(start, "unknown identifier '" + name + "'");
    }
};

} // namespace

Expr parse_expr(std::string_view text, std::span<const std::string> vars) {
    return Parser(text, vars).run();
}

Expr parse_expr(std::string_view text, const std::vector<std::string>& vars) {
    return parse_expr(text, std::span<const std::string>(vars));
}

// ---------------------------------------------------------------------------
// Compilation to a postfix tape.

namespace {

int find_slot(const std::string& name, std::span<const std::string> slots) {
    for (std::size_t i = 0; i < slots.size(); ++i)
        if (slots[i] == name) return static_cast<int>(i);
    throw EvalError("unbound variable '" + name + "' (not in slot list)");
}

} // namespace

CompiledExpr::CompiledExpr(const Expr& e, std::span<const std::string> slots) {
    int depth = 0;
    std::function<void(const ExprNode&)> emit = [&](const ExprNode& n) {
        switch (n.kind) {
            case ExprNode::Kind::Const:
                tape_.push_back({Op::Const, 0, n.value});
                max_depth_ = std::max(max_depth_, ++depth);
                return;
            case ExprNode::Kind::Var:
                tape_.push_back({Op::Slot, find_slot(n.name, slots), 0.0});
                max_depth_ = std::max(max_depth_, ++depth);
                return;
            case ExprNode::Kind::Neg:
                emit(*n.a);
                tape_.push_back({Op::Neg, 0, 0.0});
                return;
            case ExprNode::Kind::Call: {
                emit(*n.a);
                Op op = Op::Sin;
                switch (n.fn) {
                    case FuncOp::Sin:  op = Op::Sin; break;
                    case FuncOp::Cos:  op = Op::Cos; break;
                    case FuncOp::Exp:  op = Op::Exp; break;
                    case FuncOp::Ln:   op = Op::Ln; break;
                    case FuncOp::Sqrt: op = Op::Sqrt; break;
                    case FuncOp::Atan: op = Op::Atan; break;
                    case FuncOp::Abs:  op = Op::Abs; break;
                    case FuncOp::Sign: op = Op::Sign; break;
                }
                tape_.push_back({op, 0, 0.0});
                return;
            }
            case ExprNode::Kind::Bin: {
                emit(*n.a);
                emit(*n.b);
                Op op = Op::Add;
                switch (n.op) {
                    case BinOp::Add: op = Op::Add; break;
                    case BinOp::Sub: op = Op::Sub; break;
                    case BinOp::Mul: op = Op::Mul; break;
                    case BinOp::Div: op = Op::Div; break;
                    case BinOp::Pow: op = Op::Pow; break;
                }
                tape_.push_back({op, 0, 0.0});
                --depth;
                return;
            }
        }
    };
    emit(e.node());
}

CompiledExpr::CompiledExpr(const Expr& e, const std::vector<std::string>& slots)
    : CompiledExpr(e, std::span<const std::string>(slots)) {}

double CompiledExpr::operator()(std::span<const double> slot_values) const {
    double stack_buf[64];
    std::vector<double> heap;
    double* stack = stack_buf;
    if (max_depth_ > 64) {
        heap.resize(static_cast<std::size_t>(max_depth_));
        stack = heap.data();
    }
    int top = -1;
    for (const Instr& in : tape_) {
        switch (in.op) {
            case Op::Const: stack[++top] = in.value; break;
            case Op::Slot:  stack[++top] = slot_values[static_cast<std::size_t>(in.slot)]; break;
            case Op::Neg:   stack[top] = -stack[top]; break;
            case Op::Add:   --top; stack[top] += stack[top + 1]; break;
            case Op::Sub:   --top; stack[top] -= stack[top + 1]; break;
            case Op::Mul:   --top; stack[top] *= stack[top + 1]; break;
            case Op::Div:   --top; stack[top] /= stack[top + 1]; break;
            case Op::Pow:   --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
            case Op::Sin:   stack[top] = std::sin(stack[top]); break;
            case Op::Cos:   stack[top] = std::cos(stack[top]); break;
            case Op::Exp:   stack[top] = std::exp(stack[top]); break;
            case Op::Ln:    stack[top] = std::log(stack[top]); break;
            case Op::Sqrt:  stack[top] = std::sqrt(stack[top]); break;
            case Op::Atan:  stack[top] = std::atan(stack[top]); break;
            case Op::Abs:   stack[top] = std::abs(stack[top]); break;
            case Op::Sign:  stack[top] = sign_of(stack[top]); break;
        }
    }
    return top >= 0 ? stack[0] : 0.0;
}

} // namespace nonholo
