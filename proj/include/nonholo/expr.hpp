#pragma once

#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nonholo {

// Scalar expression trees over named variables: the substrate for every
// coefficient function (L, a_i, X^i_a, g_ij, ...). Immutable after
// construction; cheap to copy (shared structure), safe for concurrent reads.

enum class BinOp { Add, Sub, Mul, Div, Pow };
enum class FuncOp { Sin, Cos, Exp, Ln, Sqrt, Atan, Abs, Sign };

using VarEnv = std::map<std::string, double, std::less<>>;

class ExprError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Syntax / unknown-identifier error; `offset` is the byte position in the input.
class ParseError : public ExprError {
public:
    ParseError(std::size_t offset, const std::string& what)
        : ExprError(what), offset(offset) {}
    std::size_t offset;
};

// Unbound variable or domain violation (ln of nonpositive, division by zero, ...).
class EvalError : public ExprError {
public:
    using ExprError::ExprError;
};

struct ExprNode;

class Expr {
public:
    Expr();                 // constant 0
    Expr(double value);     // implicit by design: 2 * x reads naturally
    Expr(int value) : Expr(static_cast<double>(value)) {}

    static Expr variable(std::string name);

    bool is_constant() const;
    bool is_constant(double v) const;
    double constant_value() const;   // pre: is_constant()

    double evaluate(const VarEnv& env) const;
    Expr diff(std::string_view var) const;
    Expr substitute(const std::map<std::string, Expr, std::less<>>& repl) const;

    // Sorted, duplicate-free free-variable names.
    std::vector<std::string> free_variables() const;
    bool depends_on(std::string_view var) const;

    // Precedence-aware printing; evaluate(parse(print(e))) == evaluate(e).
    std::string str() const;

    friend Expr operator+(const Expr&, const Expr&);
    friend Expr operator-(const Expr&, const Expr&);
    friend Expr operator*(const Expr&, const Expr&);
    friend Expr operator/(const Expr&, const Expr&);
    friend Expr operator-(const Expr&);
    friend Expr pow(const Expr&, const Expr&);
    friend Expr apply(FuncOp, const Expr&);

    const ExprNode& node() const { return *node_; }

private:
    explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}
    std::shared_ptr<const ExprNode> node_;
    friend struct ExprFactory;
};

inline Expr sin(const Expr& e)  { return apply(FuncOp::Sin, e); }
inline Expr cos(const Expr& e)  { return apply(FuncOp::Cos, e); }
inline Expr exp(const Expr& e)  { return apply(FuncOp::Exp, e); }
inline Expr ln(const Expr& e)   { return apply(FuncOp::Ln, e); }
inline Expr sqrt(const Expr& e) { return apply(FuncOp::Sqrt, e); }
inline Expr atan(const Expr& e) { return apply(FuncOp::Atan, e); }
inline Expr abs(const Expr& e)  { return apply(FuncOp::Abs, e); }
inline Expr sign(const Expr& e) { return apply(FuncOp::Sign, e); }

// Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' factor)?
//   base   := number | ident | '-' factor | '(' expr ')' | fn '(' expr ')'
// '^' is right-associative and binds tighter than unary minus, so
// -x^2 parses as -(x^2). Identifiers must appear in `vars` unless they
// name one of the built-in functions.
Expr parse_expr(std::string_view text, std::span<const std::string> vars);
Expr parse_expr(std::string_view text, const std::vector<std::string>& vars);

// Postfix tape with variables resolved to slot indices; the fast path for
// integrators and samplers. Evaluation is unchecked: domain violations
// yield IEEE NaN/inf instead of throwing. Reentrant and thread-safe.
class CompiledExpr {
public:
    CompiledExpr() = default;
    CompiledExpr(const Expr& e, std::span<const std::string> slots);
    CompiledExpr(const Expr& e, const std::vector<std::string>& slots);

    double operator()(std::span<const double> slot_values) const;

private:
    enum class Op : unsigned char {
        Const, Slot, Neg, Add, Sub, Mul, Div, Pow,
        Sin, Cos, Exp, Ln, Sqrt, Atan, Abs, Sign
    };
    struct Instr {
        Op op;
        int slot = 0;
        double value = 0.0;
    };
    std::vector<Instr> tape_;
    int max_depth_ = 0;
};

} // namespace nonholo
