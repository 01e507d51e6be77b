#pragma once

// Nonlinear predictor expressions f(x; beta): a small recursive-descent
// parser producing an immutable AST, plus forward-mode propagation of
// value / gradient / Hessian with respect to the parameters. Derivatives
// are exact, never finite differences.
//
// Grammar (public contract):
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' unary)?            -- right associative
//   atom   := number | ident | func '(' expr ')' | '(' expr ')'
//   func   := log | exp | sqrt | sin | cos | tan
// Identifiers resolve against the declared covariate and parameter names.
// Error messages carry 1-based source positions.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmskew/linalg.hpp"

namespace dmskew::expr {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t pos)
        : std::runtime_error(msg + " (position " + std::to_string(pos) + ")"), position(pos) {}
    std::size_t position; // 1-based offset into the source text
};

class EvalError : public std::domain_error {
    using std::domain_error::domain_error;
};

enum class NodeKind {
    number, covariate, parameter,
    add, sub, mul, div, pow, neg,
    log, exp, sqrt, sin, cos, tan
};

struct Node {
    NodeKind kind;
    double number = 0.0;
    int sym = -1;      // covariate / parameter slot
    int a = -1, b = -1; // child indices; children always precede parents
    std::size_t pos = 0;
};

namespace detail {

inline bool is_function_name(const std::string& s) {
    return s == "log" || s == "exp" || s == "sqrt" || s == "sin" || s == "cos" || s == "tan";
}

struct Token {
    enum Type { number, ident, op, end } type = end;
    double value = 0.0;
    std::string text;
    char symbol = 0;
    std::size_t pos = 0; // 1-based
};

inline std::vector<Token> tokenize(const std::string& src) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = src.size();
    while (i < n) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        const std::size_t pos = i + 1;
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            std::size_t j = i;
            while (j < n && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.'))
                ++j;
            if (j < n && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < n && (src[k] == '+' || src[k] == '-')) ++k;
                if (k < n && std::isdigit(static_cast<unsigned char>(src[k]))) {
                    ++k;
                    while (k < n && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
                    j = k;
                }
            }
            const std::string text = src.substr(i, j - i);
            double v = 0.0;
            const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
            if (res.ec != std::errc() || res.ptr != text.data() + text.size())
                throw ParseError("malformed number '" + text + "'", pos);
            out.push_back({Token::number, v, text, 0, pos});
            i = j;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < n && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
                ++j;
            out.push_back({Token::ident, 0.0, src.substr(i, j - i), 0, pos});
            i = j;
            continue;
        }
        if (c == '+' || c == '-' || c == '*' || c == '/' || c == '^' || c == '(' || c == ')') {
            out.push_back({Token::op, 0.0, std::string(1, c), c, pos});
            ++i;
            continue;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", pos);
    }
    out.push_back({Token::end, 0.0, "", 0, n + 1});
    return out;
}

} // namespace detail

class PredictorModel {
public:
    PredictorModel() = default;

    const std::vector<Node>& nodes() const { return nodes_; }
    int root() const { return static_cast<int>(nodes_.size()) - 1; }
    const std::vector<std::string>& covariate_names() const { return covariates_; }
    const std::vector<std::string>& parameter_names() const { return parameters_; }
    std::size_t n_parameters() const { return parameters_.size(); }
    std::size_t n_covariates() const { return covariates_.size(); }
    const std::string& source() const { return source_; }

    std::string unparse() const { return unparse_node(root()); }

    std::string unparse_node(int idx) const {
        const Node& nd = nodes_[static_cast<std::size_t>(idx)];
        switch (nd.kind) {
            case NodeKind::number: {
                char buf[32];
                auto res = std::to_chars(buf, buf + sizeof(buf), nd.number);
                return std::string(buf, res.ptr);
            }
            case NodeKind::covariate: return covariates_[static_cast<std::size_t>(nd.sym)];
            case NodeKind::parameter: return parameters_[static_cast<std::size_t>(nd.sym)];
            case NodeKind::add: return "(" + unparse_node(nd.a) + "+" + unparse_node(nd.b) + ")";
            case NodeKind::sub: return "(" + unparse_node(nd.a) + "-" + unparse_node(nd.b) + ")";
            case NodeKind::mul: return "(" + unparse_node(nd.a) + "*" + unparse_node(nd.b) + ")";
            case NodeKind::div: return "(" + unparse_node(nd.a) + "/" + unparse_node(nd.b) + ")";
            case NodeKind::pow: return "(" + unparse_node(nd.a) + "^" + unparse_node(nd.b) + ")";
            case NodeKind::neg: return "(-" + unparse_node(nd.a) + ")";
            case NodeKind::log: return "log(" + unparse_node(nd.a) + ")";
            case NodeKind::exp: return "exp(" + unparse_node(nd.a) + ")";
            case NodeKind::sqrt: return "sqrt(" + unparse_node(nd.a) + ")";
            case NodeKind::sin: return "sin(" + unparse_node(nd.a) + ")";
            case NodeKind::cos: return "cos(" + unparse_node(nd.a) + ")";
            case NodeKind::tan: return "tan(" + unparse_node(nd.a) + ")";
        }
        return "?";
    }

private:
    friend PredictorModel parse(const std::string&, const std::vector<std::string>&,
                                const std::vector<std::string>&);
    std::vector<Node> nodes_;
    std::vector<std::string> covariates_;
    std::vector<std::string> parameters_;
    std::string source_;
};

namespace detail {

class Parser {
public:
    Parser(const std::string& src, const std::vector<std::string>& cov,
           const std::vector<std::string>& par, std::vector<Node>& nodes)
        : tokens_(tokenize(src)), cov_(cov), par_(par), nodes_(nodes) {}

    int run() {
        const int root = parse_expr();
        if (peek().type != Token::end)
            throw ParseError("unexpected token '" + peek().text + "'", peek().pos);
        return root;
    }

private:
    std::vector<Token> tokens_;
    std::size_t cursor_ = 0;
    const std::vector<std::string>& cov_;
    const std::vector<std::string>& par_;
    std::vector<Node>& nodes_;

    const Token& peek() const { return tokens_[cursor_]; }
    Token take() { return tokens_[cursor_++]; }

    bool at_op(char c) const { return peek().type == Token::op && peek().symbol == c; }

    int emit(Node nd) {
        nodes_.push_back(nd);
        return static_cast<int>(nodes_.size()) - 1;
    }

    int parse_expr() {
        int lhs = parse_term();
        while (at_op('+') || at_op('-')) {
            const Token op = take();
            const int rhs = parse_term();
            lhs = emit({op.symbol == '+' ? NodeKind::add : NodeKind::sub, 0.0, -1, lhs, rhs,
                        op.pos});
        }
        return lhs;
    }

    int parse_term() {
        int lhs = parse_unary();
        while (at_op('*') || at_op('/')) {
            const Token op = take();
            const int rhs = parse_unary();
            lhs = emit({op.symbol == '*' ? NodeKind::mul : NodeKind::div, 0.0, -1, lhs, rhs,
                        op.pos});
        }
        return lhs;
    }

    int parse_unary() {
        if (at_op('-')) {
            const Token op = take();
            const int a = parse_unary();
            return emit({NodeKind::neg, 0.0, -1, a, -1, op.pos});
        }
        return parse_power();
    }

    int parse_power() {
        const int base = parse_atom();
        if (at_op('^')) {
            const Token op = take();
            const int exponent = parse_unary(); // right associative, allows unary minus
            return emit({NodeKind::pow, 0.0, -1, base, exponent, op.pos});
        }
        return base;
    }

    int parse_atom() {
        const Token tk = take();
        if (tk.type == Token::number)
            return emit({NodeKind::number, tk.value, -1, -1, -1, tk.pos});
        if (tk.type == Token::ident) {
            if (at_op('(')) {
                if (!is_function_name(tk.text))
                    throw ParseError("unknown function '" + tk.text + "'", tk.pos);
                take(); // '('
                const int a = parse_expr();
                expect(')');
                NodeKind k = NodeKind::log;
                if (tk.text == "exp") k = NodeKind::exp;
                else if (tk.text == "sqrt") k = NodeKind::sqrt;
                else if (tk.text == "sin") k = NodeKind::sin;
                else if (tk.text == "cos") k = NodeKind::cos;
                else if (tk.text == "tan") k = NodeKind::tan;
                return emit({k, 0.0, -1, a, -1, tk.pos});
            }
            for (std::size_t j = 0; j < cov_.size(); ++j)
                if (cov_[j] == tk.text)
                    return emit({NodeKind::covariate, 0.0, static_cast<int>(j), -1, -1, tk.pos});
            for (std::size_t j = 0; j < par_.size(); ++j)
                if (par_[j] == tk.text)
                    return emit({NodeKind::parameter, 0.0, static_cast<int>(j), -1, -1, tk.pos});
            throw ParseError("unknown identifier '" + tk.text + "'", tk.pos);
        }
        if (tk.type == Token::op && tk.symbol == '(') {
            const int a = parse_expr();
            expect(')');
            return a;
        }
        throw ParseError("expected a value, got '" + (tk.type == Token::end ? "end of input" : tk.text) + "'",
                         tk.pos);
    }

    void expect(char c) {
        if (!at_op(c))
            throw ParseError(std::string("expected '") + c + "'", peek().pos);
        take();
    }
};

} // namespace detail

inline PredictorModel parse(const std::string& source, const std::vector<std::string>& covariates,
                            const std::vector<std::string>& parameters) {
    if (parameters.empty())
        throw std::invalid_argument("parse: parameter list must not be empty");
    for (const auto& c : covariates)
        for (const auto& p : parameters)
            if (c == p)
                throw std::invalid_argument("parse: name '" + c +
                                            "' declared as both covariate and parameter");
    PredictorModel model;
    model.covariates_ = covariates;
    model.parameters_ = parameters;
    model.source_ = source;
    detail::Parser parser(source, covariates, parameters, model.nodes_);
    parser.run();
    return model;
}

// Identifiers in the source, in first-appearance order, that are neither
// declared covariates nor function names. Used to infer parameter names.
inline std::vector<std::string> free_identifiers(const std::string& source,
                                                 const std::vector<std::string>& covariates) {
    std::vector<std::string> out;
    for (const auto& tk : detail::tokenize(source)) {
        if (tk.type != detail::Token::ident) continue;
        if (detail::is_function_name(tk.text)) continue;
        bool known = false;
        for (const auto& c : covariates) known = known || c == tk.text;
        for (const auto& o : out) known = known || o == tk.text;
        if (!known) out.push_back(tk.text);
    }
    return out;
}

struct DesignDerivatives {
    linalg::Vector eta;                    // n predictor values
    linalg::Matrix jacobian;               // n x p, entry (i,r) = d eta_i / d beta_r
    std::vector<linalg::Matrix> hessians;  // per observation, p x p symmetric
};

namespace detail {

// Forward-mode sweep state: per-node value, gradient and Hessian blocks.
struct Sweep {
    int order; // 0 value, 1 +gradient, 2 +Hessian
    std::size_t p;
    std::vector<double> val;
    std::vector<double> grad; // node-major, p per node
    std::vector<double> hess; // node-major, p*p per node

    Sweep(int order_, std::size_t p_, std::size_t n_nodes) : order(order_), p(p_) {
        val.resize(n_nodes);
        if (order >= 1) grad.assign(n_nodes * p, 0.0);
        if (order >= 2) hess.assign(n_nodes * p * p, 0.0);
    }

    double* g(int i) { return grad.data() + static_cast<std::size_t>(i) * p; }
    double* h(int i) { return hess.data() + static_cast<std::size_t>(i) * p * p; }
};

[[noreturn]] inline void eval_fail(const PredictorModel& model, const Node& nd, std::size_t row,
                                   const std::string& what) {
    throw EvalError("row " + std::to_string(row + 1) + ", '" +
                    model.unparse_node(static_cast<int>(&nd - model.nodes().data())) + "': " + what);
}

inline void chain_unary(Sweep& s, int out, int in, double f, double fp, double fpp) {
    s.val[static_cast<std::size_t>(out)] = f;
    if (s.order >= 1) {
        const double* gu = s.g(in);
        double* go = s.g(out);
        for (std::size_t r = 0; r < s.p; ++r) go[r] = fp * gu[r];
        if (s.order >= 2) {
            const double* hu = s.h(in);
            double* ho = s.h(out);
            for (std::size_t r = 0; r < s.p; ++r)
                for (std::size_t c = r; c < s.p; ++c) {
                    const double v = fp * hu[r * s.p + c] + fpp * gu[r] * gu[c];
                    ho[r * s.p + c] = v;
                    ho[c * s.p + r] = v;
                }
        }
    }
}

inline void evaluate_row(const PredictorModel& model, const double* xrow,
                         const linalg::Vector& beta, std::size_t row, Sweep& s) {
    const auto& nodes = model.nodes();
    const std::size_t p = s.p;
    for (std::size_t idx = 0; idx < nodes.size(); ++idx) {
        const Node& nd = nodes[idx];
        const int out = static_cast<int>(idx);
        switch (nd.kind) {
            case NodeKind::number:
                s.val[idx] = nd.number;
                if (s.order >= 1)
                    for (std::size_t r = 0; r < p; ++r) s.g(out)[r] = 0.0;
                if (s.order >= 2)
                    for (std::size_t r = 0; r < p * p; ++r) s.h(out)[r] = 0.0;
                break;
            case NodeKind::covariate:
                s.val[idx] = xrow[nd.sym];
                if (s.order >= 1)
                    for (std::size_t r = 0; r < p; ++r) s.g(out)[r] = 0.0;
                if (s.order >= 2)
                    for (std::size_t r = 0; r < p * p; ++r) s.h(out)[r] = 0.0;
                break;
            case NodeKind::parameter:
                s.val[idx] = beta[static_cast<std::size_t>(nd.sym)];
                if (s.order >= 1) {
                    for (std::size_t r = 0; r < p; ++r) s.g(out)[r] = 0.0;
                    s.g(out)[nd.sym] = 1.0;
                }
                if (s.order >= 2)
                    for (std::size_t r = 0; r < p * p; ++r) s.h(out)[r] = 0.0;
                break;
            case NodeKind::add:
            case NodeKind::sub: {
                const double sign = nd.kind == NodeKind::add ? 1.0 : -1.0;
                s.val[idx] = s.val[static_cast<std::size_t>(nd.a)] +
                             sign * s.val[static_cast<std::size_t>(nd.b)];
                if (s.order >= 1) {
                    const double *ga = s.g(nd.a), *gb = s.g(nd.b);
                    double* go = s.g(out);
                    for (std::size_t r = 0; r < p; ++r) go[r] = ga[r] + sign * gb[r];
                    if (s.order >= 2) {
                        const double *ha = s.h(nd.a), *hb = s.h(nd.b);
                        double* ho = s.h(out);
                        for (std::size_t r = 0; r < p * p; ++r) ho[r] = ha[r] + sign * hb[r];
                    }
                }
                break;
            }
            case NodeKind::neg:
                chain_unary(s, out, nd.a, -s.val[static_cast<std::size_t>(nd.a)], -1.0, 0.0);
                break;
            case NodeKind::mul: {
                const double u = s.val[static_cast<std::size_t>(nd.a)];
                const double w = s.val[static_cast<std::size_t>(nd.b)];
                s.val[idx] = u * w;
                if (s.order >= 1) {
                    const double *gu = s.g(nd.a), *gw = s.g(nd.b);
                    double* go = s.g(out);
                    for (std::size_t r = 0; r < p; ++r) go[r] = u * gw[r] + w * gu[r];
                    if (s.order >= 2) {
                        const double *hu = s.h(nd.a), *hw = s.h(nd.b);
                        double* ho = s.h(out);
                        for (std::size_t r = 0; r < p; ++r)
                            for (std::size_t c = r; c < p; ++c) {
                                const double v = u * hw[r * p + c] + w * hu[r * p + c] +
                                                 gu[r] * gw[c] + gw[r] * gu[c];
                                ho[r * p + c] = v;
                                ho[c * p + r] = v;
                            }
                    }
                }
                break;
            }
            case NodeKind::div: {
                const double u = s.val[static_cast<std::size_t>(nd.a)];
                const double w = s.val[static_cast<std::size_t>(nd.b)];
                if (w == 0.0) eval_fail(model, nd, row, "division by zero");
                s.val[idx] = u / w;
                if (s.order >= 1) {
                    const double *gu = s.g(nd.a), *gw = s.g(nd.b);
                    double* go = s.g(out);
                    const double iw = 1.0 / w, iw2 = iw * iw;
                    for (std::size_t r = 0; r < p; ++r) go[r] = gu[r] * iw - u * gw[r] * iw2;
                    if (s.order >= 2) {
                        const double *hu = s.h(nd.a), *hw = s.h(nd.b);
                        double* ho = s.h(out);
                        const double iw3 = iw2 * iw;
                        for (std::size_t r = 0; r < p; ++r)
                            for (std::size_t c = r; c < p; ++c) {
                                const double v = hu[r * p + c] * iw -
                                                 (gu[r] * gw[c] + gw[r] * gu[c]) * iw2 -
                                                 u * hw[r * p + c] * iw2 +
                                                 2.0 * u * gw[r] * gw[c] * iw3;
                                ho[r * p + c] = v;
                                ho[c * p + r] = v;
                            }
                    }
                }
                break;
            }
            case NodeKind::pow: {
                const double u = s.val[static_cast<std::size_t>(nd.a)];
                const Node& bn = nodes[static_cast<std::size_t>(nd.b)];
                const bool const_exp = bn.kind == NodeKind::number;
                if (const_exp) {
                    const double c = bn.number;
                    if (u < 0.0 && c != std::floor(c))
                        eval_fail(model, nd, row, "negative base with non-integer exponent");
                    const double f = std::pow(u, c);
                    double fp = 0.0, fpp = 0.0;
                    if (c != 0.0 && s.order >= 1) fp = c * std::pow(u, c - 1.0);
                    if (c != 0.0 && c != 1.0 && s.order >= 2)
                        fpp = c * (c - 1.0) * std::pow(u, c - 2.0);
                    if (!std::isfinite(f) || (s.order >= 1 && !std::isfinite(fp)) ||
                        (s.order >= 2 && !std::isfinite(fpp)))
                        eval_fail(model, nd, row, "power not differentiable at this base value");
                    chain_unary(s, out, nd.a, f, fp, fpp);
                } else {
                    if (!(u > 0.0))
                        eval_fail(model, nd, row,
                                  "non-positive base with a parameter-dependent exponent");
                    const double w = s.val[static_cast<std::size_t>(nd.b)];
                    const double lu = std::log(u);
                    const double f = std::exp(w * lu);
                    s.val[idx] = f;
                    if (s.order >= 1) {
                        const double *gu = s.g(nd.a), *gw = s.g(nd.b);
                        double* go = s.g(out);
                        // gradient of t = w * log(u), then f = exp(t)
                        std::vector<double> gt(p);
                        for (std::size_t r = 0; r < p; ++r) gt[r] = gw[r] * lu + w * gu[r] / u;
                        for (std::size_t r = 0; r < p; ++r) go[r] = f * gt[r];
                        if (s.order >= 2) {
                            const double *hu = s.h(nd.a), *hw = s.h(nd.b);
                            double* ho = s.h(out);
                            const double iu = 1.0 / u;
                            for (std::size_t r = 0; r < p; ++r)
                                for (std::size_t c = r; c < p; ++c) {
                                    const double ht =
                                        hw[r * p + c] * lu +
                                        (gw[r] * gu[c] + gu[r] * gw[c]) * iu +
                                        w * hu[r * p + c] * iu - w * gu[r] * gu[c] * iu * iu;
                                    const double v = f * (ht + gt[r] * gt[c]);
                                    ho[r * p + c] = v;
                                    ho[c * p + r] = v;
                                }
                        }
                    }
                }
                break;
            }
            case NodeKind::log: {
                const double u = s.val[static_cast<std::size_t>(nd.a)];
                if (!(u > 0.0)) eval_fail(model, nd, row, "log of a non-positive value");
                chain_unary(s, out, nd.a, std::log(u), 1.0 / u, -1.0 / (u * u));
                break;
            }
            case NodeKind::exp: {
                const double f = std::exp(s.val[static_cast<std::size_t>(nd.a)]);
                chain_unary(s, out, nd.a, f, f, f);
                break;
            }
            case NodeKind::sqrt: {
                const double u = s.val[static_cast<std::size_t>(nd.a)];
                if (u < 0.0 || (u == 0.0 && s.order >= 1))
                    eval_fail(model, nd, row, "square root of a negative value");
                const double f = std::sqrt(u);
                const double fp = s.order >= 1 ? 0.5 / f : 0.0;
                chain_unary(s, out, nd.a, f, fp, -0.5 * fp / u);
                break;
            }
            case NodeKind::sin: {
                const double u = s.val[static_cast<std::size_t>(nd.a)];
                chain_unary(s, out, nd.a, std::sin(u), std::cos(u), -std::sin(u));
                break;
            }
            case NodeKind::cos: {
                const double u = s.val[static_cast<std::size_t>(nd.a)];
                chain_unary(s, out, nd.a, std::cos(u), -std::sin(u), -std::cos(u));
                break;
            }
            case NodeKind::tan: {
                const double u = s.val[static_cast<std::size_t>(nd.a)];
                const double t = std::tan(u);
                const double fp = 1.0 + t * t;
                chain_unary(s, out, nd.a, t, fp, 2.0 * t * fp);
                break;
            }
        }
    }
}

} // namespace detail

inline DesignDerivatives design_derivatives(const PredictorModel& model, const linalg::Matrix& x,
                                            const linalg::Vector& beta, int order = 2) {
    const std::size_t n = x.rows();
    const std::size_t p = model.n_parameters();
    if (x.cols() != model.n_covariates())
        throw std::invalid_argument("design_derivatives: covariate count mismatch");
    if (beta.size() != p) throw std::invalid_argument("design_derivatives: beta length mismatch");
    for (double b : beta)
        if (!std::isfinite(b)) throw std::invalid_argument("design_derivatives: beta not finite");

    DesignDerivatives out;
    out.eta.resize(n);
    if (order >= 1) out.jacobian = linalg::Matrix(n, p);
    if (order >= 2) out.hessians.assign(n, linalg::Matrix(p, p));

    detail::Sweep sweep(order, p, model.nodes().size());
    const int root = model.root();
    for (std::size_t i = 0; i < n; ++i) {
        detail::evaluate_row(model, x.data().data() + i * x.cols(), beta, i, sweep);
        out.eta[i] = sweep.val[static_cast<std::size_t>(root)];
        if (order >= 1) {
            const double* g = sweep.g(root);
            for (std::size_t r = 0; r < p; ++r) out.jacobian(i, r) = g[r];
        }
        if (order >= 2) {
            const double* h = sweep.h(root);
            for (std::size_t r = 0; r < p; ++r)
                for (std::size_t c = 0; c < p; ++c) out.hessians[i](r, c) = h[r * p + c];
        }
    }
    return out;
}

inline linalg::Vector eval_eta(const PredictorModel& model, const linalg::Matrix& x,
                               const linalg::Vector& beta) {
    return design_derivatives(model, x, beta, 0).eta;
}

inline linalg::Matrix jacobian(const PredictorModel& model, const linalg::Matrix& x,
                               const linalg::Vector& beta) {
    return design_derivatives(model, x, beta, 1).jacobian;
}

inline std::vector<linalg::Matrix> hessians(const PredictorModel& model, const linalg::Matrix& x,
                                            const linalg::Vector& beta) {
    return design_derivatives(model, x, beta, 2).hessians;
}

} // namespace dmskew::expr
