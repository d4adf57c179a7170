// Unit tests for the expression language: grammar, precedence, evaluation,
// domain guards, printing round-trips, and compilation into transform maps.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "unidelta/exprlang.hpp"
#include "unidelta/remainder.hpp"

using namespace unidelta;
using Catch::Approx;

namespace {

double ev(const std::string& src, const Vec& t = {0.0}) { return parse(src).eval(t); }

}  // namespace

TEST_CASE("arithmetic precedence and associativity", "[exprlang]") {
    REQUIRE(ev("2*3+4*5") == Approx(26.0));
    REQUIRE(ev("2+3*4") == Approx(14.0));
    REQUIRE(ev("(2+3)*4") == Approx(20.0));
    REQUIRE(ev("7-4-2") == Approx(1.0));       // left-assoc subtraction
    REQUIRE(ev("16/4/2") == Approx(2.0));      // left-assoc division
    REQUIRE(ev("2^3^2") == Approx(512.0));     // right-assoc power
    REQUIRE(ev("(2^3)^2") == Approx(64.0));
    REQUIRE(ev("-t1^2", {3.0}) == Approx(-9.0));  // unary minus binds looser than ^
    REQUIRE(ev("(-t1)^2", {3.0}) == Approx(9.0));
    REQUIRE(ev("2^-1") == Approx(0.5));        // exponent may be a signed factor
    REQUIRE(ev("--3") == Approx(3.0));
}

TEST_CASE("numeric literals", "[exprlang]") {
    REQUIRE(ev("1e3") == Approx(1000.0));
    REQUIRE(ev("2.5E-2") == Approx(0.025));
    REQUIRE(ev(".5") == Approx(0.5));
    REQUIRE(ev("10.") == Approx(10.0));
    REQUIRE(ev("1e+2") == Approx(100.0));
}

TEST_CASE("function calls", "[exprlang]") {
    REQUIRE(ev("sqrt(9)") == Approx(3.0));
    REQUIRE(ev("abs(-3)*sqrt(9)") == Approx(9.0));
    REQUIRE(ev("exp(0)+log(1)") == Approx(1.0));
    REQUIRE(ev("sign(-2.5)") == Approx(-1.0));
    REQUIRE(ev("sign(0)") == 0.0);
    REQUIRE(ev("min(2,3)+max(4,1)") == Approx(6.0));
    REQUIRE(ev("max(t1, t2)", {1.0, 7.0}) == Approx(7.0));
}

TEST_CASE("variables", "[exprlang]") {
    REQUIRE(ev("t1", {4.5}) == Approx(4.5));
    REQUIRE(ev("t2 - t1", {1.0, 3.5}) == Approx(2.5));
    REQUIRE(parse("t3 + t1").max_var() == 3);
    REQUIRE(parse("42").max_var() == 0);
}

TEST_CASE("syntax errors carry byte offsets", "[exprlang]") {
    const auto expect_offset = [](const std::string& src, std::size_t off) {
        try {
            parse(src);
            FAIL("expected SyntaxError for: " << src);
        } catch (const SyntaxError& e) {
            INFO(src << " -> " << e.what());
            REQUIRE(e.offset == off);
        }
    };
    expect_offset("sqrt(", 5);       // call opened, nothing follows
    expect_offset("", 0);
    expect_offset("1 +", 3);
    expect_offset("(1+2", 4);        // missing ')'
    expect_offset("2 3", 2);         // trailing input
    expect_offset("t0", 0);          // indices start at t1
    expect_offset("x + 1", 0);       // bare identifiers are not variables

    REQUIRE_THROWS_AS(parse("foo(1)"), UnknownFunction);
    REQUIRE_THROWS_AS(parse("min(5)"), ArityError);
    REQUIRE_THROWS_AS(parse("sqrt(1,2)"), ArityError);
}

TEST_CASE("print then parse is an identity on the tree", "[exprlang]") {
    const std::vector<std::string> sources = {
        "1+2*3",
        "-t1^2",
        "2^3^2",
        "min(t1, max(t2, 3))/(t1 - 4)",
        "sqrt(abs(t1))*exp(-t2/2)",
        "sign(t1)*log(t2+5)",
    };
    for (const auto& src : sources) {
        INFO(src);
        const Expr first = parse(src);
        const Expr second = parse(first.print());
        REQUIRE(second.equals(first));
        REQUIRE(second.print() == first.print());
    }
}

TEST_CASE("domain guards classify points", "[exprlang]") {
    const Expr inv = parse("1/t1");
    REQUIRE(inv.domain({1.0}) == Region::inside);
    REQUIRE(inv.domain({0.0}) == Region::boundary);
    REQUIRE(inv.domain({5e-9}) == Region::boundary);
    REQUIRE(inv.domain({-2.0}) == Region::inside);

    const Expr rt = parse("sqrt(t1)");
    REQUIRE(rt.domain({2.0}) == Region::inside);
    REQUIRE(rt.domain({0.0}) == Region::boundary);
    REQUIRE(rt.domain({-1.0}) == Region::outside);

    const Expr lg = parse("log(t1 - 1)");
    REQUIRE(lg.domain({3.0}) == Region::inside);
    REQUIRE(lg.domain({1.0}) == Region::boundary);
    REQUIRE(lg.domain({0.0}) == Region::outside);

    const Expr pw = parse("t1^0.5");
    REQUIRE(pw.domain({4.0}) == Region::inside);
    REQUIRE(pw.domain({-4.0}) == Region::outside);   // fractional power of a negative
    REQUIRE(pw.domain({0.0}) == Region::boundary);
    REQUIRE(parse("t1^2").domain({-4.0}) == Region::inside);  // integral powers are fine
    REQUIRE(parse("t1^-1").domain({0.0}) == Region::boundary);

    // guards compose through the whole tree
    REQUIRE(parse("sqrt(t1) + 1/t2").domain({1.0, 0.0}) == Region::boundary);
    REQUIRE(parse("sqrt(t1) + 1/t2").domain({-1.0, 0.0}) == Region::outside);
}

TEST_CASE("compile_phi shapes and errors", "[exprlang]") {
    const PhiMap p = compile_phi({"t1 + t2", "t1 * t2"});
    REQUIRE(p.d_in == 2);
    REQUIRE(p.d_out == 2);
    REQUIRE_FALSE(p.has_analytic_jacobian());
    const Vec out = eval_phi(p, {2.0, 3.0});
    REQUIRE(out[0] == Approx(5.0));
    REQUIRE(out[1] == Approx(6.0));

    REQUIRE_THROWS_AS(compile_phi({}), EmptyError);
    REQUIRE_THROWS_AS(compile_phi({"1+2"}), DimensionError);       // no variables
    REQUIRE_THROWS_AS(compile_phi({"t1 + t3"}), DimensionError);   // t2 missing

    // the gap may be covered by another component
    REQUIRE_NOTHROW(compile_phi({"t1 + t3", "t2"}));
}

TEST_CASE("compiled transforms agree with builtins", "[exprlang]") {
    const PhiMap sq_expr = compile_phi({"t1^2"});
    const PhiMap& sq = builtin("square");

    // finite-difference Jacobian of the compiled form vs the analytic one
    for (double m : {0.4, 1.3, -2.0}) {
        const Mat dn = jacobian(sq_expr, {m});
        const Mat da = jacobian(sq, {m});
        REQUIRE(dn(0, 0) == Approx(da(0, 0)).epsilon(1e-6));
    }

    // the normalized remainder through the compiled map matches the builtin
    for (double t : {0.5, 0.9, 1.7}) {
        for (double m : {0.6, 1.2, 2.0}) {
            if (std::fabs(t - m) < 0.05) continue;
            const double want = delta(sq, {t}, {m});
            const double got = delta(sq_expr, {t}, {m});
            REQUIRE(got == Approx(want).margin(1e-9));
        }
    }

    const PhiMap ratio_expr = compile_phi({"t1/t2"});
    const PhiMap& ratio = builtin("iv_ratio");
    const double want = delta(ratio, {1.0, 1.0}, {1.0, 2.0});
    const double got = delta(ratio_expr, {1.0, 1.0}, {1.0, 2.0});
    REQUIRE(got == Approx(want).margin(1e-9));
    REQUIRE(ratio_expr.domain_pred({1.0, 0.0}) == Region::boundary);
}

TEST_CASE("expression evaluation stays finite on guarded points", "[exprlang]") {
    // eval_phi refuses boundary/outside points rather than returning inf/nan
    const PhiMap p = compile_phi({"1/t1"});
    REQUIRE_THROWS_AS(eval_phi(p, {0.0}), DomainError);
    const PhiMap q = compile_phi({"log(t1)"});
    REQUIRE_THROWS_AS(eval_phi(q, {-1.0}), DomainError);
    REQUIRE(eval_phi(q, {std::exp(1.0)})[0] == Approx(1.0));
}
