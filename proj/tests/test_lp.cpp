#include <catch2/catch_amalgamated.hpp>

#include <boost/multiprecision/cpp_int.hpp>

#include "gnnprop/lp.hpp"
#include "gnnprop/rng.hpp"

using namespace gnnprop;
using Rational = boost::multiprecision::cpp_rational;

namespace {

struct RationalConstraint {
    std::vector<Rational> c;
    Rational d;
    bool strict;
};

/// Exact Fourier-Motzkin elimination; the independent feasibility oracle.
bool fm_feasible(std::vector<RationalConstraint> cons, int n_vars) {
    for (int var = 0; var < n_vars; ++var) {
        std::vector<RationalConstraint> pos, neg, rest;
        for (auto& c : cons) {
            if (c.c[var] > 0) pos.push_back(std::move(c));
            else if (c.c[var] < 0) neg.push_back(std::move(c));
            else rest.push_back(std::move(c));
        }
        for (const auto& p : pos)
            for (const auto& q : neg) {
                // p: a x_var + ... <= dp (a > 0);  q: -b x_var + ... <= dq (b > 0)
                Rational a = p.c[var], b = -q.c[var];
                RationalConstraint combined;
                combined.c.resize(n_vars, 0);
                for (int j = 0; j < n_vars; ++j) combined.c[j] = b * p.c[j] + a * q.c[j];
                combined.d = b * p.d + a * q.d;
                combined.strict = p.strict || q.strict;
                rest.push_back(std::move(combined));
            }
        cons = std::move(rest);
    }
    for (const auto& c : cons) {
        if (c.strict ? !(Rational(0) < c.d) : !(Rational(0) <= c.d)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("contradictory bounds are infeasible", "[lp]") {
    std::vector<LinearConstraint> cons{{{1.0}, 1.0, false, -1, -1, -1},
                                       {{-1.0}, -2.0, false, -1, -1, -1}};
    REQUIRE(lp_feasible(cons, 1).status == LpStatus::Infeasible);
}

TEST_CASE("single bound is feasible with a satisfying witness", "[lp]") {
    std::vector<LinearConstraint> cons{{{1.0}, 1.0, false, -1, -1, -1}};
    LpResult r = lp_feasible(cons, 1);
    REQUIRE(r.status == LpStatus::Feasible);
    REQUIRE(r.witness[0] <= 1.0 + 1e-7);
}

TEST_CASE("strict constraints are tightened", "[lp]") {
    // x < 0 and x >= 0 share only the boundary, which strictness removes
    std::vector<LinearConstraint> cons{{{1.0}, 0.0, true, -1, -1, -1},
                                       {{-1.0}, 0.0, false, -1, -1, -1}};
    REQUIRE(lp_feasible(cons, 1).status == LpStatus::Infeasible);
}

TEST_CASE("empty system is feasible", "[lp]") {
    REQUIRE(lp_feasible({}, 3).status == LpStatus::Feasible);
}

TEST_CASE("free variables reach negative witnesses", "[lp]") {
    std::vector<LinearConstraint> cons{{{1.0, 0.0}, -5.0, false, -1, -1, -1}};
    LpResult r = lp_feasible(cons, 2);
    REQUIRE(r.status == LpStatus::Feasible);
    REQUIRE(r.witness[0] <= -5.0 + 1e-7);
}

TEST_CASE("simplex agrees with rational fourier-motzkin on random systems", "[lp][oracle]") {
    Rng rng(2024);
    int disagreements = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        Rng sub = rng.split(static_cast<uint64_t>(trial));
        int n = sub.uniform_int(1, 5);
        int m = sub.uniform_int(1, 8);
        std::vector<LinearConstraint> cons;
        std::vector<RationalConstraint> rcons;
        for (int i = 0; i < m; ++i) {
            LinearConstraint c;
            RationalConstraint rc;
            c.c.resize(n);
            rc.c.resize(n);
            for (int j = 0; j < n; ++j) {
                int coef = sub.uniform_int(-5, 5);
                c.c[j] = coef;
                rc.c[j] = coef;
            }
            int d = sub.uniform_int(-10, 10);
            c.d = d;
            rc.d = d;
            c.strict = sub.bernoulli(0.3);
            rc.strict = c.strict;
            cons.push_back(c);
            rcons.push_back(rc);
        }
        LpResult got = lp_feasible(cons, n);
        bool expect = fm_feasible(rcons, n);
        REQUIRE(got.status != LpStatus::Indeterminate);
        bool got_feasible = got.status == LpStatus::Feasible;
        if (got_feasible != expect) ++disagreements;
        if (got_feasible) {
            // witness validity within the stated tolerance
            for (const LinearConstraint& c : cons) {
                double lhs = dot(c.c, got.witness);
                REQUIRE(lhs <= c.d + 1e-7);
            }
        }
    }
    REQUIRE(disagreements == 0);
}
