#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "autodiff/geometry_ops.hpp"
#include "autodiff/tape.hpp"
#include "common/rng.hpp"
#include "fd_check.hpp"
#include "geometry/geometry.hpp"

using namespace prcaps;
using prcaps::testing::fd_check;

namespace {

Tensor random_tensor(Rng& rng, int r, int c, double lo = -1.5, double hi = 1.5) {
    Tensor t(r, c);
    for (double& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

// rows on the radius-r sphere, kept away from the antipode of the pole
Tensor random_sphere_rows(Rng& rng, int m, int dim, double radius) {
    Tensor t(m, dim);
    for (int i = 0; i < m; ++i) {
        double n2 = 0;
        for (int j = 0; j < dim; ++j) {
            t.at(i, j) = rng.gaussian();
            n2 += t.at(i, j) * t.at(i, j);
        }
        // bias toward the pole hemisphere so no draw sits near the cut locus
        t.at(i, 0) = std::fabs(t.at(i, 0)) + 0.3;
        n2 = 0;
        for (int j = 0; j < dim; ++j) n2 += t.at(i, j) * t.at(i, j);
        double f = radius / std::sqrt(n2);
        for (int j = 0; j < dim; ++j) t.at(i, j) *= f;
    }
    return t;
}

Tensor random_manifold_rows(Rng& rng, const geom::Signature& sig, double beta) {
    geom::Curvature c(beta);
    Tensor out(4, sig.ambient());
    for (int i = 0; i < out.rows; ++i) {
        geom::ProductPoint pp;
        pp.sphere.resize(sig.time_dim());
        double n2 = 0;
        for (double& x : pp.sphere) {
            x = rng.gaussian();
            n2 += x * x;
        }
        pp.sphere[0] = std::fabs(pp.sphere[0]) + 0.3;
        n2 = 0;
        for (double x : pp.sphere) n2 += x * x;
        for (double& x : pp.sphere) x *= c.radius() / std::sqrt(n2);
        pp.euclid.resize(sig.s);
        for (double& x : pp.euclid) x = rng.uniform(-2, 2);
        geom::PseudoPoint p = geom::psi_inv(pp, sig, c);
        std::copy(p.x.begin(), p.x.end(), out.row(i));
    }
    return out;
}

} // namespace

TEST_CASE("tape computes and differentiates a quadratic exactly") {
    Tape t;
    Tensor w(1, 3);
    w.v = {1.0, -2.0, 0.5};
    Var x = t.leaf(w);
    Var loss = t.sum_all(t.square(x));
    CHECK(t.val(loss).v[0] == doctest::Approx(5.25));
    t.backward(loss);
    const Tensor& g = t.grad_ref(x);
    CHECK(g.v[0] == doctest::Approx(2.0));
    CHECK(g.v[1] == doctest::Approx(-4.0));
    CHECK(g.v[2] == doctest::Approx(1.0));
}

TEST_CASE("constant pipeline has zero gradients") {
    Tape t;
    Var x = t.leaf(Tensor(2, 3, 1.0));
    Var c = t.leaf(Tensor::scalar(4.0));
    Var loss = t.mul_sv(t.scale(t.sum_all(x), 0.0), c);
    t.backward(loss);
    for (double g : t.grad_ref(x).v) CHECK(g == 0.0);
}

TEST_CASE("finite differences: arithmetic and reduction ops") {
    Rng rng(100);
    auto weights = random_tensor(rng, 3, 4);

    auto run = [&](const char* name, prcaps::testing::Builder b, std::vector<Tensor> in) {
        auto rep = fd_check(b, std::move(in));
        INFO(name, " worst rel err ", rep.worst_rel);
        CHECK(rep.pass_fraction() >= 0.95);
    };

    run("add/mul/sub", [](Tape& t, const std::vector<Var>& v) {
        return t.sum_all(t.mul(t.add(v[0], v[1]), t.sub(v[0], t.scale(v[1], 0.7))));
    }, {random_tensor(rng, 3, 4), random_tensor(rng, 3, 4)});

    run("matmul_nt+rowvec", [](Tape& t, const std::vector<Var>& v) {
        return t.sum_all(t.square(t.add_rowvec(t.matmul_nt(v[0], v[1]), v[2])));
    }, {random_tensor(rng, 5, 3), random_tensor(rng, 4, 3), random_tensor(rng, 1, 4)});

    run("mul_col/rowdot/rowsum", [](Tape& t, const std::vector<Var>& v) {
        Var d = t.rowdot(v[0], v[1]);
        return t.sum_all(t.rowsum(t.mul_col(v[0], d)));
    }, {random_tensor(rng, 4, 3), random_tensor(rng, 4, 3)});

    run("colmean/sum", [](Tape& t, const std::vector<Var>& v) {
        return t.sum_all(t.square(t.colmean(v[0])));
    }, {random_tensor(rng, 6, 3)});

    run("slice/concat", [](Tape& t, const std::vector<Var>& v) {
        Var a = t.slice_cols(v[0], 0, 2);
        Var b = t.slice_cols(v[0], 2, 2);
        return t.sum_all(t.square(t.concat_cols({b, a, v[1]})));
    }, {random_tensor(rng, 3, 4), random_tensor(rng, 3, 2)});

    run("scalar broadcasts", [](Tape& t, const std::vector<Var>& v) {
        Var s = t.sum_all(v[1]);
        return t.sum_all(t.add_sv(t.mul_sv(t.sub_sv(v[0], s), s), s));
    }, {random_tensor(rng, 3, 3), random_tensor(rng, 1, 1)});
}

TEST_CASE("finite differences: elementwise nonlinearities") {
    Rng rng(200);
    auto run = [&](const char* name, prcaps::testing::Builder b, std::vector<Tensor> in) {
        auto rep = fd_check(b, std::move(in));
        INFO(name, " worst rel err ", rep.worst_rel);
        CHECK(rep.pass_fraction() >= 0.95);
    };

    run("tanh/sigmoid/exp", [](Tape& t, const std::vector<Var>& v) {
        return t.sum_all(t.mul(t.tanh_(v[0]), t.add(t.sigmoid_(v[0]), t.exp_(t.scale(v[0], 0.3)))));
    }, {random_tensor(rng, 4, 4)});

    run("sqrt/recip/square", [](Tape& t, const std::vector<Var>& v) {
        Var pos = t.add_scalar(t.square(v[0]), 0.5);
        return t.sum_all(t.add(t.sqrt_guard(pos, 0.01), t.recip(pos)));
    }, {random_tensor(rng, 4, 3)});

    run("softmax", [](Tape& t, const std::vector<Var>& v) {
        return t.sum_all(t.square(t.softmax_rows(v[0])));
    }, {random_tensor(rng, 5, 4)});

    run("log_clamp interior", [](Tape& t, const std::vector<Var>& v) {
        Var p = t.softmax_rows(v[0]);
        return t.sum_all(t.log_clamp(p, 1e-12, 1.0));
    }, {random_tensor(rng, 4, 3)});

    run("clamp interior", [](Tape& t, const std::vector<Var>& v) {
        return t.sum_all(t.square(t.clamp_(v[0], -10.0, 10.0)));
    }, {random_tensor(rng, 4, 3)});
}

TEST_CASE("finite differences: fused sphere primitives") {
    Rng rng(300);
    double radius = 1.3;

    auto sph_rows = random_sphere_rows(rng, 5, 4, radius);
    auto rep_log = fd_check(
        [radius](Tape& t, const std::vector<Var>& v) {
            Var w = t.leaf(Tensor(5, 4, 0.37));
            return t.sum_all(t.mul(t.sphere_log_origin(v[0], radius), w));
        },
        {sph_rows});
    INFO("sphere_log worst rel err ", rep_log.worst_rel);
    CHECK(rep_log.pass_fraction() >= 0.95);

    // tangent rows with zero first coordinate, moderate norm
    Tensor tan(5, 4);
    for (int i = 0; i < 5; ++i) {
        for (int j = 1; j < 4; ++j) tan.at(i, j) = rng.uniform(-1.0, 1.0);
    }
    auto rep_exp = fd_check(
        [radius](Tape& t, const std::vector<Var>& v) {
            Var w = t.leaf(Tensor(5, 4, 0.55));
            return t.sum_all(t.mul(t.sphere_exp_origin(v[0], radius), w));
        },
        {tan});
    INFO("sphere_exp worst rel err ", rep_exp.worst_rel);
    CHECK(rep_exp.pass_fraction() >= 0.95);
}

TEST_CASE("sphere primitives agree with the value-level kernel") {
    Rng rng(400);
    double radius = 1.0;
    Tensor p = random_sphere_rows(rng, 8, 5, radius);
    std::vector<double> pole(5, 0.0);
    pole[0] = radius;

    Tape t;
    Var logs = t.sphere_log_origin(t.leaf(p), radius);
    for (int i = 0; i < p.rows; ++i) {
        std::vector<double> row(p.row(i), p.row(i) + p.cols);
        auto want = geom::sph_log(pole, row, radius);
        for (int j = 0; j < p.cols; ++j) {
            CHECK(t.val(logs).at(i, j) == doctest::Approx(want[j]).epsilon(1e-12));
        }
    }

    Var back = t.sphere_exp_origin(logs, radius);
    for (int i = 0; i < p.rows; ++i) {
        // exp(log(p)) = p; the tape primitive omits the final renorm, so 1e-9
        for (int j = 0; j < p.cols; ++j) {
            CHECK(t.val(back).at(i, j) == doctest::Approx(p.at(i, j)).epsilon(1e-9));
        }
    }
}

TEST_CASE("differentiable geometry matches the value-level kernel row by row") {
    geom::Signature sig(3, 2);
    geom::Curvature beta(-1.0);
    Rng rng(500);
    Tensor pts = random_manifold_rows(rng, sig, beta.beta);

    Tape t;
    Var x = t.leaf(pts);
    Var logs = ad::diffeo_log(t, x, sig, beta.radius());
    Var back = ad::diffeo_exp(t, logs, sig, beta.radius());
    Var proj = ad::project_q(t, x, sig, beta.radius());

    for (int i = 0; i < pts.rows; ++i) {
        geom::PseudoPoint p(sig, beta, std::vector<double>(pts.row(i), pts.row(i) + pts.cols));
        geom::TangentVector xi = geom::diffeo_log_o(p);
        for (int j = 0; j < pts.cols; ++j) {
            CHECK(t.val(logs).at(i, j) == doctest::Approx(xi.coords[j]).epsilon(1e-10));
            CHECK(t.val(back).at(i, j) == doctest::Approx(pts.at(i, j)).epsilon(1e-8));
        }
        geom::PseudoPoint pr = geom::project_to_q(p.x, sig, beta);
        for (int j = 0; j < pts.cols; ++j) {
            CHECK(t.val(proj).at(i, j) == doctest::Approx(pr.x[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("finite differences through composed manifold maps") {
    geom::Signature sig(2, 2);
    double radius = 1.0;
    Rng rng(600);

    // tangent -> exp -> log -> weighted sum, gradients w.r.t. the tangent
    Tensor tan(3, sig.ambient());
    for (int i = 0; i < 3; ++i) {
        for (int j = 1; j < sig.time_dim(); ++j) tan.at(i, j) = rng.uniform(-0.8, 0.8);
        for (int j = sig.time_dim(); j < sig.ambient(); ++j) tan.at(i, j) = rng.uniform(-1.5, 1.5);
    }
    auto rep = fd_check(
        [&, radius](Tape& t, const std::vector<Var>& v) {
            Var p = ad::diffeo_exp(t, v[0], sig, radius);
            Var l = ad::diffeo_log(t, p, sig, radius);
            Var w = t.leaf(Tensor(3, sig.ambient(), 0.41));
            return t.sum_all(t.mul(l, w));
        },
        {tan});
    INFO("exp-log worst rel err ", rep.worst_rel);
    CHECK(rep.pass_fraction() >= 0.95);

    auto rep2 = fd_check(
        [&, radius](Tape& t, const std::vector<Var>& v) {
            Var p = ad::diffeo_exp(t, v[0], sig, radius);
            Var q = ad::project_q(t, p, sig, radius);
            Var sq = ad::squash_rows(t, t.slice_cols(q, 0, sig.ambient()));
            return t.sum_all(t.square(sq));
        },
        {tan});
    INFO("proj-squash worst rel err ", rep2.worst_rel);
    CHECK(rep2.pass_fraction() >= 0.95);
}

TEST_CASE("squash rows: zero, unit, bound") {
    Tape t;
    Tensor s(3, 3);
    // row 0 zero, row 1 unit, row 2 large
    s.at(1, 0) = 1.0;
    s.at(2, 0) = 10.0;
    s.at(2, 1) = -4.0;
    Var out = ad::squash_rows(t, t.leaf(s));
    for (int j = 0; j < 3; ++j) CHECK(t.val(out).at(0, j) == doctest::Approx(0.0));
    CHECK(t.val(out).at(1, 0) == doctest::Approx(0.5).epsilon(1e-9));

    Rng rng(700);
    Tensor r = random_tensor(rng, 50, 4, -5, 5);
    Tape t2;
    Var o2 = ad::squash_rows(t2, t2.leaf(r));
    for (int i = 0; i < 50; ++i) {
        double n = 0;
        for (int j = 0; j < 4; ++j) n += t2.val(o2).at(i, j) * t2.val(o2).at(i, j);
        CHECK(std::sqrt(n) < 1.0);
    }
}

TEST_CASE("dropout scales kept entries and masks gradients") {
    Rng rng(800);
    Tape t;
    Tensor x(20, 10, 1.0);
    Var in = t.leaf(x);
    Var out = t.dropout(in, 0.5, rng);
    int kept = 0;
    for (double v : t.val(out).v) {
        if (v != 0.0) {
            CHECK(v == doctest::Approx(2.0));
            ++kept;
        }
    }
    CHECK(kept > 40);
    CHECK(kept < 160);
    t.backward(t.sum_all(out));
    for (int i = 0; i < x.size(); ++i) {
        CHECK(t.grad_ref(in).v[i] == doctest::Approx(t.val(out).v[i]));
    }
}

TEST_CASE("ce_with_logits matches log softmax and differentiates") {
    auto labels = std::make_shared<std::vector<int>>(std::vector<int>{0, 2, 1});
    auto mask = std::make_shared<std::vector<std::uint8_t>>(std::vector<std::uint8_t>{1, 1, 0});
    Rng rng(900);
    Tensor logits = random_tensor(rng, 3, 3);

    Tape t;
    Var lv = t.leaf(logits);
    Var loss = t.ce_with_logits(lv, labels, mask);

    double want = 0;
    for (int i = 0; i < 2; ++i) {
        double mx = std::max({logits.at(i, 0), logits.at(i, 1), logits.at(i, 2)});
        double z = 0;
        for (int j = 0; j < 3; ++j) z += std::exp(logits.at(i, j) - mx);
        want += std::log(z) + mx - logits.at(i, (*labels)[i]);
    }
    want /= 2;
    CHECK(t.val(loss).v[0] == doctest::Approx(want).epsilon(1e-12));

    auto rep = fd_check(
        [&](Tape& tp, const std::vector<Var>& v) { return tp.ce_with_logits(v[0], labels, mask); },
        {logits});
    CHECK(rep.pass_fraction() >= 0.95);
}

TEST_CASE("spmm propagates and differentiates") {
    auto adj = std::make_shared<NormAdj>();
    adj->n = 3;
    adj->rows = {{{0, 0.5}, {1, 0.5}}, {{0, 0.5}, {1, 0.5}}, {{2, 1.0}}};

    Rng rng(1000);
    Tensor x = random_tensor(rng, 3, 2);
    Tape t;
    Var xv = t.leaf(x);
    Var y = t.spmm(adj, xv);
    CHECK(t.val(y).at(0, 0) == doctest::Approx(0.5 * x.at(0, 0) + 0.5 * x.at(1, 0)));
    CHECK(t.val(y).at(2, 1) == doctest::Approx(x.at(2, 1)));

    auto rep = fd_check(
        [&](Tape& tp, const std::vector<Var>& v) {
            return tp.sum_all(tp.square(tp.spmm(adj, v[0])));
        },
        {x});
    CHECK(rep.pass_fraction() >= 0.95);
}
