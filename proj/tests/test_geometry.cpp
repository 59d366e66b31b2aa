#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "common/rng.hpp"
#include "geometry/geometry.hpp"

using namespace prcaps;
using namespace prcaps::geom;

namespace {

// random point on the sphere of given radius via a normalized gaussian
std::vector<double> random_sphere_point(Rng& rng, int dim, double radius) {
    std::vector<double> v(dim);
    double n2 = 0;
    do {
        n2 = 0;
        for (double& x : v) {
            x = rng.gaussian();
            n2 += x * x;
        }
    } while (n2 < 1e-12);
    double f = radius / std::sqrt(n2);
    for (double& x : v) x *= f;
    return v;
}

ProductPoint random_product_point(Rng& rng, const Signature& sig, const Curvature& beta) {
    ProductPoint p;
    p.sphere = random_sphere_point(rng, sig.time_dim(), beta.radius());
    p.euclid.resize(sig.s);
    for (double& x : p.euclid) x = rng.uniform(-3.0, 3.0);
    return p;
}

PseudoPoint random_manifold_point(Rng& rng, const Signature& sig, const Curvature& beta) {
    return psi_inv(random_product_point(rng, sig, beta), sig, beta);
}

} // namespace

TEST_CASE("signature and curvature constructors reject degenerate input") {
    CHECK_THROWS_AS(Signature(0, 1), std::invalid_argument);
    CHECK_THROWS_AS(Signature(1, 0), std::invalid_argument);
    CHECK_THROWS_AS(Curvature(0.0), std::invalid_argument);
    Signature sig(2, 3);
    CHECK(sig.ambient() == 6);
    CHECK(sig.time_dim() == 4);
}

TEST_CASE("ps_inner hand-evaluated cases") {
    Signature sig(1, 1);
    Curvature beta(-1.0);
    PseudoPoint o = origin(sig, beta);
    CHECK(ps_inner(o.x, o.x, sig) == doctest::Approx(-1.0).epsilon(1e-15));

    std::vector<double> x{0.0, std::sqrt(5.0), 2.0};
    CHECK(ps_inner(x, x, sig) == doctest::Approx(-1.0).epsilon(1e-12));

    std::vector<double> a{1.0, 0.0, 0.0};
    std::vector<double> b{0.0, 1.0, 3.0};
    CHECK(ps_inner(a, b, sig) == doctest::Approx(0.0));

    std::vector<double> short_vec{1.0, 2.0};
    CHECK_THROWS_AS(ps_inner(short_vec, short_vec, sig), std::invalid_argument);
}

TEST_CASE("ps_inner is symmetric and bilinear on random triples") {
    Signature sig(3, 2);
    Rng rng(7);
    for (int it = 0; it < 200; ++it) {
        std::vector<double> x(sig.ambient()), y(sig.ambient()), z(sig.ambient());
        for (auto* v : {&x, &y, &z}) {
            for (double& e : *v) e = rng.uniform(-2, 2);
        }
        double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        CHECK(ps_inner(x, y, sig) == doctest::Approx(ps_inner(y, x, sig)).epsilon(1e-12));
        std::vector<double> comb(sig.ambient());
        for (int i = 0; i < sig.ambient(); ++i) comb[i] = a * x[i] + b * y[i];
        double lhs = ps_inner(comb, z, sig);
        double rhs = a * ps_inner(x, z, sig) + b * ps_inner(y, z, sig);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("on_manifold membership cases") {
    Signature sig(1, 1);
    Curvature beta(-1.0);
    CHECK(on_manifold(origin(sig, beta), 1e-6));
    CHECK(on_manifold(PseudoPoint(sig, beta, {0.0, std::sqrt(5.0), 2.0}), 1e-6));
    CHECK_FALSE(on_manifold(PseudoPoint(sig, beta, {1.0, 1.0, 0.0}), 1e-6));
}

TEST_CASE("psi maps the pole to the pole and hand case") {
    Signature sig(1, 1);
    Curvature beta(-1.0);
    ProductPoint p = psi(origin(sig, beta));
    CHECK(p.sphere[0] == doctest::Approx(1.0));
    CHECK(p.sphere[1] == doctest::Approx(0.0));
    CHECK(p.euclid[0] == doctest::Approx(0.0));

    ProductPoint q = psi(PseudoPoint(sig, beta, {0.0, std::sqrt(5.0), 2.0}));
    CHECK(q.sphere[0] == doctest::Approx(0.0));
    CHECK(q.sphere[1] == doctest::Approx(1.0));
    CHECK(q.euclid[0] == doctest::Approx(2.0));
}

TEST_CASE("psi_inv hand case and membership oracle") {
    Signature sig(1, 1);
    Curvature beta(-1.0);
    ProductPoint p{{0.0, 1.0}, {2.0}};
    PseudoPoint x = psi_inv(p, sig, beta);
    CHECK(x.x[0] == doctest::Approx(0.0));
    CHECK(x.x[1] == doctest::Approx(std::sqrt(5.0)));
    CHECK(x.x[2] == doctest::Approx(2.0));
    CHECK(on_manifold(x, 1e-6));

    ProductPoint off{{0.0, 1.5}, {2.0}};
    CHECK_THROWS_AS(psi_inv(off, sig, beta), std::invalid_argument);

    Signature big(4, 3);
    Curvature b2(-2.5);
    Rng rng(11);
    for (int it = 0; it < 1000; ++it) {
        PseudoPoint y = psi_inv(random_product_point(rng, big, b2), big, b2);
        CHECK(on_manifold(y, 1e-6));
    }
}

TEST_CASE("psi round trips within 1e-9") {
    Signature sig(3, 2);
    Curvature beta(-1.7);
    Rng rng(21);
    for (int it = 0; it < 1000; ++it) {
        PseudoPoint x = random_manifold_point(rng, sig, beta);
        PseudoPoint back = psi_inv(psi(x), sig, beta);
        for (int i = 0; i < sig.ambient(); ++i) {
            CHECK(back.x[i] == doctest::Approx(x.x[i]).epsilon(0).scale(1).epsilon(1e-9));
        }
        ProductPoint pp = random_product_point(rng, sig, beta);
        ProductPoint pp2 = psi(psi_inv(pp, sig, beta));
        for (int i = 0; i < sig.time_dim(); ++i) {
            CHECK(pp2.sphere[i] == doctest::Approx(pp.sphere[i]).epsilon(1e-9));
        }
        for (int i = 0; i < sig.s; ++i) {
            CHECK(pp2.euclid[i] == doctest::Approx(pp.euclid[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("sph_log quarter circle and base case") {
    std::vector<double> b{1.0, 0.0}, p{0.0, 1.0};
    auto v = sph_log(b, p, 1.0);
    CHECK(v[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(M_PI / 2).epsilon(1e-12));

    auto zero = sph_log(b, b, 1.0);
    CHECK(zero[0] == doctest::Approx(0.0));
    CHECK(zero[1] == doctest::Approx(0.0));

    std::vector<double> anti{-1.0, 0.0};
    CHECK_THROWS_AS(sph_log(b, anti, 1.0), std::domain_error);
}

TEST_CASE("sph_exp quarter circle, zero vector, norm preservation") {
    std::vector<double> b{1.0, 0.0}, v{0.0, M_PI / 2};
    auto p = sph_exp(b, v, 1.0);
    CHECK(p[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> z{0.0, 0.0};
    auto fixed = sph_exp(b, z, 1.0);
    CHECK(fixed[0] == doctest::Approx(1.0));

    Rng rng(5);
    double radius = 2.3;
    for (int it = 0; it < 1000; ++it) {
        auto base = random_sphere_point(rng, 4, radius);
        // tangent: random vector minus its component along base
        std::vector<double> t(4);
        for (double& x : t) x = rng.gaussian();
        double d = 0;
        for (int i = 0; i < 4; ++i) d += t[i] * base[i];
        for (int i = 0; i < 4; ++i) t[i] -= d * base[i] / (radius * radius);
        auto out = sph_exp(base, t, radius);
        double n = 0;
        for (double x : out) n += x * x;
        CHECK(std::sqrt(n) == doctest::Approx(radius).epsilon(1e-9));
    }
}

TEST_CASE("sph_log/sph_exp round trip on random non-antipodal pairs") {
    Rng rng(13);
    double radius = 1.4;
    int checked = 0;
    for (int it = 0; it < 2000 && checked < 1000; ++it) {
        auto base = random_sphere_point(rng, 5, radius);
        auto p = random_sphere_point(rng, 5, radius);
        double c = 0;
        for (int i = 0; i < 5; ++i) c += base[i] * p[i];
        c /= radius * radius;
        if (c < -1.0 + 1e-3) continue; // skip near-antipodal draws
        auto v = sph_log(base, p, radius);
        auto back = sph_exp(base, v, radius);
        for (int i = 0; i < 5; ++i) CHECK(back[i] == doctest::Approx(p[i]).epsilon(1e-6));
        ++checked;
    }
    CHECK(checked == 1000);
}

TEST_CASE("diffeo log/exp composition examples") {
    Signature sig(1, 1);
    Curvature beta(-1.0);
    PseudoPoint o = origin(sig, beta);

    // log at the origin of the origin is zero
    TangentVector zero = diffeo_log_o(o);
    for (double x : zero.coords) CHECK(x == doctest::Approx(0.0));

    // hand-composed case
    PseudoPoint y = psi_inv(ProductPoint{{0.0, 1.0}, {2.0}}, sig, beta);
    TangentVector xi = diffeo_log_o(y);
    CHECK(xi.coords[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(xi.coords[1] == doctest::Approx(M_PI / 2).epsilon(1e-12));
    CHECK(xi.coords[2] == doctest::Approx(2.0).epsilon(1e-12));

    PseudoPoint back = diffeo_exp_o(xi, sig, beta);
    CHECK(back.x[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(back.x[1] == doctest::Approx(std::sqrt(5.0)).epsilon(1e-9));
    CHECK(back.x[2] == doctest::Approx(2.0).epsilon(1e-9));

    // exp of zero tangent is the origin
    TangentVector z0{std::vector<double>(sig.ambient(), 0.0)};
    PseudoPoint oo = diffeo_exp_o(z0, sig, beta);
    for (int i = 0; i < sig.ambient(); ++i) CHECK(oo.x[i] == doctest::Approx(o.x[i]));
}

TEST_CASE("diffeo exp/log inversion and membership, randomized") {
    Signature sig(4, 3);
    Curvature beta(-1.0);
    Rng rng(31);
    for (int it = 0; it < 1000; ++it) {
        PseudoPoint y = random_manifold_point(rng, sig, beta);
        // respect the cut-locus margin
        double c = psi(y).sphere[0] / beta.radius();
        if (c < -1.0 + 1e-3) continue;
        TangentVector xi = diffeo_log_o(y);
        PseudoPoint back = diffeo_exp_o(xi, sig, beta);
        for (int i = 0; i < sig.ambient(); ++i) {
            CHECK(back.x[i] == doctest::Approx(y.x[i]).epsilon(1e-6));
        }
        CHECK(on_manifold(back, 1e-6));
    }
    // membership of random exponentials
    for (int it = 0; it < 1000; ++it) {
        std::vector<double> coords(sig.ambient());
        coords[0] = 0.0;
        for (int i = 1; i < sig.ambient(); ++i) coords[i] = rng.uniform(-1.5, 1.5);
        PseudoPoint p = diffeo_exp_o(TangentVector{coords}, sig, beta);
        CHECK(on_manifold(p, 1e-6));
    }
}

TEST_CASE("project_to_q rescale, idempotence, membership") {
    Signature sig(1, 1);
    Curvature beta(-1.0);
    std::vector<double> x{2.0, 0.0, 0.0};
    PseudoPoint p = project_to_q(x, sig, beta);
    CHECK(p.x[0] == doctest::Approx(1.0));
    CHECK(p.x[1] == doctest::Approx(0.0));
    CHECK(p.x[2] == doctest::Approx(0.0));

    Signature sig2(3, 2);
    Rng rng(41);
    for (int it = 0; it < 1000; ++it) {
        std::vector<double> raw(sig2.ambient());
        for (double& e : raw) e = rng.uniform(-2, 2);
        // keep the time block away from zero
        raw[0] += raw[0] >= 0 ? 0.5 : -0.5;
        PseudoPoint q = project_to_q(raw, sig2, beta);
        CHECK(on_manifold(q, 1e-6));
        PseudoPoint q2 = project_to_q(q.x, sig2, beta);
        for (int i = 0; i < sig2.ambient(); ++i) {
            CHECK(std::fabs(q2.x[i] - q.x[i]) <= 1e-12 * std::max(1.0, std::fabs(q.x[i])));
        }
    }

    std::vector<double> zero_time{0.0, 0.0, 1.0};
    CHECK_THROWS_AS(project_to_q(zero_time, sig, beta), std::domain_error);
}

TEST_CASE("ps_norm of tangent vectors") {
    TangentVector v{{0.0, 3.0, 4.0}};
    CHECK(ps_norm(v) == doctest::Approx(5.0));
    TangentVector z{{0.0, 0.0, 0.0}};
    CHECK(ps_norm(z) == doctest::Approx(0.0));
    Rng rng(3);
    for (int it = 0; it < 100; ++it) {
        TangentVector w{{rng.gaussian(), rng.gaussian(), rng.gaussian()}};
        double a = rng.uniform(-3, 3);
        TangentVector aw = w;
        for (double& x : aw.coords) x *= a;
        CHECK(ps_norm(aw) == doctest::Approx(std::fabs(a) * ps_norm(w)).epsilon(1e-12));
    }
}

TEST_CASE("origin examples") {
    Signature sig(9, 9);
    Curvature beta(-1.0);
    PseudoPoint o = origin(sig, beta);
    CHECK(static_cast<int>(o.x.size()) == 19);
    int nonzero = 0;
    for (double x : o.x) {
        if (x != 0.0) ++nonzero;
    }
    CHECK(nonzero == 1);
    CHECK(o.x[0] == doctest::Approx(1.0));
    CHECK(ps_inner(o.x, o.x, sig) == doctest::Approx(beta.beta).epsilon(1e-15));
}
