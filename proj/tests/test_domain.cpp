#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "nimbus/geometry.hpp"
#include "nimbus/mass_grid.hpp"
#include "nimbus/quadrature.hpp"
#include "test_helpers.hpp"

using namespace nimbus;
using Catch::Approx;

TEST_CASE("box domain has unit diameter and full lattice") {
    Domain d = build_domain({Shape::box, 4});
    REQUIRE(d.size() == 64);
    double maxdist = 0.0;
    for (std::size_t a = 0; a < d.size(); ++a)
        for (std::size_t b = 0; b < d.size(); ++b)
            maxdist = std::max(maxdist, norm(d.centers[a] - d.centers[b]));
    REQUIRE(maxdist <= 1.0);
    for (const Vec3& c : d.centers) REQUIRE(d.inside(c));
}

TEST_CASE("ball domain keeps centers strictly inside") {
    Domain d = build_domain({Shape::ball, 8});
    for (const Vec3& c : d.centers) REQUIRE(norm(c) < 0.5);
    // boundary flags mark exactly the cells with a missing 6-neighbor
    for (std::size_t c = 0; c < d.size(); ++c) {
        bool missing = false;
        for (int a = 0; a < 3; ++a)
            for (int s = -1; s <= 1; s += 2)
                if (d.neighbor(static_cast<int>(c), a, s) < 0) missing = true;
        REQUIRE(d.boundary[c] == missing);
    }
}

TEST_CASE("zero resolution is rejected") {
    REQUIRE_THROWS_AS(build_domain({Shape::box, 0}), Error);
}

TEST_CASE("exit distance: ball center is the radius") {
    Domain d = build_domain({Shape::ball, 4});
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        Vec3 q = test::random_unit(rng);
        REQUIRE(exit_distance(d, Vec3{0, 0, 0}, q) == Approx(-0.5).margin(1e-14));
    }
}

TEST_CASE("exit distance: degenerate and full-chord rays at the boundary") {
    Domain d = build_domain({Shape::ball, 4});
    const Vec3 x0{0.5, 0.0, 0.0};
    // backward ray leaves immediately when q points inward
    REQUIRE(exit_distance(d, x0, Vec3{-1, 0, 0}) == Approx(0.0).margin(1e-14));
    // and spans the diameter when q points outward along the normal
    REQUIRE(exit_distance(d, x0, Vec3{1, 0, 0}) == Approx(-1.0).margin(1e-14));
}

TEST_CASE("exit distance matches the bisection oracle") {
    Rng rng(11);
    for (Shape s : {Shape::ball, Shape::box}) {
        Domain d = build_domain({s, 4});
        // axis-diagonal from the center
        Vec3 diag = Vec3{1, 1, 1} / std::sqrt(3.0);
        double a = exit_distance(d, Vec3{0, 0, 0}, diag);
        double ref = test::exit_distance_bisection(d, Vec3{0, 0, 0}, diag);
        REQUIRE(a == Approx(ref).margin(1e-11));
        for (int i = 0; i < 50; ++i) {
            Vec3 x = test::random_point_inside(d, rng, 0.9);
            Vec3 q = test::random_unit(rng);
            a = exit_distance(d, x, q);
            ref = test::exit_distance_bisection(d, x, q);
            REQUIRE(a == Approx(ref).margin(1e-11));
            REQUIRE(std::abs(a) <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("backward ray segment stays inside a convex domain") {
    Rng rng(13);
    for (Shape s : {Shape::ball, Shape::box}) {
        Domain d = build_domain({s, 4});
        for (int i = 0; i < 30; ++i) {
            Vec3 x = test::random_point_inside(d, rng, 0.9);
            Vec3 q = test::random_unit(rng);
            const double a0 = exit_distance(d, x, q);
            for (int k = 1; k < 40; ++k) {
                const double a = a0 * (1.0 - k / 40.0) - 1e-9;
                if (a <= a0) continue;
                REQUIRE(d.inside(x + q * a));
            }
        }
    }
}

TEST_CASE("exit distance is Lipschitz in the base point away from tangency") {
    Domain d = build_domain({Shape::ball, 4});
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        Vec3 x = test::random_point_inside(d, rng, 0.9);
        Vec3 q = test::random_unit(rng);
        Vec3 dx = test::random_unit(rng) * 1e-5;
        if (!d.inside(x + dx)) continue;
        const double a1 = exit_distance(d, x, q);
        const double a2 = exit_distance(d, x + dx, q);
        REQUIRE(std::abs(a1 - a2) <= 10.0 * norm(dx));
    }
}

TEST_CASE("order-1 angular quadrature is the six-axis set") {
    AngularQuadrature q = angular_quadrature(1);
    REQUIRE(q.size() == 6);
    for (double w : q.weights) REQUIRE(w == Approx(kFourPi / 6.0));
}

TEST_CASE("angular quadrature moments") {
    Rng rng(23);
    for (int order : {1, 2, 3, 4}) {
        AngularQuadrature q = angular_quadrature(order);
        REQUIRE(q.total_weight() == Approx(kFourPi).epsilon(1e-12));
        Vec3 first{};
        for (std::size_t j = 0; j < q.size(); ++j) {
            REQUIRE(norm(q.nodes[j]) == Approx(1.0).epsilon(1e-12));
            first += q.nodes[j] * q.weights[j];
        }
        REQUIRE(norm(first) < 1e-10);
        for (int i = 0; i < 5; ++i) {
            Vec3 e = test::random_unit(rng);
            double second = 0.0;
            for (std::size_t j = 0; j < q.size(); ++j) {
                const double c = dot(q.nodes[j], e);
                second += q.weights[j] * c * c;
            }
            REQUIRE(second == Approx(kFourPi / 3.0).epsilon(1e-10));
        }
        // antipodal symmetry: every node has its negative in the set
        for (std::size_t j = 0; j < q.size(); ++j) {
            bool found = false;
            for (std::size_t k = 0; k < q.size(); ++k)
                if (norm(q.nodes[j] + q.nodes[k]) < 1e-12) found = true;
            REQUIRE(found);
        }
    }
}

TEST_CASE("boundary samples carry the strict inward cone") {
    Domain d = build_domain({Shape::ball, 6});
    AngularQuadrature q = angular_quadrature(2);
    auto samples = boundary_samples(d, q.nodes);
    REQUIRE_FALSE(samples.empty());
    for (const auto& s : samples) {
        Vec3 nrm = Vec3{0, 0, 0} - s.inward_normal;
        for (int j : s.inward) {
            REQUIRE(dot(q.nodes[static_cast<std::size_t>(j)], nrm) < 0.0);
            // a small inward step stays inside
            REQUIRE(d.inside(s.point + q.nodes[static_cast<std::size_t>(j)] * 1e-6));
        }
        // directions not listed either leave the domain or graze it
        for (std::size_t j = 0; j < q.size(); ++j) {
            const bool listed = std::find(s.inward.begin(), s.inward.end(),
                                          static_cast<int>(j)) != s.inward.end();
            if (!listed) REQUIRE(dot(q.nodes[j], nrm) >= 0.0);
        }
    }

    Domain box = build_domain({Shape::box, 6});
    auto bs = boundary_samples(box, q.nodes);
    // a z-face sample admits exactly half of the order-2 product set (no node
    // is tangential to that face); strictly tangential directions q.n = 0 are
    // excluded from the cone
    bool saw_face = false;
    for (const auto& s : bs) {
        int on_faces = 0;
        for (int a = 0; a < 3; ++a)
            if (std::abs(std::abs(s.point[a]) - 0.5 * box.extent) < 1e-12) ++on_faces;
        const bool z_face =
            on_faces == 1 && std::abs(std::abs(s.point.z) - 0.5 * box.extent) < 1e-12;
        if (z_face) {
            saw_face = true;
            REQUIRE(s.inward.size() == q.size() / 2);
        }
        Vec3 nrm = Vec3{0, 0, 0} - s.inward_normal;
        for (int j : s.inward)
            REQUIRE(dot(q.nodes[static_cast<std::size_t>(j)], nrm) < 0.0);
    }
    REQUIRE(saw_face);
}

TEST_CASE("mass grid invariants and rejection cases") {
    MassGridConfig cfg;
    cfg.bins = 24;
    cfg.m_min = 1e-3;
    cfg.m_max = 10.0;
    cfg.m_a = 0.01;
    cfg.m_A = 0.05;
    cfg.M_prime = 0.2;
    cfg.M1_bar = 3.0;
    cfg.M_cut = 1.0;
    MassGrid g = make_mass_grid(cfg);
    REQUIRE(g.bins() == 24);
    REQUIRE(g.edges[1] <= 0.5 * g.m_a);
    for (std::size_t i = 0; i < g.bins(); ++i) REQUIRE(g.widths[i] > 0.0);
    REQUIRE(g.edges.back() >= g.M1_bar);
    REQUIRE(g.centers.back() >= g.M_cut);

    auto bad = cfg;
    bad.m_min = 0.02;  // no empty bin below m_a/2
    REQUIRE_THROWS_AS(make_mass_grid(bad), Error);
    bad = cfg;
    bad.M_cut = 0.005;  // cutoff below m_a
    REQUIRE_THROWS_AS(make_mass_grid(bad), Error);
    bad = cfg;
    bad.bins = 1;
    REQUIRE_THROWS_AS(make_mass_grid(bad), Error);
}
