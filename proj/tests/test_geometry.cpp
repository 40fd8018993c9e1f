#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "relcap/geometry.hpp"

#include <random>

using namespace relcap;
using Box = BoundingBox<double>;

namespace {

// Independent interval-overlap IoU: per-axis overlap lengths, written
// against raw coordinates rather than the box helpers.
double oracle_iou(const Box& a, const Box& b) {
    auto overlap = [](double lo1, double hi1, double lo2, double hi2) {
        return std::max(0.0, std::min(hi1, hi2) - std::max(lo1, lo2));
    };
    double ox = overlap(a.cx - a.width / 2, a.cx + a.width / 2, b.cx - b.width / 2,
                        b.cx + b.width / 2);
    double oy = overlap(a.cy - a.height / 2, a.cy + a.height / 2, b.cy - b.height / 2,
                        b.cy + b.height / 2);
    double inter = ox * oy;
    double uni = a.width * a.height + b.width * b.height - inter;
    return inter <= 0.0 ? 0.0 : inter / uni;
}

Box random_box(Rng& rng) {
    std::uniform_real_distribution<double> center(0.05, 0.95);
    std::uniform_real_distribution<double> size(0.01, 0.6);
    return Box{center(rng), center(rng), size(rng), size(rng)};
}

} // namespace

TEST_CASE("spatial feature of an identical pair") {
    Box b{0.5, 0.5, 0.2, 0.4};
    auto f = spatial_feature(b, b);
    CHECK(f[0] == doctest::Approx(0.0));
    CHECK(f[1] == doctest::Approx(0.0));
    CHECK(f[2] == doctest::Approx(1.0));
    CHECK(f[3] == doctest::Approx(1.0));
    CHECK(f[4] == doctest::Approx(0.5));
    CHECK(f[5] == doctest::Approx(0.5));
}

TEST_CASE("spatial feature of abutting boxes") {
    Box bi{0.2, 0.2, 0.2, 0.2};
    Box bj{0.4, 0.2, 0.2, 0.2};
    auto f = spatial_feature(bi, bj);
    CHECK(f[0] == doctest::Approx(1.0));
    CHECK(f[1] == doctest::Approx(0.0));
    CHECK(f[2] == doctest::Approx(1.0));
    CHECK(f[3] == doctest::Approx(0.0)); // boxes abut, zero overlap
    CHECK(f[4] == doctest::Approx(1.0));
    CHECK(f[5] == doctest::Approx(1.0));
}

TEST_CASE("degenerate box rejected") {
    Box bad{0.5, 0.5, 0.0, 0.2};
    Box ok{0.5, 0.5, 0.1, 0.2};
    CHECK_THROWS_AS(spatial_feature(bad, ok), ValidationError);
    CHECK_THROWS_AS(spatial_feature(ok, bad), ValidationError);
}

TEST_CASE("IoU matches interval-overlap oracle on random pairs") {
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        Box a = random_box(rng), b = random_box(rng);
        auto f = spatial_feature(a, b);
        CHECK(std::abs(f[3] - oracle_iou(a, b)) < 1e-12);
    }
}

TEST_CASE("translation invariance") {
    Rng rng(7);
    std::uniform_real_distribution<double> shift(-3.0, 3.0);
    for (int i = 0; i < 200; ++i) {
        Box a = random_box(rng), b = random_box(rng);
        double t = shift(rng);
        Box a2{a.cx + t, a.cy + t, a.width, a.height};
        Box b2{b.cx + t, b.cy + t, b.width, b.height};
        auto f = spatial_feature(a, b), g = spatial_feature(a2, b2);
        for (int k = 0; k < 6; ++k) CHECK(f[k] == doctest::Approx(g[k]).epsilon(1e-11));
    }
}

TEST_CASE("uniform scale invariance") {
    Rng rng(8);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    for (int i = 0; i < 200; ++i) {
        Box a = random_box(rng), b = random_box(rng);
        double s = scale(rng);
        Box a2{a.cx * s, a.cy * s, a.width * s, a.height * s};
        Box b2{b.cx * s, b.cy * s, b.width * s, b.height * s};
        auto f = spatial_feature(a, b), g = spatial_feature(a2, b2);
        for (int k = 0; k < 6; ++k) CHECK(f[k] == doctest::Approx(g[k]).epsilon(1e-11));
    }
}

TEST_CASE("swap relation") {
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        Box a = random_box(rng), b = random_box(rng);
        auto f = spatial_feature(a, b), g = spatial_feature(b, a);
        CHECK(f[3] == doctest::Approx(g[3]).epsilon(1e-12)); // IoU symmetric
        CHECK(f[4] == doctest::Approx(g[5]).epsilon(1e-12)); // aspects swap
        CHECK(f[5] == doctest::Approx(g[4]).epsilon(1e-12));
    }
}

TEST_CASE("union box covers and reduces to the box itself") {
    Box a{0.3, 0.3, 0.2, 0.2};
    Box u = union_box(a, a);
    CHECK(u.cx == doctest::Approx(a.cx));
    CHECK(u.width == doctest::Approx(a.width));

    Box b{0.7, 0.5, 0.2, 0.4};
    Box ab = union_box(a, b);
    CHECK(ab.left() <= std::min(a.left(), b.left()) + 1e-15);
    CHECK(ab.right() >= std::max(a.right(), b.right()) - 1e-15);
    CHECK(iou(ab, a) > 0.0);
    CHECK(iou(ab, b) > 0.0);
}
