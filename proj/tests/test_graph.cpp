#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "relcap/graph.hpp"

#include <Eigen/Eigenvalues>

#include <random>
#include <set>

using namespace relcap;
using Mat = Matrix<double>;
using Vec = Vector<double>;

namespace {

SceneRecord make_scene(int k, int dv, Rng& rng, const std::string& id = "img") {
    std::uniform_real_distribution<double> c(0.2, 0.8), s(0.05, 0.2), f(-1, 1);
    SceneRecord rec;
    rec.image_id = id;
    rec.superclass = "indoor";
    rec.subclass = "ctx0";
    for (int i = 0; i < k; ++i) {
        Region r;
        r.box = {c(rng), c(rng), s(rng), s(rng)};
        r.feature.resize(dv);
        for (int j = 0; j < dv; ++j) r.feature(j) = f(rng);
        r.class_id = i;
        rec.regions.push_back(std::move(r));
    }
    rec.captions.push_back("a cat above a dog");
    return rec;
}

EdgeAnnotation counting_annotation(const SceneRecord& scene, int i, int j) {
    const Region& a = scene.regions[std::size_t(i)];
    const Region& b = scene.regions[std::size_t(j)];
    EdgeAnnotation ann;
    ann.spatial_scores = Vec::Constant(4, 0.25);
    ann.relation_class = a.class_id < b.class_id ? 0 : 1;
    return ann;
}

// Scalar-loop renormalization oracle, independent of the Eigen expression.
Mat oracle_renormalize(const Mat& a) {
    const int n = int(a.rows());
    Mat loops = a;
    for (int i = 0; i < n; ++i) loops(i, i) += 1.0;
    std::vector<double> deg(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) deg[std::size_t(i)] += loops(i, j);
    Mat out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out(i, j) = loops(i, j) / std::sqrt(deg[std::size_t(i)] * deg[std::size_t(j)]);
    return out;
}

} // namespace

TEST_CASE("object graph structure") {
    Rng rng(1);
    GraphBuildOptions opts;

    SUBCASE("single region") {
        auto g = build_object_graph(make_scene(1, 8, rng), counting_annotation, opts);
        CHECK(g.nodes.size() == 1);
        CHECK(g.edges.empty());
    }
    SUBCASE("three regions form a complete graph") {
        auto g = build_object_graph(make_scene(3, 8, rng), counting_annotation, opts);
        CHECK(g.nodes.size() == 3);
        CHECK(g.undirected_edge_count() == 3);
        CHECK(g.edges.size() == 6); // ordered annotations
        for (const auto& e : g.edges) {
            REQUIRE(e.annotation.has_value());
            CHECK(e.annotation->spatial_scores.size() == 4);
            CHECK(e.annotation->relation_class >= 0);
        }
    }
    SUBCASE("36 regions give 630 undirected edges") {
        auto g = build_object_graph(make_scene(36, 4, rng), counting_annotation, opts);
        CHECK(g.undirected_edge_count() == 630);
    }
    SUBCASE("zero regions rejected") {
        SceneRecord empty;
        empty.image_id = "none";
        CHECK_THROWS_AS(build_object_graph(empty, counting_annotation, opts), ValidationError);
    }
}

TEST_CASE("image graph") {
    Rng rng(2);
    SUBCASE("single image") {
        auto g = build_image_graph({make_scene(3, 8, rng)});
        CHECK(g.nodes.size() == 1);
        CHECK(g.edges.empty());
        CHECK(g.nodes[0].level == SceneGraph::Level::image);
    }
    SUBCASE("five images complete") {
        std::vector<SceneRecord> ctx;
        for (int i = 0; i < 5; ++i) ctx.push_back(make_scene(2, 8, rng));
        auto g = build_image_graph(ctx);
        CHECK(g.nodes.size() == 5);
        CHECK(g.undirected_edge_count() == 10);
    }
    SUBCASE("pooled feature equals the hand mean") {
        auto scene = make_scene(4, 8, rng);
        auto g = build_image_graph({scene});
        Vec mean = Vec::Zero(8);
        for (const auto& r : scene.regions) mean += r.feature;
        mean /= 4.0;
        CHECK((g.nodes[0].feature - mean).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("hierarchical graph") {
    Rng rng(3);
    GraphBuildOptions opts;

    SUBCASE("one image, two objects, structured") {
        auto g = build_hierarchical_graph({make_scene(2, 8, rng)}, counting_annotation, opts);
        CHECK(g.nodes.size() == 3);
        CHECK(g.undirected_edge_count() == 3); // obj-obj, img-obj1, img-obj2
    }
    SUBCASE("two images x two objects, literal") {
        GraphBuildOptions lit = opts;
        lit.hierarchical_mode = "literal";
        std::vector<SceneRecord> ctx = {make_scene(2, 8, rng), make_scene(2, 8, rng)};
        auto g = build_hierarchical_graph(ctx, counting_annotation, lit);
        CHECK(g.nodes.size() == 6);
        CHECK(g.undirected_edge_count() == 15);
    }
    SUBCASE("structured edge count formula vs enumeration") {
        for (int rep = 0; rep < 10; ++rep) {
            std::uniform_int_distribution<int> n_img(1, 4), k(1, 5);
            std::vector<SceneRecord> ctx;
            int n = n_img(rng);
            std::size_t expect = std::size_t((n * (n - 1)) / 2);
            for (int i = 0; i < n; ++i) {
                int ki = k(rng);
                ctx.push_back(make_scene(ki, 6, rng));
                expect += std::size_t(ki * (ki - 1) / 2 + ki);
            }
            auto g = build_hierarchical_graph(ctx, counting_annotation, opts);
            CHECK(g.undirected_edge_count() == expect);

            // brute-force enumeration of distinct node pairs with a link
            std::set<std::pair<int, int>> links;
            for (const auto& e : g.edges)
                links.insert({std::min(e.i, e.j), std::max(e.i, e.j)});
            CHECK(links.size() == expect);
        }
    }
    SUBCASE("annotations absent on image edges") {
        std::vector<SceneRecord> ctx = {make_scene(2, 8, rng), make_scene(3, 8, rng)};
        auto g = build_hierarchical_graph(ctx, counting_annotation, opts);
        for (const auto& e : g.edges) {
            bool both_obj = g.nodes[std::size_t(e.i)].level == SceneGraph::Level::object &&
                            g.nodes[std::size_t(e.j)].level == SceneGraph::Level::object;
            CHECK(e.annotation.has_value() == both_obj);
        }
    }
    SUBCASE("explicit scene nodes link their images") {
        GraphBuildOptions sc = opts;
        sc.explicit_scene_nodes = true;
        std::vector<SceneRecord> ctx = {make_scene(2, 8, rng), make_scene(2, 8, rng)};
        auto g = build_hierarchical_graph(ctx, counting_annotation, sc);
        int scene_nodes = 0;
        for (const auto& n : g.nodes)
            if (n.level == SceneGraph::Level::scene) ++scene_nodes;
        CHECK(scene_nodes == 1); // shared superclass
        CHECK(g.undirected_edge_count() == 2 * (1 + 2) + 1 + 2);
    }
}

TEST_CASE("renormalization") {
    SUBCASE("isolated node") {
        Mat a = Mat::Zero(1, 1);
        Mat r = renormalize(a);
        CHECK(r(0, 0) == doctest::Approx(1.0));
    }
    SUBCASE("two-node complete graph") {
        Mat a(2, 2);
        a << 0, 1, 1, 0;
        Mat r = renormalize(a);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) CHECK(r(i, j) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("random graphs: oracle equality, symmetry, spectrum") {
        Rng rng(17);
        std::uniform_real_distribution<double> u(0, 1);
        for (int rep = 0; rep < 100; ++rep) {
            std::uniform_int_distribution<int> size(1, 12);
            int n = size(rng);
            Mat a = Mat::Zero(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (u(rng) < 0.4) a(i, j) = a(j, i) = 1.0;
            Mat r = renormalize(a);
            CHECK((r - oracle_renormalize(a)).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((r - r.transpose()).cwiseAbs().maxCoeff() < 1e-12);
            Eigen::SelfAdjointEigenSolver<Mat> eig(r);
            CHECK(eig.eigenvalues().minCoeff() >= -1.0 - 1e-9);
            CHECK(eig.eigenvalues().maxCoeff() <= 1.0 + 1e-9);
        }
    }
    SUBCASE("permutation equivariance") {
        Rng rng(18);
        std::uniform_real_distribution<double> u(0, 1);
        for (int rep = 0; rep < 20; ++rep) {
            int n = 6;
            Mat a = Mat::Zero(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (u(rng) < 0.5) a(i, j) = a(j, i) = 1.0;
            std::vector<int> perm(static_cast<std::size_t>(n), 0);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            Mat p = Mat::Zero(n, n);
            for (int i = 0; i < n; ++i) p(perm[std::size_t(i)], i) = 1.0;
            Mat lhs = renormalize(Mat(p * a * p.transpose()));
            Mat rhs = p * renormalize(a) * p.transpose();
            CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SUBCASE("rejects negative entries and non-square input") {
        Mat neg = Mat::Constant(2, 2, -1.0);
        CHECK_THROWS_AS(renormalize(neg), ValidationError);
        CHECK_THROWS_AS(renormalize(Mat::Zero(2, 3)), ValidationError);
    }
}

TEST_CASE("type embedding append is idempotent") {
    Rng rng(4);
    auto g = build_hierarchical_graph({make_scene(2, 8, rng)}, counting_annotation, {});
    g.append_type_embedding();
    CHECK(g.nodes[0].feature.size() == 11);
    CHECK(g.nodes[0].feature(8) == 1.0); // object one-hot
    int img = g.image_row(0);
    CHECK(g.nodes[std::size_t(img)].feature(9) == 1.0); // image one-hot
    g.append_type_embedding();
    CHECK(g.nodes[0].feature.size() == 11);

    auto rows = g.object_rows(0);
    REQUIRE(rows.size() == 2);
    CHECK(g.nodes[std::size_t(rows[0])].region_index == 0);
    CHECK(g.nodes[std::size_t(rows[1])].region_index == 1);
}

TEST_CASE("adjacency of a graph with self-edge is rejected") {
    Rng rng(5);
    auto g = build_object_graph(make_scene(2, 4, rng), counting_annotation, {});
    g.edges.push_back({0, 0, std::nullopt});
    CHECK_THROWS_AS(adjacency_of(g), ValidationError);
}
