#include "relcap/graph.hpp"

#include <map>
#include <set>

namespace relcap {

std::size_t SceneGraph::undirected_edge_count() const {
    std::set<std::pair<int, int>> seen;
    for (const auto& e : edges) seen.insert({std::min(e.i, e.j), std::max(e.i, e.j)});
    return seen.size();
}

Matrix<double> SceneGraph::feature_matrix() const {
    if (nodes.empty()) throw ValidationError("graph: no nodes");
    Matrix<double> m(Eigen::Index(nodes.size()), nodes.front().feature.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].feature.size() != m.cols())
            throw ValidationError("graph: node feature dims disagree");
        m.row(Eigen::Index(i)) = nodes[i].feature.transpose();
    }
    return m;
}

void SceneGraph::append_type_embedding() {
    if (type_embedding_appended) return;
    for (auto& n : nodes) {
        Vector<double> ext(n.feature.size() + 3);
        ext.head(n.feature.size()) = n.feature;
        ext.tail(3).setZero();
        ext(n.feature.size() + Eigen::Index(n.level)) = 1.0;
        n.feature = std::move(ext);
    }
    type_embedding_appended = true;
}

std::vector<int> SceneGraph::object_rows(int image_index) const {
    std::map<int, int> by_region;
    for (const auto& n : nodes)
        if (n.level == Level::object && n.image_index == image_index)
            by_region[n.region_index] = n.id;
    std::vector<int> rows;
    rows.reserve(by_region.size());
    for (const auto& [r, id] : by_region) rows.push_back(id);
    return rows;
}

int SceneGraph::image_row(int image_index) const {
    for (const auto& n : nodes)
        if (n.level == Level::image && n.image_index == image_index) return n.id;
    return -1;
}

Matrix<double> renormalize(const Matrix<double>& raw) {
    if (raw.rows() != raw.cols())
        throw ValidationError("renormalize: adjacency must be square, got " +
                              shape_str(raw.rows(), raw.cols()));
    if ((raw.array() < 0.0).any())
        throw ValidationError("renormalize: adjacency must be non-negative");
    const Eigen::Index n = raw.rows();
    Matrix<double> with_loops = raw + Matrix<double>::Identity(n, n);
    Vector<double> inv_sqrt_deg = with_loops.rowwise().sum().array().rsqrt();
    return inv_sqrt_deg.asDiagonal() * with_loops * inv_sqrt_deg.asDiagonal();
}

Adjacency adjacency_of(const SceneGraph& g) {
    const Eigen::Index n = Eigen::Index(g.nodes.size());
    Adjacency a;
    a.raw = Matrix<double>::Zero(n, n);
    for (const auto& e : g.edges) {
        if (e.i == e.j) throw ValidationError("graph: self-edge in edge list");
        a.raw(e.i, e.j) = 1.0;
        a.raw(e.j, e.i) = 1.0;
    }
    a.renormalized = renormalize(a.raw);
    return a;
}

namespace {

void add_undirected(SceneGraph& g, int i, int j) {
    g.edges.push_back({i, j, std::nullopt});
    g.edges.push_back({j, i, std::nullopt});
}

void add_annotated_pairs(SceneGraph& g, const std::vector<int>& node_ids,
                         const SceneRecord& scene, const EdgeAnnotator& annotate) {
    for (std::size_t a = 0; a < node_ids.size(); ++a) {
        for (std::size_t b = 0; b < node_ids.size(); ++b) {
            if (a == b) continue;
            SceneGraph::Edge e{node_ids[a], node_ids[b], std::nullopt};
            if (annotate) e.annotation = annotate(scene, int(a), int(b));
            g.edges.push_back(std::move(e));
        }
    }
}

Vector<double> pooled_feature(const SceneRecord& scene) {
    Vector<double> mean = Vector<double>::Zero(scene.regions.front().feature.size());
    for (const auto& r : scene.regions) mean += r.feature;
    return mean / double(scene.regions.size());
}

} // namespace

SceneGraph build_object_graph(const SceneRecord& scene, const EdgeAnnotator& annotate,
                              const GraphBuildOptions& opts) {
    if (scene.regions.empty())
        throw ValidationError("build_object_graph: scene " + scene.image_id + " has no regions");
    if (int(scene.regions.size()) > opts.k_max)
        throw ValidationError("build_object_graph: scene " + scene.image_id + " has " +
                              std::to_string(scene.regions.size()) + " regions, k_max=" +
                              std::to_string(opts.k_max));
    SceneGraph g;
    g.built_level = "object";
    std::vector<int> ids;
    for (std::size_t r = 0; r < scene.regions.size(); ++r) {
        g.nodes.push_back({int(g.nodes.size()), SceneGraph::Level::object,
                           scene.regions[r].feature, 0, int(r)});
        ids.push_back(g.nodes.back().id);
    }
    add_annotated_pairs(g, ids, scene, annotate);
    return g;
}

SceneGraph build_image_graph(const std::vector<SceneRecord>& context) {
    if (context.empty()) throw ValidationError("build_image_graph: empty context");
    SceneGraph g;
    g.built_level = "image";
    for (std::size_t i = 0; i < context.size(); ++i)
        g.nodes.push_back({int(g.nodes.size()), SceneGraph::Level::image,
                           pooled_feature(context[i]), int(i), -1});
    for (std::size_t a = 0; a < context.size(); ++a)
        for (std::size_t b = a + 1; b < context.size(); ++b)
            add_undirected(g, int(a), int(b));
    return g;
}

SceneGraph build_hierarchical_graph(const std::vector<SceneRecord>& context,
                                    const EdgeAnnotator& annotate,
                                    const GraphBuildOptions& opts) {
    if (context.empty()) throw ValidationError("build_hierarchical_graph: empty context");
    if (opts.hierarchical_mode != "structured" && opts.hierarchical_mode != "literal")
        throw ValidationError("build_hierarchical_graph: unknown mode '" +
                              opts.hierarchical_mode + "'");
    SceneGraph g;
    g.built_level = "hierarchical";

    std::vector<std::vector<int>> objects_of(context.size());
    for (std::size_t i = 0; i < context.size(); ++i) {
        const auto& scene = context[i];
        if (scene.regions.empty())
            throw ValidationError("build_hierarchical_graph: scene " + scene.image_id +
                                  " has no regions");
        for (std::size_t r = 0; r < scene.regions.size(); ++r) {
            g.nodes.push_back({int(g.nodes.size()), SceneGraph::Level::object,
                               scene.regions[r].feature, int(i), int(r)});
            objects_of[i].push_back(g.nodes.back().id);
        }
    }
    std::vector<int> image_ids(context.size());
    for (std::size_t i = 0; i < context.size(); ++i) {
        g.nodes.push_back({int(g.nodes.size()), SceneGraph::Level::image,
                           pooled_feature(context[i]), int(i), -1});
        image_ids[i] = g.nodes.back().id;
    }

    for (std::size_t i = 0; i < context.size(); ++i)
        add_annotated_pairs(g, objects_of[i], context[i], annotate);

    if (opts.hierarchical_mode == "structured") {
        for (std::size_t i = 0; i < context.size(); ++i)
            for (int obj : objects_of[i]) add_undirected(g, image_ids[i], obj);
        for (std::size_t a = 0; a < context.size(); ++a)
            for (std::size_t b = a + 1; b < context.size(); ++b)
                add_undirected(g, image_ids[a], image_ids[b]);
    } else {
        // Complete graph over every node; intra-image object pairs already
        // carry annotations, remaining pairs stay plain.
        std::set<std::pair<int, int>> present;
        for (const auto& e : g.edges) present.insert({e.i, e.j});
        const int n = int(g.nodes.size());
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                if (!present.count({a, b})) add_undirected(g, a, b);
    }

    if (opts.explicit_scene_nodes) {
        std::map<std::string, std::vector<int>> images_by_super;
        for (std::size_t i = 0; i < context.size(); ++i)
            images_by_super[context[i].superclass].push_back(int(i));
        for (const auto& [super, images] : images_by_super) {
            Vector<double> mean =
                Vector<double>::Zero(g.nodes[std::size_t(image_ids[0])].feature.size());
            for (int i : images) mean += g.nodes[std::size_t(image_ids[std::size_t(i)])].feature;
            mean /= double(images.size());
            g.nodes.push_back({int(g.nodes.size()), SceneGraph::Level::scene, mean, -1, -1});
            const int scene_id = g.nodes.back().id;
            for (int i : images) add_undirected(g, scene_id, image_ids[std::size_t(i)]);
        }
    }
    return g;
}

} // namespace relcap
