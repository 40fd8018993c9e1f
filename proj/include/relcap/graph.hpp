#pragma once

#include "relcap/corpus.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace relcap {

/// Per-ordered-pair edge annotation: discretized spatial scores plus the
/// predicted semantic relation (argmax id, and optionally the full
/// distribution for soft relation embeddings).
struct EdgeAnnotation {
    Vector<double> spatial_scores;
    int relation_class = -1;
    Vector<double> relation_distribution; // empty unless soft embeddings are on
};

/// Produces the annotation of the ordered region pair (i -> j) of one
/// scene; receives the whole record so it can pool over all regions.
using EdgeAnnotator = std::function<EdgeAnnotation(const SceneRecord&, int, int)>;

/// Multi-level graph over object, image, and scene nodes. Edges are stored
/// as ordered pairs; an undirected link contributes two entries. Self
/// loops never appear in the edge list (renormalization adds them).
struct SceneGraph {
    enum class Level { object, image, scene };

    struct Node {
        int id = 0;
        Level level = Level::object;
        Vector<double> feature;
        int image_index = -1;  // owning image within the context, -1 for scene nodes
        int region_index = -1; // object nodes: position in the image's region list
    };

    struct Edge {
        int i = 0;
        int j = 0;
        std::optional<EdgeAnnotation> annotation;
    };

    std::vector<Node> nodes;
    std::vector<Edge> edges;
    std::string built_level; // object | image | hierarchical
    bool type_embedding_appended = false;

    std::size_t undirected_edge_count() const;

    /// Node features stacked row-wise.
    Matrix<double> feature_matrix() const;

    /// Appends the 3-wide one-hot level indicator to every node feature.
    /// Idempotent: calling twice appends once.
    void append_type_embedding();

    /// Row indices of the object nodes of one image, in region order.
    std::vector<int> object_rows(int image_index) const;
    /// Row index of an image node, -1 when the graph has none.
    int image_row(int image_index) const;
};

struct Adjacency {
    Matrix<double> raw;          // symmetric 0/1, zero diagonal
    Matrix<double> renormalized; // D^{-1/2} (A+I) D^{-1/2}
};

/// Symmetric renormalization with self-loops; isolated nodes end up with
/// degree one and a unit diagonal entry.
Matrix<double> renormalize(const Matrix<double>& raw);

Adjacency adjacency_of(const SceneGraph& g);

struct GraphBuildOptions {
    int k_max = 36;
    std::string hierarchical_mode = "structured"; // structured | literal
    bool explicit_scene_nodes = false;
};

/// Complete graph over the regions of one scene; every ordered pair is
/// annotated when an annotator is supplied.
SceneGraph build_object_graph(const SceneRecord& scene, const EdgeAnnotator& annotate,
                              const GraphBuildOptions& opts = {});

/// Complete graph over the images of one context; node features are the
/// mean-pooled region features of each image.
SceneGraph build_image_graph(const std::vector<SceneRecord>& context);

/// Context-level graph over image nodes and their object nodes.
/// structured: objects complete within each image, each image linked to
/// its own objects, images complete within the context. literal: one
/// complete graph over all nodes; object pairs within the same image keep
/// their annotations, every other pair is unannotated.
SceneGraph build_hierarchical_graph(const std::vector<SceneRecord>& context,
                                    const EdgeAnnotator& annotate,
                                    const GraphBuildOptions& opts = {});

} // namespace relcap
