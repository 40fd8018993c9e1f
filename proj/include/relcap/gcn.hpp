#pragma once

#include "relcap/checkpoint.hpp"
#include "relcap/graph.hpp"
#include "relcap/ops.hpp"

#include <map>
#include <string>
#include <vector>

namespace relcap {

/// GCN output: refined node features plus the row bookkeeping needed to
/// hand one image's object rows to the decoder.
template <class S>
struct EncodedScene {
    Tensor<S> nodes; // n x d_model
    std::map<int, std::vector<int>> object_rows; // image index -> rows, region order
    std::map<int, int> image_rows;
};

/// Propagation stack H <- relu((A_hat .* G) H W) where G holds per-edge
/// sigmoid gates computed from the edge annotations (spatial scores plus
/// a learned relation-class embedding). Unannotated pairs and self-loops
/// gate at exactly one, so a graph without annotations reduces to the
/// plain renormalized propagation.
template <class S>
class GcnEncoder {
  public:
    GcnEncoder(int d_in, int d_model, int n_layers, int spatial_bins, int relation_classes,
               int d_rel, std::uint64_t seed, bool soft_relation_embedding = false)
        : d_in_(d_in), d_model_(d_model), spatial_bins_(spatial_bins),
          relation_classes_(relation_classes), d_rel_(d_rel),
          soft_relation_(soft_relation_embedding) {
        if (n_layers < 1) throw ValidationError("gcn: need at least one layer");
        Rng rng(seed);
        rel_embedding_ = Parameter<S>("gcn.rel_embedding", Matrix<S>());
        rel_embedding_.init_uniform(relation_classes, d_rel, S(1) / std::sqrt(S(d_rel)), rng);
        for (int l = 0; l < n_layers; ++l) {
            const int in = l == 0 ? d_in : d_model;
            Layer layer;
            layer.w = Parameter<S>("gcn.layer" + std::to_string(l) + ".w", Matrix<S>());
            layer.w.init_uniform(in, d_model, S(1) / std::sqrt(S(in)), rng);
            layer.gate_w =
                Parameter<S>("gcn.layer" + std::to_string(l) + ".gate_w", Matrix<S>());
            layer.gate_w.init_uniform(spatial_bins + d_rel, 1,
                                      S(1) / std::sqrt(S(spatial_bins + d_rel)), rng);
            layer.gate_b = Parameter<S>("gcn.layer" + std::to_string(l) + ".gate_b",
                                        Matrix<S>::Zero(1, 1));
            layers_.push_back(std::move(layer));
        }
    }

    int input_dim() const { return d_in_; }
    int output_dim() const { return d_model_; }
    int layer_count() const { return int(layers_.size()); }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> out{&rel_embedding_};
        for (auto& l : layers_) {
            out.push_back(&l.w);
            out.push_back(&l.gate_w);
            out.push_back(&l.gate_b);
        }
        return out;
    }

    EncodedScene<S> encode(Tape<S>& tape, const SceneGraph& graph, const Adjacency& adj,
                           bool gates_enabled = true) {
        Matrix<S> h0 = graph.feature_matrix().template cast<S>();
        if (h0.cols() != d_in_)
            throw ValidationError("gcn: node feature dim " + std::to_string(h0.cols()) +
                                  ", expected " + std::to_string(d_in_) +
                                  " (type embedding included)");
        const Eigen::Index n = h0.rows();
        if (adj.renormalized.rows() != n)
            throw ValidationError("gcn: adjacency size " +
                                  shape_str(adj.renormalized.rows(), adj.renormalized.cols()) +
                                  " does not match " + std::to_string(n) + " nodes");

        // Static per-edge inputs, shared by every layer's gate.
        std::vector<const SceneGraph::Edge*> annotated;
        for (const auto& e : graph.edges)
            if (e.annotation) annotated.push_back(&e);
        std::vector<std::pair<Eigen::Index, Eigen::Index>> positions;
        std::vector<int> classes;
        Matrix<S> spatial(Eigen::Index(annotated.size()), spatial_bins_);
        Matrix<S> rel_dists(soft_relation_ ? Eigen::Index(annotated.size()) : 0,
                            relation_classes_);
        for (std::size_t k = 0; k < annotated.size(); ++k) {
            const auto& e = *annotated[k];
            const auto& ann = *e.annotation;
            if (ann.spatial_scores.size() != spatial_bins_)
                throw ValidationError("gcn: spatial score dim " +
                                      std::to_string(ann.spatial_scores.size()) + ", expected " +
                                      std::to_string(spatial_bins_));
            positions.emplace_back(e.i, e.j);
            classes.push_back(ann.relation_class);
            spatial.row(Eigen::Index(k)) = ann.spatial_scores.transpose().template cast<S>();
            if (soft_relation_) {
                if (ann.relation_distribution.size() != relation_classes_)
                    throw ValidationError("gcn: relation distribution missing for soft mode");
                rel_dists.row(Eigen::Index(k)) =
                    ann.relation_distribution.transpose().template cast<S>();
            }
        }

        Tensor<S> annot;
        const bool gated = gates_enabled && !positions.empty();
        if (gated) {
            Tensor<S> rel_part =
                soft_relation_
                    ? ops::matmul(tape.constant(rel_dists), tape.param(rel_embedding_))
                    : ops::embedding_lookup(tape.param(rel_embedding_), classes);
            annot = ops::concat<S>({tape.constant(spatial), rel_part}, ops::Axis::cols);
        }

        Tensor<S> a_hat = tape.constant(adj.renormalized.template cast<S>());
        Tensor<S> h = tape.constant(h0);
        EncodedScene<S> out;
        for (auto& layer : layers_) {
            Tensor<S> propagate = a_hat;
            if (gated) {
                auto gates = ops::sigmoid(ops::add_rowvec(
                    ops::matmul(annot, tape.param(layer.gate_w)), tape.param(layer.gate_b)));
                auto gate_matrix = ops::scatter(gates, n, n, positions, S(1));
                propagate = ops::cwise_mul(a_hat, gate_matrix);
            }
            h = ops::relu(ops::matmul(ops::matmul(propagate, h), tape.param(layer.w)));
        }
        out.nodes = h;
        for (const auto& node : graph.nodes) {
            if (node.level == SceneGraph::Level::image) out.image_rows[node.image_index] = node.id;
            if (node.level == SceneGraph::Level::object)
                out.object_rows[node.image_index].push_back(node.id);
        }
        for (auto& [img, rows] : out.object_rows) {
            std::sort(rows.begin(), rows.end(), [&](int a, int b) {
                return graph.nodes[std::size_t(a)].region_index <
                       graph.nodes[std::size_t(b)].region_index;
            });
        }
        return out;
    }

    void save(Checkpoint& ck, const std::string& tag = "model") {
        ck.put_parameters<S>(tag, parameters());
    }
    void load(const Checkpoint& ck, const std::string& tag = "model") {
        ck.load_parameters<S>(tag, parameters());
    }

  private:
    struct Layer {
        Parameter<S> w;
        Parameter<S> gate_w;
        Parameter<S> gate_b;
    };

    int d_in_, d_model_, spatial_bins_, relation_classes_, d_rel_;
    bool soft_relation_;
    Parameter<S> rel_embedding_;
    std::vector<Layer> layers_;
};

/// The target image's refined object rows, detection order; image-level
/// graphs fall back to the image node row itself.
template <class S>
Tensor<S> encode_for_decoder(const EncodedScene<S>& scene, int image_index) {
    auto it = scene.object_rows.find(image_index);
    if (it != scene.object_rows.end() && !it->second.empty())
        return ops::gather_rows(scene.nodes, it->second);
    auto img = scene.image_rows.find(image_index);
    if (img == scene.image_rows.end())
        throw ValidationError("encode_for_decoder: image index " + std::to_string(image_index) +
                              " not present in the encoded scene");
    return ops::gather_rows(scene.nodes, std::vector<int>{img->second});
}

} // namespace relcap
