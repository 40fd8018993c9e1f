#pragma once

#include "relcap/config.hpp"
#include "relcap/decoder.hpp"
#include "relcap/gcn.hpp"
#include "relcap/generate.hpp"
#include "relcap/gmm.hpp"
#include "relcap/graph.hpp"
#include "relcap/relation.hpp"
#include "relcap/vocab.hpp"

#include <memory>
#include <set>
#include <string>
#include <vector>

namespace relcap {

/// Everything needed to rebuild the same captioner and its graphs.
struct ModelConfig {
    int dv = 64;
    int d_model = 128;
    int gcn_layers = 2;
    DecoderConfig decoder;
    int gmm_bins = 8;
    int relation_classes = 5; // C + 1
    int d_rel = 16;
    int relation_hidden = 256;
    bool soft_relation = false;
    bool edge_gates = true;
    std::string level = "object";
    std::string graph_mode = "structured";
    std::string context_group = "subclass";
    bool explicit_scene_nodes = false;
    int k_max = 36;

    static ModelConfig from_config(const Config& cfg, int vocab_size, int relation_classes) {
        ModelConfig m;
        m.dv = int(cfg.get_int("dv"));
        m.d_model = int(cfg.get_int("d_model"));
        m.gcn_layers = int(cfg.get_int("n_layers"));
        m.decoder.d_model = m.d_model;
        m.decoder.n_layers = int(cfg.get_int("n_layers"));
        m.decoder.n_heads = int(cfg.get_int("n_heads"));
        m.decoder.d_ff = int(cfg.get_int("d_ff"));
        m.decoder.max_len = int(cfg.get_int("max_len"));
        m.decoder.vocab_size = vocab_size;
        m.gmm_bins = int(cfg.get_int("gmm_components"));
        m.relation_classes = relation_classes;
        m.d_rel = int(cfg.get_int("d_rel"));
        m.relation_hidden = int(cfg.get_int("relation_hidden"));
        m.soft_relation = cfg.get_bool("relation_soft_embedding");
        m.edge_gates = cfg.get_bool("edge_gates");
        m.level = cfg.get("level");
        m.graph_mode = cfg.get("graph_mode");
        m.context_group = cfg.get("context_group");
        m.explicit_scene_nodes = cfg.get_bool("explicit_scene_nodes");
        m.k_max = int(cfg.get_int("k_max"));
        if (m.level != "object" && m.level != "image" && m.level != "hierarchical")
            throw ValidationError("config: level must be object|image|hierarchical, got '" +
                                  m.level + "'");
        if (m.context_group != "subclass" && m.context_group != "superclass")
            throw ValidationError("config: context_group must be subclass|superclass");
        return m;
    }
};

/// One captioning instance: a target image inside its (possibly shared)
/// context graph, plus the encoded reference caption.
struct PreparedScene {
    const SceneRecord* record = nullptr;
    std::shared_ptr<const SceneGraph> graph;
    std::shared_ptr<const Adjacency> adj;
    int image_index = 0;
    std::vector<int> caption_ids; // <S> tokens <E>
};

/// Groups record indices by the configured context label, preserving
/// first-appearance order.
inline std::vector<std::vector<std::size_t>> group_contexts(
    const std::vector<SceneRecord>& records, const std::string& context_group) {
    std::vector<std::vector<std::size_t>> groups;
    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::string& key =
            context_group == "superclass" ? records[i].superclass : records[i].subclass;
        auto it = index_of.find(key);
        if (it == index_of.end()) {
            index_of.emplace(key, groups.size());
            groups.push_back({i});
        } else {
            groups[it->second].push_back(i);
        }
    }
    return groups;
}

/// Pipeline annotator: GMM responsibilities of the Eq.-style spatial
/// feature plus the predicted semantic relation of the ordered pair.
inline EdgeAnnotator make_annotator(const GmmModel<double>& gmm,
                                    RelationClassifier<double>& relcls, bool soft_relation) {
    return [&gmm, &relcls, soft_relation](const SceneRecord& scene, int i, int j) {
        const Region& a = scene.regions[std::size_t(i)];
        const Region& b = scene.regions[std::size_t(j)];
        auto f = spatial_feature(a.box, b.box);
        Vector<double> fv(6);
        for (int k = 0; k < 6; ++k) fv(k) = f[std::size_t(k)];
        EdgeAnnotation ann;
        ann.spatial_scores = assign_scores(gmm, fv);
        auto pred = relcls.classify(a.feature, b.feature, union_feature(scene.regions, i, j));
        ann.relation_class = pred.class_id;
        if (soft_relation) ann.relation_distribution = pred.distribution;
        return ann;
    };
}

/// Builds the per-scene graphs once; they are static given the corpus,
/// the mixture model, and the relation classifier.
inline std::vector<PreparedScene> prepare_scenes(const std::vector<SceneRecord>& records,
                                                 const Vocabulary& vocab,
                                                 const GmmModel<double>& gmm,
                                                 RelationClassifier<double>& relcls,
                                                 const ModelConfig& cfg) {
    EdgeAnnotator annotate = make_annotator(gmm, relcls, cfg.soft_relation);
    GraphBuildOptions gopts;
    gopts.k_max = cfg.k_max;
    gopts.hierarchical_mode = cfg.graph_mode;
    gopts.explicit_scene_nodes = cfg.explicit_scene_nodes;

    auto encode_caption = [&](const SceneRecord& rec) {
        if (rec.captions.empty())
            throw ValidationError("prepare: scene " + rec.image_id + " has no captions");
        std::vector<int> ids = vocab.encode(rec.captions.front());
        if (int(ids.size()) - 1 > cfg.decoder.max_len)
            throw ValidationError("prepare: caption of scene " + rec.image_id + " needs " +
                                  std::to_string(ids.size() - 1) + " positions, max_len is " +
                                  std::to_string(cfg.decoder.max_len));
        return ids;
    };

    std::vector<PreparedScene> out;
    if (cfg.level == "object") {
        for (const auto& rec : records) {
            PreparedScene p;
            p.record = &rec;
            auto g = std::make_shared<SceneGraph>(build_object_graph(rec, annotate, gopts));
            g->append_type_embedding();
            p.adj = std::make_shared<Adjacency>(adjacency_of(*g));
            p.graph = std::move(g);
            p.image_index = 0;
            p.caption_ids = encode_caption(rec);
            out.push_back(std::move(p));
        }
        return out;
    }

    for (const auto& group : group_contexts(records, cfg.context_group)) {
        std::vector<SceneRecord> context;
        context.reserve(group.size());
        for (std::size_t idx : group) context.push_back(records[idx]);
        std::shared_ptr<SceneGraph> g;
        if (cfg.level == "image")
            g = std::make_shared<SceneGraph>(build_image_graph(context));
        else
            g = std::make_shared<SceneGraph>(build_hierarchical_graph(context, annotate, gopts));
        g->append_type_embedding();
        auto adj = std::make_shared<Adjacency>(adjacency_of(*g));
        for (std::size_t i = 0; i < group.size(); ++i) {
            PreparedScene p;
            p.record = &records[group[i]];
            p.graph = g;
            p.adj = adj;
            p.image_index = int(i);
            p.caption_ids = encode_caption(*p.record);
            out.push_back(std::move(p));
        }
    }
    return out;
}

/// Predicate names observed in the corpus generator labels, sorted.
inline RelationVocabulary relation_vocab_from_corpus(const std::vector<SceneRecord>& records) {
    std::set<std::string> names;
    for (const auto& rec : records)
        if (rec.meta.contains("predicate")) names.insert(rec.meta["predicate"].get<std::string>());
    if (names.empty())
        throw ValidationError("relation vocabulary: corpus carries no predicate labels");
    return RelationVocabulary(std::vector<std::string>(names.begin(), names.end()));
}

/// Labeled ordered pairs for the relation classifier: the captioned
/// (subject, object) pair takes its predicate class, every other ordered
/// pair is non-relation.
inline std::vector<RelationExample<double>> relation_examples_from_corpus(
    const std::vector<SceneRecord>& records, const RelationVocabulary& relvocab) {
    std::vector<RelationExample<double>> out;
    for (const auto& rec : records) {
        if (!rec.meta.contains("predicate")) continue;
        const int si = rec.meta["subject_region"].get<int>();
        const int oi = rec.meta["object_region"].get<int>();
        const int label = relvocab.id(rec.meta["predicate"].get<std::string>());
        const int k = int(rec.regions.size());
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                if (i == j) continue;
                RelationExample<double> ex;
                const auto& vi = rec.regions[std::size_t(i)].feature;
                const auto& vj = rec.regions[std::size_t(j)].feature;
                Vector<double> u = union_feature(rec.regions, i, j);
                ex.input.resize(3 * vi.size());
                ex.input << vi, vj, u;
                ex.label = (i == si && j == oi) ? label : relvocab.non_relation_id();
                out.push_back(std::move(ex));
            }
        }
    }
    if (out.empty()) throw ValidationError("relation examples: corpus carries no labeled pairs");
    return out;
}

/// Negative mean log-probability of the target tokens, skipping <PAD>.
template <class S>
Tensor<S> xe_loss(const Tensor<S>& distributions, const std::vector<int>& targets,
                  int pad_id = Vocabulary::pad_id) {
    if (Eigen::Index(targets.size()) != distributions.rows())
        throw ValidationError("xe_loss: " + std::to_string(targets.size()) + " targets for " +
                              shape_str(distributions.rows(), distributions.cols()) +
                              " distributions");
    long non_pad = 0;
    std::vector<int> safe = targets;
    Matrix<S> pad_mask = Matrix<S>::Zero(Eigen::Index(targets.size()), 1);
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (targets[t] < 0 || targets[t] >= distributions.cols())
            throw ValidationError("xe_loss: target id " + std::to_string(targets[t]) +
                                  " outside vocabulary of size " +
                                  std::to_string(distributions.cols()));
        if (targets[t] == pad_id) {
            pad_mask(Eigen::Index(t), 0) = S(1);
            safe[t] = 0;
        } else {
            ++non_pad;
        }
    }
    if (non_pad == 0) throw ValidationError("xe_loss: every target is <PAD>");
    using namespace ops;
    auto picked = pick_per_row(distributions, safe);
    auto kept = masked_fill(picked, pad_mask, S(1)); // log(1) = 0 at pad rows
    return scalar_mul(sum(log(kept)), S(-1) / S(non_pad));
}

/// GCN encoder plus transformer decoder with a shared d_model.
template <class S>
class CaptionModel {
  public:
    CaptionModel(const ModelConfig& cfg, std::uint64_t seed)
        : cfg_(cfg),
          gcn_(cfg.dv + 3, cfg.d_model, cfg.gcn_layers, cfg.gmm_bins, cfg.relation_classes,
               cfg.d_rel, seed * 0x9e3779b97f4a7c15ULL + 1, cfg.soft_relation),
          decoder_(cfg.decoder, seed * 0x9e3779b97f4a7c15ULL + 2) {}

    const ModelConfig& config() const { return cfg_; }
    GcnEncoder<S>& gcn() { return gcn_; }
    TransformerDecoder<S>& decoder() { return decoder_; }

    std::vector<Parameter<S>*> parameters() {
        auto out = gcn_.parameters();
        for (auto* p : decoder_.parameters()) out.push_back(p);
        return out;
    }

    /// Teacher-forced caption loss of one prepared scene.
    Tensor<S> scene_loss(Tape<S>& tape, const PreparedScene& scene) {
        auto encoded = gcn_.encode(tape, *scene.graph, *scene.adj, cfg_.edge_gates);
        auto memory = encode_for_decoder(encoded, scene.image_index);
        std::vector<int> prefix(scene.caption_ids.begin(), scene.caption_ids.end() - 1);
        std::vector<int> targets(scene.caption_ids.begin() + 1, scene.caption_ids.end());
        auto dist = decoder_.forward(tape, prefix, memory);
        return xe_loss<S>(dist, targets);
    }

    /// Refined memory rows of the target image, detached from any tape.
    Matrix<S> memory_of(const PreparedScene& scene) {
        Tape<S> tape;
        auto encoded = gcn_.encode(tape, *scene.graph, *scene.adj, cfg_.edge_gates);
        return encode_for_decoder(encoded, scene.image_index).value();
    }

    struct Stepper {
        const TransformerDecoder<S>* decoder;
        Matrix<S> memory;
        using State = DecoderState<S>;
        State initial() const { return decoder->init_state(memory); }
        Vector<S> advance(State& st, int token) const { return decoder->advance(st, token); }
    };

    /// Greedy (beam == 1) or beam-searched caption token ids, <E> included
    /// when reached.
    BeamHypothesis generate(const PreparedScene& scene, int beam) {
        Stepper stepper{&decoder_, memory_of(scene)};
        const int max_steps = cfg_.decoder.max_len - 1;
        if (beam <= 1)
            return greedy_decode<S>(stepper, Vocabulary::bos_id, Vocabulary::eos_id, max_steps);
        return beam_decode<S>(stepper, beam, Vocabulary::bos_id, Vocabulary::eos_id, max_steps);
    }

    void save(Checkpoint& ck) {
        ck.put_parameters<S>("model", parameters());
    }
    void load(const Checkpoint& ck) {
        ck.load_parameters<S>("model", parameters());
    }

  private:
    ModelConfig cfg_;
    GcnEncoder<S> gcn_;
    TransformerDecoder<S> decoder_;
};

/// The whole pipeline in one checkpoint: model weights, mixture model,
/// relation classifier, and the structural metadata needed to rebuild
/// them. Token and relation vocabularies ride along as sidecar files.
template <class S>
struct ModelBundle {
    ModelConfig cfg;
    Vocabulary vocab;
    RelationVocabulary relvocab;
    GmmModel<double> gmm;
    std::unique_ptr<RelationClassifier<double>> relcls;
    std::unique_ptr<CaptionModel<S>> model;

    static std::string vocab_sidecar(const std::string& path) { return path + ".vocab"; }
    static std::string relvocab_sidecar(const std::string& path) { return path + ".relvocab"; }

    void save(const std::string& path) const {
        Checkpoint ck;
        ck.put_scalar<double>("meta", "format_version", 1);
        ck.put_scalar<double>("meta", "dv", cfg.dv);
        ck.put_scalar<double>("meta", "d_model", cfg.d_model);
        ck.put_scalar<double>("meta", "gcn_layers", cfg.gcn_layers);
        ck.put_scalar<double>("meta", "dec_layers", cfg.decoder.n_layers);
        ck.put_scalar<double>("meta", "n_heads", cfg.decoder.n_heads);
        ck.put_scalar<double>("meta", "d_ff", cfg.decoder.d_ff);
        ck.put_scalar<double>("meta", "max_len", cfg.decoder.max_len);
        ck.put_scalar<double>("meta", "vocab_size", cfg.decoder.vocab_size);
        ck.put_scalar<double>("meta", "gmm_bins", cfg.gmm_bins);
        ck.put_scalar<double>("meta", "relation_classes", cfg.relation_classes);
        ck.put_scalar<double>("meta", "d_rel", cfg.d_rel);
        ck.put_scalar<double>("meta", "relation_hidden", cfg.relation_hidden);
        ck.put_scalar<double>("meta", "soft_relation", cfg.soft_relation ? 1 : 0);
        ck.put_scalar<double>("meta", "edge_gates", cfg.edge_gates ? 1 : 0);
        ck.put_scalar<double>("meta", "level",
                              cfg.level == "object" ? 0 : (cfg.level == "image" ? 1 : 2));
        ck.put_scalar<double>("meta", "graph_mode", cfg.graph_mode == "structured" ? 0 : 1);
        ck.put_scalar<double>("meta", "context_group", cfg.context_group == "subclass" ? 0 : 1);
        ck.put_scalar<double>("meta", "explicit_scene_nodes", cfg.explicit_scene_nodes ? 1 : 0);
        ck.put_scalar<double>("meta", "k_max", cfg.k_max);
        gmm.save(ck, "gmm");
        relcls_const().save(ck, "relation");
        model_const().save(ck);
        ck.save(path);
        vocab.save(vocab_sidecar(path));
        relvocab.save(relvocab_sidecar(path));
    }

    static ModelBundle load(const std::string& path, std::uint64_t seed = 1) {
        Checkpoint ck = Checkpoint::load(path);
        ModelBundle b;
        b.vocab = Vocabulary::load(vocab_sidecar(path));
        b.relvocab = RelationVocabulary::load(relvocab_sidecar(path));
        auto geti = [&](const char* k) { return int(ck.get_scalar<double>("meta", k)); };
        b.cfg.dv = geti("dv");
        b.cfg.d_model = geti("d_model");
        b.cfg.gcn_layers = geti("gcn_layers");
        b.cfg.decoder.d_model = b.cfg.d_model;
        b.cfg.decoder.n_layers = geti("dec_layers");
        b.cfg.decoder.n_heads = geti("n_heads");
        b.cfg.decoder.d_ff = geti("d_ff");
        b.cfg.decoder.max_len = geti("max_len");
        b.cfg.decoder.vocab_size = geti("vocab_size");
        b.cfg.gmm_bins = geti("gmm_bins");
        b.cfg.relation_classes = geti("relation_classes");
        b.cfg.d_rel = geti("d_rel");
        b.cfg.relation_hidden = geti("relation_hidden");
        b.cfg.soft_relation = geti("soft_relation") != 0;
        b.cfg.edge_gates = geti("edge_gates") != 0;
        b.cfg.level = geti("level") == 0 ? "object" : (geti("level") == 1 ? "image" : "hierarchical");
        b.cfg.graph_mode = geti("graph_mode") == 0 ? "structured" : "literal";
        b.cfg.context_group = geti("context_group") == 0 ? "subclass" : "superclass";
        b.cfg.explicit_scene_nodes = geti("explicit_scene_nodes") != 0;
        b.cfg.k_max = geti("k_max");
        if (b.cfg.decoder.vocab_size != b.vocab.size())
            throw ValidationError("bundle: vocabulary sidecar size " +
                                  std::to_string(b.vocab.size()) + " does not match checkpoint " +
                                  std::to_string(b.cfg.decoder.vocab_size));
        b.gmm = GmmModel<double>::load(ck, "gmm");
        b.relcls = std::make_unique<RelationClassifier<double>>(b.cfg.dv, b.cfg.relation_hidden,
                                                                b.relvocab, seed);
        b.relcls->load(ck, "relation");
        b.model = std::make_unique<CaptionModel<S>>(b.cfg, seed);
        b.model->load(ck);
        return b;
    }

  private:
    RelationClassifier<double>& relcls_const() const { return *relcls; }
    CaptionModel<S>& model_const() const { return *model; }
};

} // namespace relcap
