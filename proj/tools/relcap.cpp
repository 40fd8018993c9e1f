// relcap command line: synthetic corpora, preprocessing models, captioner
// training, decoding, and evaluation. Exit codes: 0 success, 1 validation
// error, 2 numerical failure.

#include "relcap/bleu.hpp"
#include "relcap/gradcheck.hpp"
#include "relcap/model.hpp"
#include "relcap/synthetic.hpp"
#include "relcap/training.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>

using namespace relcap;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> level;
    std::optional<int> beam;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value configuration file");
        cmd->add_option("--seed", seed, "random seed override");
        cmd->add_option("--level", level, "graph level: object|image|hierarchical");
        cmd->add_option("--beam", beam, "beam width override");
    }

    Config resolve() const {
        Config cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        cfg.apply_env();
        if (seed) cfg.set("seed", std::to_string(*seed));
        if (level) cfg.set("level", *level);
        if (beam) cfg.set("beam", std::to_string(*beam));
        return cfg;
    }
};

Matrix<double> pair_features(const std::vector<SceneRecord>& records) {
    std::vector<Vector<double>> rows;
    for (const auto& rec : records) {
        const int k = int(rec.regions.size());
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                if (i == j) continue;
                auto f = spatial_feature(rec.regions[std::size_t(i)].box,
                                         rec.regions[std::size_t(j)].box);
                Vector<double> v(6);
                for (int d = 0; d < 6; ++d) v(d) = f[std::size_t(d)];
                rows.push_back(std::move(v));
            }
        }
    }
    Matrix<double> m(Eigen::Index(rows.size()), 6);
    for (std::size_t r = 0; r < rows.size(); ++r) m.row(Eigen::Index(r)) = rows[r].transpose();
    return m;
}

GmmModel<double> fit_corpus_gmm(const std::vector<SceneRecord>& records, const Config& cfg) {
    GmmOptions opts;
    opts.full_covariance = cfg.get_bool("gmm_full_covariance");
    return fit_gmm(pair_features(records), int(cfg.get_int("gmm_components")),
                   std::uint64_t(cfg.get_int("seed")), opts);
}

std::unique_ptr<RelationClassifier<double>> train_corpus_relcls(
    const std::vector<SceneRecord>& records, const RelationVocabulary& relvocab,
    const Config& cfg, int dv) {
    auto relcls = std::make_unique<RelationClassifier<double>>(
        dv, int(cfg.get_int("relation_hidden")), relvocab,
        std::uint64_t(cfg.get_int("seed")));
    RelationTrainConfig rcfg;
    rcfg.adam.learning_rate = cfg.get_double("relation_lr");
    rcfg.adam.beta1 = cfg.get_double("adam_beta1");
    rcfg.adam.beta2 = cfg.get_double("adam_beta2");
    rcfg.epochs = int(cfg.get_int("relation_epochs"));
    rcfg.batch_size = int(cfg.get_int("batch_size"));
    rcfg.seed = std::uint64_t(cfg.get_int("seed"));
    auto losses = relcls->train(relation_examples_from_corpus(records, relvocab), rcfg);
    std::cerr << "relation classifier: " << losses.size() << " epochs, final loss "
              << losses.back() << "\n";
    return relcls;
}

int corpus_feature_dim(const std::vector<SceneRecord>& records) {
    if (records.empty()) throw ValidationError("corpus has no scenes");
    return int(records.front().regions.front().feature.size());
}

template <class S>
int run_train(const Config& cfg, const std::string& corpus_path, const std::string& val_path,
              const std::string& out_path, const std::string& gmm_path,
              const std::string& relcls_path, std::string log_path) {
    auto records = load_corpus(corpus_path, int(cfg.get_int("k_max")));
    if (records.empty()) throw ValidationError("training corpus is empty");
    const int dv_corpus = corpus_feature_dim(records);
    if (dv_corpus != int(cfg.get_int("dv")))
        throw ValidationError("corpus feature dim " + std::to_string(dv_corpus) +
                              " does not match configured dv=" + cfg.get("dv"));

    std::vector<std::string> captions;
    for (const auto& r : records) captions.push_back(r.captions[0]);
    Vocabulary vocab = Vocabulary::build(captions, int(cfg.get_int("min_count")));

    ModelBundle<S> bundle;
    if (!relcls_path.empty()) {
        bundle.relvocab = RelationVocabulary::load(relcls_path + ".relvocab");
        Checkpoint rck = Checkpoint::load(relcls_path);
        bundle.relcls = std::make_unique<RelationClassifier<double>>(
            dv_corpus, int(cfg.get_int("relation_hidden")), bundle.relvocab,
            std::uint64_t(cfg.get_int("seed")));
        bundle.relcls->load(rck);
    } else {
        bundle.relvocab = relation_vocab_from_corpus(records);
        bundle.relcls = train_corpus_relcls(records, bundle.relvocab, cfg, dv_corpus);
    }
    if (!gmm_path.empty())
        bundle.gmm = GmmModel<double>::load(Checkpoint::load(gmm_path));
    else
        bundle.gmm = fit_corpus_gmm(records, cfg);

    bundle.cfg = ModelConfig::from_config(cfg, vocab.size(), bundle.relvocab.size());
    if (bundle.gmm.components != bundle.cfg.gmm_bins)
        throw ValidationError("gmm has " + std::to_string(bundle.gmm.components) +
                              " components, configured gmm_components=" +
                              std::to_string(bundle.cfg.gmm_bins));
    bundle.vocab = vocab;

    auto scenes = prepare_scenes(records, vocab, bundle.gmm, *bundle.relcls, bundle.cfg);
    std::vector<SceneRecord> val_records;
    std::vector<PreparedScene> val_scenes;
    if (!val_path.empty()) {
        val_records = load_corpus(val_path, bundle.cfg.k_max);
        val_scenes = prepare_scenes(val_records, vocab, bundle.gmm, *bundle.relcls, bundle.cfg);
    }

    bundle.model =
        std::make_unique<CaptionModel<S>>(bundle.cfg, std::uint64_t(cfg.get_int("seed")));
    TrainOptions opts = TrainOptions::from_config(cfg);
    auto log = train_captioner(*bundle.model, scenes,
                               val_scenes.empty() ? nullptr : &val_scenes, opts);

    if (log_path.empty()) log_path = out_path + ".log";
    write_metrics_log(log_path, cfg, log);
    bundle.save(out_path);
    std::cerr << "trained " << log.size() << " epochs, final train loss "
              << log.back().train_loss << "; checkpoint " << out_path << "\n";
    return 0;
}

template <class S>
int run_caption(const Config& cfg, const std::string& model_path, const std::string& corpus_path,
                const std::string& out_path) {
    auto bundle = ModelBundle<S>::load(model_path, std::uint64_t(cfg.get_int("seed")));
    auto records = load_corpus(corpus_path, bundle.cfg.k_max);
    if (records.empty()) throw ValidationError("caption corpus is empty");
    auto scenes = prepare_scenes(records, bundle.vocab, bundle.gmm, *bundle.relcls, bundle.cfg);

    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw ValidationError("cannot open " + out_path + " for writing");
        out = &file;
    }
    const int beam = int(cfg.get_int("beam"));
    for (const auto& scene : scenes) {
        auto hyp = bundle.model->generate(scene, beam);
        *out << scene.record->image_id << "\t" << bundle.vocab.decode(hyp.tokens) << "\n";
    }
    return 0;
}

std::map<std::string, std::string> read_candidates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open candidates file " + path);
    std::map<std::string, std::string> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ValidationError("candidates file " + path + ":" + std::to_string(line_no) +
                                  ": expected image_id<TAB>caption");
        out[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return out;
}

int run_evaluate(const Config& cfg, const std::string& candidates_path,
                 const std::string& corpus_path) {
    auto records = load_corpus(corpus_path, int(cfg.get_int("k_max")));
    auto candidates = read_candidates(candidates_path);
    std::vector<std::vector<std::string>> cands;
    std::vector<std::vector<std::vector<std::string>>> refs;
    for (const auto& rec : records) {
        auto it = candidates.find(rec.image_id);
        if (it == candidates.end())
            throw ValidationError("no candidate caption for image " + rec.image_id);
        cands.push_back(Vocabulary::tokenize(it->second));
        std::vector<std::vector<std::string>> r;
        for (const auto& cap : rec.captions) r.push_back(Vocabulary::tokenize(cap));
        refs.push_back(std::move(r));
    }
    auto res = corpus_bleu(cands, refs);
    char buf[64];
    for (int n = 1; n <= 4; ++n) {
        std::snprintf(buf, sizeof(buf), "BLEU@%d\t%.6f\n", n, res.bleu[std::size_t(n - 1)]);
        std::cout << buf;
    }
    std::snprintf(buf, sizeof(buf), "brevity_penalty\t%.6f\n", res.brevity_penalty);
    std::cout << buf;
    return 0;
}

int run_dump_graph(const Config& cfg, const std::string& corpus_path,
                   const std::string& model_path, const std::string& image_id) {
    auto records = load_corpus(corpus_path, int(cfg.get_int("k_max")));
    if (records.empty()) throw ValidationError("corpus is empty");

    std::vector<SceneGraph> graphs;
    if (!model_path.empty()) {
        auto bundle = ModelBundle<double>::load(model_path);
        auto scenes = prepare_scenes(records, bundle.vocab, bundle.gmm, *bundle.relcls,
                                     bundle.cfg);
        std::set<const SceneGraph*> seen;
        for (const auto& s : scenes)
            if (seen.insert(s.graph.get()).second) graphs.push_back(*s.graph);
    } else {
        ModelConfig mcfg;
        mcfg.level = cfg.get("level");
        mcfg.graph_mode = cfg.get("graph_mode");
        mcfg.context_group = cfg.get("context_group");
        mcfg.explicit_scene_nodes = cfg.get_bool("explicit_scene_nodes");
        mcfg.k_max = int(cfg.get_int("k_max"));
        GraphBuildOptions gopts;
        gopts.k_max = mcfg.k_max;
        gopts.hierarchical_mode = mcfg.graph_mode;
        gopts.explicit_scene_nodes = mcfg.explicit_scene_nodes;
        if (mcfg.level == "object") {
            for (const auto& rec : records)
                graphs.push_back(build_object_graph(rec, nullptr, gopts));
        } else {
            for (const auto& group : group_contexts(records, mcfg.context_group)) {
                std::vector<SceneRecord> ctx;
                for (auto idx : group) ctx.push_back(records[idx]);
                graphs.push_back(mcfg.level == "image"
                                     ? build_image_graph(ctx)
                                     : build_hierarchical_graph(ctx, nullptr, gopts));
            }
        }
    }

    auto level_name = [](SceneGraph::Level l) {
        switch (l) {
        case SceneGraph::Level::object: return "object";
        case SceneGraph::Level::image: return "image";
        default: return "scene";
        }
    };
    int printed = 0;
    for (const auto& g : graphs) {
        bool contains_target = image_id.empty();
        if (!image_id.empty())
            for (const auto& rec : records)
                if (rec.image_id == image_id)
                    for (const auto& n : g.nodes)
                        if (n.level == SceneGraph::Level::object || n.level == SceneGraph::Level::image)
                            contains_target = true;
        if (!contains_target) continue;
        std::cout << "graph level=" << g.built_level << " nodes=" << g.nodes.size()
                  << " undirected_edges=" << g.undirected_edge_count() << "\n";
        for (const auto& n : g.nodes)
            std::cout << "  node " << n.id << " " << level_name(n.level)
                      << " image=" << n.image_index << " region=" << n.region_index << "\n";
        for (const auto& e : g.edges) {
            std::cout << "  edge " << e.i << " -> " << e.j;
            if (e.annotation) {
                std::cout << " scores=[";
                for (int k = 0; k < e.annotation->spatial_scores.size(); ++k)
                    std::cout << (k ? "," : "") << e.annotation->spatial_scores(k);
                std::cout << "] class=" << e.annotation->relation_class;
            }
            std::cout << "\n";
        }
        if (++printed >= 8 && image_id.empty()) {
            std::cout << "... (" << graphs.size() - std::size_t(printed) << " more graphs)\n";
            break;
        }
    }
    return 0;
}

int run_grad_check(const Config& cfg, int instances) {
    const double op_tol = 1e-5, model_tol = 1e-4;
    auto reports = gradcheck::check_ops(instances, std::uint64_t(cfg.get_int("seed")));
    bool ok = true;
    for (const auto& r : reports) {
        bool pass = r.worst_rel_err < op_tol;
        ok = ok && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << r.name << " worst_rel_err=" << r.worst_rel_err
                  << " (" << r.instances << " instances)\n";
    }
    double e2e = gradcheck::check_end_to_end(std::uint64_t(cfg.get_int("seed")));
    bool pass = e2e < model_tol;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << "end_to_end worst_rel_err=" << e2e << "\n";
    if (!ok) throw NumericError("gradient check failed");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"relcap: relation-aware image captioning on synthetic region corpora"};
    app.require_subcommand(1);

    // gen-synthetic
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "generate a synthetic scene corpus");
    CommonFlags gen_flags;
    gen_flags.attach(gen_cmd);
    std::string gen_out;
    gen_cmd->add_option("--out", gen_out, "corpus output path")->required();

    // build-vocab
    auto* vocab_cmd = app.add_subcommand("build-vocab", "build the token vocabulary");
    CommonFlags vocab_flags;
    vocab_flags.attach(vocab_cmd);
    std::string vocab_corpus, vocab_out;
    vocab_cmd->add_option("--corpus", vocab_corpus, "corpus path")->required();
    vocab_cmd->add_option("--out", vocab_out, "vocabulary output path")->required();

    // fit-gmm
    auto* gmm_cmd = app.add_subcommand("fit-gmm", "fit the spatial-feature mixture model");
    CommonFlags gmm_flags;
    gmm_flags.attach(gmm_cmd);
    std::string gmm_corpus, gmm_out;
    gmm_cmd->add_option("--corpus", gmm_corpus, "corpus path")->required();
    gmm_cmd->add_option("--out", gmm_out, "model output path")->required();

    // train-relcls
    auto* rel_cmd = app.add_subcommand("train-relcls", "train the semantic relation classifier");
    CommonFlags rel_flags;
    rel_flags.attach(rel_cmd);
    std::string rel_corpus, rel_out;
    rel_cmd->add_option("--corpus", rel_corpus, "corpus path")->required();
    rel_cmd->add_option("--out", rel_out, "classifier output path")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train the captioning model");
    CommonFlags train_flags;
    train_flags.attach(train_cmd);
    std::string train_corpus, train_val, train_out, train_gmm, train_relcls, train_log;
    train_cmd->add_option("--corpus", train_corpus, "training corpus")->required();
    train_cmd->add_option("--val", train_val, "validation corpus");
    train_cmd->add_option("--out", train_out, "checkpoint output path")->required();
    train_cmd->add_option("--gmm", train_gmm, "pre-fitted mixture checkpoint");
    train_cmd->add_option("--relcls", train_relcls, "pre-trained relation classifier checkpoint");
    train_cmd->add_option("--log", train_log, "metrics log path (default <out>.log)");

    // caption
    auto* cap_cmd = app.add_subcommand("caption", "decode captions for a corpus");
    CommonFlags cap_flags;
    cap_flags.attach(cap_cmd);
    std::string cap_model, cap_corpus, cap_out;
    cap_cmd->add_option("--model", cap_model, "trained checkpoint")->required();
    cap_cmd->add_option("--corpus", cap_corpus, "corpus path")->required();
    cap_cmd->add_option("--out", cap_out, "output path (default stdout)");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "corpus BLEU of decoded captions");
    CommonFlags eval_flags;
    eval_flags.attach(eval_cmd);
    std::string eval_cands, eval_corpus;
    eval_cmd->add_option("--candidates", eval_cands, "image_id<TAB>caption file")->required();
    eval_cmd->add_option("--corpus", eval_corpus, "reference corpus")->required();

    // grad-check
    auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference gradient verification");
    CommonFlags grad_flags;
    grad_flags.attach(grad_cmd);
    int grad_instances = 100;
    grad_cmd->add_option("--instances", grad_instances, "random instances per op");

    // dump-graph
    auto* dump_cmd = app.add_subcommand("dump-graph", "print graphs as readable edge lists");
    CommonFlags dump_flags;
    dump_flags.attach(dump_cmd);
    std::string dump_corpus, dump_model, dump_image;
    dump_cmd->add_option("--corpus", dump_corpus, "corpus path")->required();
    dump_cmd->add_option("--model", dump_model, "optional checkpoint for annotated graphs");
    dump_cmd->add_option("--image", dump_image, "only graphs containing this image id");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) {
            Config cfg = gen_flags.resolve();
            auto spec = GeneratorSpec::from_config(cfg);
            save_corpus(gen_out, generate_synthetic(spec, std::uint64_t(cfg.get_int("seed"))));
            std::cerr << "wrote " << cfg.get_int("gen_scenes") << " scenes to " << gen_out << "\n";
            return 0;
        }
        if (vocab_cmd->parsed()) {
            Config cfg = vocab_flags.resolve();
            auto records = load_corpus(vocab_corpus, int(cfg.get_int("k_max")));
            std::vector<std::string> captions;
            for (const auto& r : records)
                for (const auto& c : r.captions) captions.push_back(c);
            auto vocab = Vocabulary::build(captions, int(cfg.get_int("min_count")));
            vocab.save(vocab_out);
            std::cerr << "vocabulary of " << vocab.size() << " tokens written to " << vocab_out
                      << "\n";
            return 0;
        }
        if (gmm_cmd->parsed()) {
            Config cfg = gmm_flags.resolve();
            auto records = load_corpus(gmm_corpus, int(cfg.get_int("k_max")));
            auto model = fit_corpus_gmm(records, cfg);
            Checkpoint ck;
            model.save(ck);
            ck.save(gmm_out);
            std::cerr << "fitted " << model.components << "-component mixture ("
                      << model.log_likelihood_trace.size() << " EM iterations) to " << gmm_out
                      << "\n";
            return 0;
        }
        if (rel_cmd->parsed()) {
            Config cfg = rel_flags.resolve();
            auto records = load_corpus(rel_corpus, int(cfg.get_int("k_max")));
            auto relvocab = relation_vocab_from_corpus(records);
            auto relcls = train_corpus_relcls(records, relvocab, cfg,
                                              corpus_feature_dim(records));
            Checkpoint ck;
            relcls->save(ck);
            ck.save(rel_out);
            relvocab.save(rel_out + ".relvocab");
            return 0;
        }
        if (train_cmd->parsed()) {
            Config cfg = train_flags.resolve();
            if (cfg.get("dtype") == "f32")
                return run_train<float>(cfg, train_corpus, train_val, train_out, train_gmm,
                                        train_relcls, train_log);
            return run_train<double>(cfg, train_corpus, train_val, train_out, train_gmm,
                                     train_relcls, train_log);
        }
        if (cap_cmd->parsed()) {
            Config cfg = cap_flags.resolve();
            if (cfg.get("dtype") == "f32")
                return run_caption<float>(cfg, cap_model, cap_corpus, cap_out);
            return run_caption<double>(cfg, cap_model, cap_corpus, cap_out);
        }
        if (eval_cmd->parsed()) return run_evaluate(eval_flags.resolve(), eval_cands, eval_corpus);
        if (grad_cmd->parsed()) return run_grad_check(grad_flags.resolve(), grad_instances);
        if (dump_cmd->parsed())
            return run_dump_graph(dump_flags.resolve(), dump_corpus, dump_model, dump_image);
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
