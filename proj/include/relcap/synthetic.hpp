#pragma once

#include "relcap/config.hpp"
#include "relcap/corpus.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace relcap {

/// Synthetic corpus generator. Scenes come in context blocks (shared
/// subclass label, alternating superclass); captions follow the template
/// "a <subject> <predicate> a <object>".
///
/// spatial mode: the predicate is a deterministic function of the two
/// boxes (axis-dominant displacement), so captioning requires geometry.
/// contextual mode: boxes are uninformative and the predicate is sampled
/// from a superclass-dependent prior, while region features carry a weak
/// per-superclass bias; captioning benefits from pooling a whole context.
struct GeneratorSpec {
    int n_scenes = 500;
    int dv = 64;
    int objects_min = 2;
    int objects_max = 2;
    int n_classes = 8;
    int context_size = 8;
    std::string mode = "spatial"; // spatial | contextual
    double feature_noise = 0.1;
    double context_bias = 0.05;    // contextual mode feature shift
    double predicate_prior = 0.9; // contextual mode

    static GeneratorSpec from_config(const Config& cfg);
    std::vector<std::string> class_names() const;
    static const std::vector<std::string>& spatial_predicates();
    static const std::vector<std::string>& contextual_predicates();

    /// Class prototype feature; fixed given (class index, dv), independent
    /// of the corpus seed so separately generated corpora share geometry.
    Vector<double> prototype(int class_index) const;
    /// Unit direction along which superclasses shift features.
    Vector<double> context_direction() const;
};

/// Predicate implied by an ordered (subject, object) box pair: the axis
/// with the larger center displacement wins.
std::string predicate_of(const BoundingBox<double>& subject, const BoundingBox<double>& object);

/// Deterministic caption for a subject/object pair and their geometry.
std::string caption_for(const std::string& subject_class, const std::string& object_class,
                        const BoundingBox<double>& subject, const BoundingBox<double>& object);

std::vector<SceneRecord> generate_synthetic(const GeneratorSpec& spec, std::uint64_t seed);

} // namespace relcap
