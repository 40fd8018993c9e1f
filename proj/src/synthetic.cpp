#include "relcap/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

namespace relcap {

namespace {

const std::vector<std::string> kClassNames = {"person", "dog",   "cat",  "car",
                                              "tree",   "ball",  "chair", "bird",
                                              "horse",  "boat",  "lamp",  "table"};

std::string zero_padded(const char* prefix, int n, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, n);
    return buf;
}

} // namespace

GeneratorSpec GeneratorSpec::from_config(const Config& cfg) {
    GeneratorSpec s;
    s.n_scenes = int(cfg.get_int("gen_scenes"));
    s.dv = int(cfg.get_int("dv"));
    s.objects_min = int(cfg.get_int("gen_objects_min"));
    s.objects_max = int(cfg.get_int("gen_objects_max"));
    s.n_classes = int(cfg.get_int("gen_classes"));
    s.context_size = int(cfg.get_int("gen_context_size"));
    s.mode = cfg.get("gen_mode");
    s.feature_noise = cfg.get_double("gen_feature_noise");
    s.context_bias = cfg.get_double("gen_context_bias");
    s.predicate_prior = cfg.get_double("gen_predicate_prior");
    return s;
}

std::vector<std::string> GeneratorSpec::class_names() const {
    if (n_classes < 2 || n_classes > int(kClassNames.size()))
        throw ValidationError("generator: n_classes must be within 2.." +
                              std::to_string(kClassNames.size()));
    return {kClassNames.begin(), kClassNames.begin() + n_classes};
}

const std::vector<std::string>& GeneratorSpec::spatial_predicates() {
    static const std::vector<std::string> p = {"leftof", "rightof", "above", "below"};
    return p;
}

const std::vector<std::string>& GeneratorSpec::contextual_predicates() {
    static const std::vector<std::string> p = {"above", "below"};
    return p;
}

Vector<double> GeneratorSpec::prototype(int class_index) const {
    Rng rng(0xFEEDull * 1315423911ull + std::uint64_t(class_index));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector<double> v(dv);
    for (int i = 0; i < dv; ++i) v(i) = u(rng);
    return v;
}

Vector<double> GeneratorSpec::context_direction() const {
    Rng rng(0xD1CEull);
    std::normal_distribution<double> g(0.0, 1.0);
    Vector<double> v(dv);
    for (int i = 0; i < dv; ++i) v(i) = g(rng);
    return v / v.norm();
}

std::string predicate_of(const BoundingBox<double>& subject, const BoundingBox<double>& object) {
    subject.validate();
    object.validate();
    const double dx = object.cx - subject.cx;
    const double dy = object.cy - subject.cy;
    if (std::abs(dx) >= std::abs(dy)) return dx > 0 ? "leftof" : "rightof";
    return dy > 0 ? "above" : "below"; // image y grows downward
}

std::string caption_for(const std::string& subject_class, const std::string& object_class,
                        const BoundingBox<double>& subject, const BoundingBox<double>& object) {
    return "a " + subject_class + " " + predicate_of(subject, object) + " a " + object_class;
}

std::vector<SceneRecord> generate_synthetic(const GeneratorSpec& spec, std::uint64_t seed) {
    if (spec.mode != "spatial" && spec.mode != "contextual")
        throw ValidationError("generator: unknown mode '" + spec.mode + "'");
    if (spec.objects_min < 2 || spec.objects_max < spec.objects_min)
        throw ValidationError("generator: need objects_min >= 2 and objects_max >= objects_min");
    if (spec.n_scenes < 1) throw ValidationError("generator: n_scenes must be positive");
    if (spec.context_size < 1) throw ValidationError("generator: context_size must be positive");

    const auto classes = spec.class_names();
    const Vector<double> ctx_dir = spec.context_direction();

    Rng rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_real_distribution<double> center(0.35, 0.65);
    std::uniform_real_distribution<double> anywhere(0.15, 0.85);
    std::uniform_real_distribution<double> size(0.08, 0.18);
    std::uniform_real_distribution<double> offset(0.18, 0.30);
    std::uniform_real_distribution<double> jitter(-0.08, 0.08);
    std::normal_distribution<double> noise(0.0, spec.feature_noise);

    std::vector<SceneRecord> out;
    out.reserve(std::size_t(spec.n_scenes));

    for (int s = 0; s < spec.n_scenes; ++s) {
        const int context = s / spec.context_size;
        SceneRecord rec;
        rec.image_id = zero_padded("scene", s, 5);
        rec.subclass = zero_padded("ctx", context, 4);
        rec.superclass = context % 2 == 0 ? "indoor" : "outdoor";

        std::uniform_int_distribution<int> n_obj_dist(spec.objects_min, spec.objects_max);
        const int n_obj = n_obj_dist(rng);
        std::vector<int> class_perm(classes.size());
        std::iota(class_perm.begin(), class_perm.end(), 0);
        std::shuffle(class_perm.begin(), class_perm.end(), rng);

        BoundingBox<double> obj_box, subj_box;
        std::string predicate;
        if (spec.mode == "spatial") {
            const auto& preds = GeneratorSpec::spatial_predicates();
            predicate = preds[std::size_t(std::uniform_int_distribution<int>(
                0, int(preds.size()) - 1)(rng))];
            obj_box = {center(rng), center(rng), size(rng), size(rng)};
            subj_box = {obj_box.cx, obj_box.cy, size(rng), size(rng)};
            const double off = offset(rng), jit = jitter(rng);
            if (predicate == "leftof") {
                subj_box.cx -= off;
                subj_box.cy += jit;
            } else if (predicate == "rightof") {
                subj_box.cx += off;
                subj_box.cy += jit;
            } else if (predicate == "above") {
                subj_box.cy -= off;
                subj_box.cx += jit;
            } else {
                subj_box.cy += off;
                subj_box.cx += jit;
            }
        } else {
            const bool first_super = rec.superclass == "indoor";
            const auto& preds = GeneratorSpec::contextual_predicates();
            const bool favored = u01(rng) < spec.predicate_prior;
            predicate = favored == first_super ? preds[0] : preds[1];
            obj_box = {anywhere(rng), anywhere(rng), size(rng), size(rng)};
            subj_box = {anywhere(rng), anywhere(rng), size(rng), size(rng)};
        }

        const double bias_sign = rec.superclass == "indoor" ? 1.0 : -1.0;
        auto make_feature = [&](int class_index) {
            Vector<double> f = spec.prototype(class_index);
            for (int i = 0; i < spec.dv; ++i) f(i) += noise(rng);
            if (spec.mode == "contextual") f += bias_sign * spec.context_bias * ctx_dir;
            return f;
        };

        std::vector<Region> ordered;
        ordered.push_back({subj_box, make_feature(class_perm[0]), class_perm[0]});
        ordered.push_back({obj_box, make_feature(class_perm[1]), class_perm[1]});
        for (int k = 2; k < n_obj; ++k) {
            BoundingBox<double> b{anywhere(rng), anywhere(rng), size(rng), size(rng)};
            int cls = class_perm[std::size_t(k) % class_perm.size()];
            ordered.push_back({b, make_feature(cls), cls});
        }

        std::vector<int> order(ordered.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        int subject_region = -1, object_region = -1;
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            rec.regions.push_back(ordered[std::size_t(order[pos])]);
            if (order[pos] == 0) subject_region = int(pos);
            if (order[pos] == 1) object_region = int(pos);
        }

        std::string caption;
        if (spec.mode == "spatial") {
            caption = caption_for(classes[std::size_t(class_perm[0])],
                                  classes[std::size_t(class_perm[1])], subj_box, obj_box);
        } else {
            caption = "a " + classes[std::size_t(class_perm[0])] + " " + predicate + " a " +
                      classes[std::size_t(class_perm[1])];
        }
        rec.captions.push_back(caption);
        rec.meta = {{"predicate", predicate},
                    {"subject_region", subject_region},
                    {"object_region", object_region},
                    {"pred_slot", 2}};
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace relcap
