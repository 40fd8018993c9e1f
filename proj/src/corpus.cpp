#include "relcap/corpus.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace relcap {

namespace {

nlohmann::json region_to_json(const Region& r) {
    nlohmann::json j;
    j["box"] = {r.box.cx, r.box.cy, r.box.width, r.box.height};
    j["class_id"] = r.class_id;
    j["feature"] = std::vector<double>(r.feature.data(), r.feature.data() + r.feature.size());
    return j;
}

Region region_from_json(const nlohmann::json& j) {
    Region r;
    const auto& b = j.at("box");
    if (!b.is_array() || b.size() != 4) throw ValidationError("region box must have 4 entries");
    r.box = BoundingBox<double>{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                b[3].get<double>()};
    r.box.validate();
    if (r.box.cx < 0.0 || r.box.cx > 1.0 || r.box.cy < 0.0 || r.box.cy > 1.0)
        throw ValidationError("region center outside normalized [0,1] range");
    r.class_id = j.at("class_id").get<int>();
    const auto& f = j.at("feature");
    r.feature.resize(Eigen::Index(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) r.feature(Eigen::Index(i)) = f[i].get<double>();
    return r;
}

} // namespace

std::vector<SceneRecord> load_corpus(const std::string& path, int k_max) {
    std::ifstream in(path);
    if (!in) throw ValidationError("corpus: cannot open " + path);

    std::vector<SceneRecord> out;
    std::string line;
    long line_no = 0;

    if (!std::getline(in, line)) {
        std::cerr << "warning: corpus file " << path << " is empty\n";
        return out;
    }
    ++line_no;
    try {
        auto header = nlohmann::json::parse(line);
        if (header.at("format").get<std::string>() != "relcap-corpus" ||
            header.at("version").get<int>() != 1)
            throw ValidationError("unsupported corpus format/version");
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("corpus: bad header line in " + path + ": " + e.what());
    }

    Eigen::Index feature_dim = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            SceneRecord rec;
            rec.image_id = j.at("image_id").get<std::string>();
            rec.superclass = j.at("superclass").get<std::string>();
            rec.subclass = j.at("subclass").get<std::string>();
            for (const auto& rj : j.at("regions")) rec.regions.push_back(region_from_json(rj));
            if (rec.regions.empty()) throw ValidationError("scene has no regions");
            if (int(rec.regions.size()) > k_max) {
                std::cerr << "warning: " << path << ":" << line_no << ": scene " << rec.image_id
                          << " has " << rec.regions.size() << " regions, keeping first " << k_max
                          << " (confidence order)\n";
                rec.regions.resize(std::size_t(k_max));
            }
            for (const auto& r : rec.regions) {
                if (feature_dim < 0) feature_dim = r.feature.size();
                if (r.feature.size() != feature_dim)
                    throw ValidationError("feature dim " + std::to_string(r.feature.size()) +
                                          " differs from corpus dim " +
                                          std::to_string(feature_dim));
            }
            for (const auto& c : j.at("captions")) {
                std::string cap = c.get<std::string>();
                if (cap.empty()) throw ValidationError("empty caption");
                rec.captions.push_back(cap);
            }
            if (rec.captions.empty()) throw ValidationError("scene has no captions");
            if (j.contains("meta")) rec.meta = j["meta"];
            out.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) + ": " +
                                  e.what());
        } catch (const ValidationError& e) {
            throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) + ": " +
                                  e.what());
        }
    }
    if (out.empty()) std::cerr << "warning: corpus file " << path << " has no scenes\n";
    return out;
}

void save_corpus(const std::string& path, const std::vector<SceneRecord>& records) {
    std::ofstream out(path);
    if (!out) throw ValidationError("corpus: cannot open " + path + " for writing");
    out << nlohmann::json({{"format", "relcap-corpus"}, {"version", 1}}).dump() << "\n";
    for (const auto& rec : records) {
        nlohmann::json j;
        j["image_id"] = rec.image_id;
        j["superclass"] = rec.superclass;
        j["subclass"] = rec.subclass;
        j["regions"] = nlohmann::json::array();
        for (const auto& r : rec.regions) j["regions"].push_back(region_to_json(r));
        j["captions"] = rec.captions;
        if (!rec.meta.is_null()) j["meta"] = rec.meta;
        out << j.dump() << "\n";
    }
    if (!out) throw ValidationError("corpus: write to " + path + " failed");
}

} // namespace relcap
