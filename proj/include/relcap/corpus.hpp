#pragma once

#include "relcap/geometry.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace relcap {

struct Region {
    BoundingBox<double> box;
    Vector<double> feature;
    int class_id = -1;
};

/// One annotated scene: detected regions in confidence order plus its
/// reference captions and taxonomy labels. `meta` carries optional
/// generator ground truth (predicate labels and slots) used by oracles,
/// never by the model.
struct SceneRecord {
    std::string image_id;
    std::string superclass;
    std::string subclass;
    std::vector<Region> regions;
    std::vector<std::string> captions;
    nlohmann::json meta;
};

/// Line-delimited corpus: a version record followed by one scene per line.
/// Malformed lines fail with their line number; records with more than
/// k_max regions are truncated to the leading (highest-confidence) k_max
/// with a warning on stderr.
std::vector<SceneRecord> load_corpus(const std::string& path, int k_max = 36);

void save_corpus(const std::string& path, const std::vector<SceneRecord>& records);

} // namespace relcap
