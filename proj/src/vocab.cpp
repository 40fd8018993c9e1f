#include "relcap/vocab.hpp"

#include "relcap/common.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace relcap {

namespace {
const char* kReserved[] = {"<PAD>", "<S>", "<E>", "<UNK>"};
}

std::vector<std::string> Vocabulary::tokenize(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) {
        std::transform(tok.begin(), tok.end(), tok.begin(),
                       [](unsigned char c) { return char(std::tolower(c)); });
        out.push_back(tok);
    }
    return out;
}

void Vocabulary::push(const std::string& token) {
    ids_.emplace(token, int(tokens_.size()));
    tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions, int min_count) {
    std::map<std::string, long> counts;
    for (const auto& cap : captions)
        for (const auto& tok : tokenize(cap)) ++counts[tok];

    std::vector<std::pair<std::string, long>> kept;
    for (const auto& [tok, n] : counts)
        if (n >= min_count) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    for (const char* r : kReserved) v.push(r);
    for (const auto& [tok, n] : kept) v.push(tok);
    return v;
}

int Vocabulary::id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? unk_id : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size())
        throw ValidationError("vocabulary: id " + std::to_string(id) + " out of range (size " +
                              std::to_string(size()) + ")");
    return tokens_[std::size_t(id)];
}

std::vector<int> Vocabulary::encode(const std::string& caption) const {
    std::vector<int> out{bos_id};
    for (const auto& tok : tokenize(caption)) out.push_back(id(tok));
    out.push_back(eos_id);
    return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids) {
        if (i == pad_id || i == bos_id || i == eos_id) continue;
        if (!out.empty()) out += ' ';
        out += token(i);
    }
    return out;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ValidationError("vocabulary: cannot open " + path + " for writing");
    out << "relcap-vocab v1\n";
    for (const auto& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("vocabulary: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "relcap-vocab v1")
        throw ValidationError("vocabulary: bad format header in " + path);
    Vocabulary v;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        v.push(line);
    }
    for (int i = 0; i < 4; ++i)
        if (v.size() <= i || v.tokens_[std::size_t(i)] != kReserved[i])
            throw ValidationError("vocabulary: reserved tokens missing or reordered in " + path);
    return v;
}

} // namespace relcap
