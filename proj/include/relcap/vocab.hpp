#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace relcap {

/// Token/id bijection with fixed reserved ids. Built from lowercased
/// whitespace tokens with a minimum corpus count; ids are assigned by
/// frequency (descending), ties broken lexicographically, so the mapping
/// is stable across runs on the same corpus.
class Vocabulary {
  public:
    static constexpr int pad_id = 0;
    static constexpr int bos_id = 1;
    static constexpr int eos_id = 2;
    static constexpr int unk_id = 3;

    static Vocabulary build(const std::vector<std::string>& captions, int min_count = 5);

    static std::vector<std::string> tokenize(const std::string& text);

    int id(const std::string& token) const;
    const std::string& token(int id) const;
    int size() const { return int(tokens_.size()); }

    /// Caption text -> [<S>, w1.., <E>]; unknown words map to <UNK>.
    std::vector<int> encode(const std::string& caption) const;
    /// Id sequence -> text, dropping reserved tokens.
    std::string decode(const std::vector<int>& ids) const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;

    void push(const std::string& token);
};

} // namespace relcap
