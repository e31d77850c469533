#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "incant/errors.hpp"
#include "incant/types.hpp"

namespace incant {

// Fixed word list shared by the text encoder and the masking step. The mask
// word '-' is a required member so masked captions stay tokenizable.
class Vocabulary {
   public:
    static Vocabulary builtin() {
        Vocabulary v;
        static const char* kWords[] = {
            "-",    "a",      "an",     "the",    "b",     "red",    "green", "blue",
            "cyan", "yellow", "purple", "white",  "black", "orange", "gray",  "dot",
            "blob", "square", "disk",   "ring",   "bar",   "cross",  "cat",   "dog",
            "bird", "tree",   "house",  "moon",   "sun",   "star",   "small", "big",
            "tiny", "bright", "dark",   "fuzzy",  "sharp", "left",   "right", "top",
            "low",  "on",     "of",     "and",    "with",  "over",   "under", "near",
        };
        for (const char* w : kWords) v.add(w);
        return v;
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw input_error("vocab: cannot open '" + path + "'");
        Vocabulary v;
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
            if (line.empty()) continue;
            if (v.index_.count(line))
                throw input_error("vocab: duplicate word '" + line + "' in " + path);
            v.add(line);
        }
        if (v.size() == 0) throw input_error("vocab: '" + path + "' has no words");
        if (!v.index_.count("-"))
            throw input_error("vocab: mask word '-' missing from " + path);
        return v;
    }

    int size() const { return static_cast<int>(words_.size()); }
    const std::string& word(int id) const { return words_.at(static_cast<size_t>(id)); }
    int mask_id() const { return index_.at("-"); }

    bool contains(const std::string& w) const { return index_.count(w) != 0; }
    int id_of(const std::string& w) const {
        auto it = index_.find(w);
        if (it == index_.end()) throw input_error("vocab: unknown word '" + w + "'");
        return it->second;
    }

    // Splits on ASCII whitespace; every word must be known. Empty captions and
    // captions longer than n_max are input errors.
    TokenSequence tokenize(const std::string& text, int n_max) const {
        TokenSequence seq;
        std::istringstream in(text);
        std::string w, unknown;
        while (in >> w) {
            auto it = index_.find(w);
            if (it == index_.end()) {
                if (!unknown.empty()) unknown += ", ";
                unknown += "'" + w + "'";
                continue;
            }
            seq.words.push_back(w);
            seq.ids.push_back(it->second);
        }
        if (!unknown.empty()) throw input_error("tokenize: unknown words: " + unknown);
        if (seq.words.empty()) throw input_error("tokenize: empty text");
        if (seq.length() > n_max)
            throw input_error("tokenize: text has " + std::to_string(seq.length()) +
                              " words, limit is " + std::to_string(n_max));
        return seq;
    }

    std::vector<std::string> all_words() const { return words_; }

   private:
    void add(const std::string& w) {
        index_[w] = static_cast<int>(words_.size());
        words_.push_back(w);
    }

    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace incant
