#include "echelon/model.hpp"

#include <stdexcept>

namespace echelon {

std::string to_string(Tier2Mode mode) {
    switch (mode) {
        case Tier2Mode::Section: return "section";
        case Tier2Mode::Block: return "block";
        case Tier2Mode::Semantic: return "semantic";
    }
    return "semantic";
}

Tier2Mode tier2_mode_from_string(const std::string& s) {
    if (s == "section") return Tier2Mode::Section;
    if (s == "block") return Tier2Mode::Block;
    if (s == "semantic") return Tier2Mode::Semantic;
    throw std::invalid_argument("unknown tier-2 mode: " + s);
}

std::map<std::string, int> make_section_vocab(const std::vector<std::string>& s_bias) {
    std::map<std::string, int> vocab;
    int id = 1;
    for (const auto& name : s_bias) vocab.emplace(name, id++);
    return vocab;
}

}  // namespace echelon
