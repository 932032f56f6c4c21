#include "echelon/reference_corpus.hpp"

#include <random>

namespace echelon::corpus {

CorpusSpec reference_spec(int n_benign, int n_malware, uint64_t seed) {
    CorpusSpec spec;
    spec.n_benign = n_benign;
    spec.n_malware = n_malware;
    spec.seed = seed;
    spec.min_sections = 2;
    spec.max_sections = 3;
    spec.min_section_size = 512;
    spec.max_section_size = 1536;
    spec.noise = 1.0;

    // One fixed 64-byte pattern shared by both classes; only the owning
    // section name differs between them.
    std::vector<uint8_t> pattern(64);
    std::mt19937_64 rng(0x6d6f746966ull);
    for (auto& b : pattern) b = static_cast<uint8_t>(rng());

    Motif malware_side, benign_side;
    char name[16];
    for (int i = 0; i < 20; ++i) {
        std::snprintf(name, sizeof name, ".m%02d", i);
        malware_side.section_names.emplace_back(name);
        std::snprintf(name, sizeof name, ".b%02d", i);
        benign_side.section_names.emplace_back(name);
    }
    malware_side.pattern = pattern;
    malware_side.p_malware = 0.9;
    malware_side.p_benign = 0.05;
    benign_side.pattern = pattern;
    benign_side.p_malware = 0.05;
    benign_side.p_benign = 0.9;
    spec.motifs = {malware_side, benign_side};
    return spec;
}

}  // namespace echelon::corpus
