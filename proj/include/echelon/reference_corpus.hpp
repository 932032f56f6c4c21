#pragma once

#include "echelon/corpus.hpp"

namespace echelon::corpus {

// The reference synthetic corpus: a shared benign/malware byte motif whose
// only discriminating signal is the section it lives in. Each class plants the
// motif in one of twenty class-specific section names with probability 0.9
// (0.05 for the opposite class), so section identity, not byte content,
// separates the classes.
CorpusSpec reference_spec(int n_benign, int n_malware, uint64_t seed);

}  // namespace echelon::corpus
