#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "echelon/pe_format.hpp"

namespace echelon::corpus {

// A class-correlated byte pattern. When a motif fires for a sample, one name
// is drawn uniformly from the pool and a section of that name carrying the
// pattern is added to the sample.
struct Motif {
    std::vector<std::string> section_names;
    std::vector<uint8_t> pattern;
    double p_malware = 0.0;  // firing probability given the malware class
    double p_benign = 0.0;
};

struct CorpusSpec {
    int n_benign = 0;
    int n_malware = 0;
    int min_sections = 2;  // baseline noise sections per sample, motifs add more
    int max_sections = 4;
    size_t min_section_size = 1024;
    size_t max_section_size = 4096;
    std::vector<Motif> motifs;
    double noise = 1.0;  // probability a filler byte is uniform random (else 0x00)
    uint64_t seed = 0;
};

struct ManifestEntry {
    std::string id;
    std::string path;  // relative to the manifest's directory
    pe::Label label = pe::Label::Unlabeled;
    size_t size = 0;
};

// Builds one sample fully in memory; generate() and in-process tests share it.
std::vector<uint8_t> build_sample(const CorpusSpec& spec, pe::Label label, uint64_t sample_seed);

// Writes benign/ and malware/ subdirectories plus manifest.csv (id,path,label,size)
// under out_dir. Deterministic for a fixed spec.
std::vector<ManifestEntry> generate(const CorpusSpec& spec, const std::filesystem::path& out_dir);

// Generates the corpus without touching the filesystem.
std::vector<pe::PeSample> generate_in_memory(const CorpusSpec& spec);

inline constexpr size_t kDefaultMaxSampleBytes = 1u << 20;  // 1 MiB

// Labeled ingestion; skips files over max_bytes and files that fail to parse
// (logged to stderr), returns samples sorted by id.
std::vector<pe::PeSample> ingest_dir(const std::filesystem::path& dir,
                                     size_t max_bytes = kDefaultMaxSampleBytes);
std::vector<pe::PeSample> ingest_manifest(const std::filesystem::path& manifest_csv,
                                          size_t max_bytes = kDefaultMaxSampleBytes);

}  // namespace echelon::corpus
