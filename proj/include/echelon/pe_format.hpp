#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace echelon::pe {

enum class Label { Benign, Malware, Unlabeled };

struct SectionEntry {
    std::string name;  // <= 8 chars, NUL-trimmed; "unnamed" when empty
    uint64_t raw_offset = 0;
    uint64_t raw_size = 0;  // clamped so raw_offset + raw_size <= file length
    uint64_t virtual_address = 0;
};

struct PeSample {
    std::string id;
    std::vector<uint8_t> bytes;
    std::vector<SectionEntry> sections;  // sorted by raw_offset, non-overlapping
    Label label = Label::Unlabeled;
};

// Region names for bytes not covered by any section.
inline constexpr std::string_view kHeaderRegion = "header";
inline constexpr std::string_view kGapRegion = "gap";

// Parses the DOS/COFF headers and the section table. Raw ranges reaching past
// the end of the file are clamped (packers routinely lie about sizes); a
// warning is written to stderr. Overlapping sections or broken headers throw
// MalformedPe.
PeSample parse_pe(std::vector<uint8_t> bytes);

// Maps a file offset to the owning region name: a section name, "header" for
// bytes before the first section's raw data, "gap" for uncovered bytes between
// or after sections. Raw ranges are half-open, so the byte at
// raw_offset + raw_size belongs to the following region.
// Throws OffsetOutOfRange for offset >= bytes length.
std::string_view section_of_offset(const PeSample& sample, uint64_t offset);

// Total version used for padded token sequences: offsets at or past the end of
// the raw bytes map to "gap" ("header" when the sample has no bytes at all).
std::string_view region_of_padded_offset(const PeSample& sample, uint64_t offset);

}  // namespace echelon::pe
