#include "echelon/pe_format.hpp"

#include <algorithm>
#include <cstring>
#include <iostream>

#include "echelon/errors.hpp"

namespace echelon::pe {

namespace {

constexpr size_t kDosHeaderSize = 64;
constexpr size_t kElfanewOffset = 0x3C;
constexpr size_t kCoffHeaderSize = 20;
constexpr size_t kSectionHeaderSize = 40;

uint16_t read_u16(const std::vector<uint8_t>& b, size_t off) {
    return static_cast<uint16_t>(b[off] | (b[off + 1] << 8));
}

uint32_t read_u32(const std::vector<uint8_t>& b, size_t off) {
    return static_cast<uint32_t>(b[off]) | (static_cast<uint32_t>(b[off + 1]) << 8) |
           (static_cast<uint32_t>(b[off + 2]) << 16) | (static_cast<uint32_t>(b[off + 3]) << 24);
}

}  // namespace

PeSample parse_pe(std::vector<uint8_t> bytes) {
    const size_t len = bytes.size();
    if (len < kDosHeaderSize) throw MalformedPe("file shorter than DOS header");
    if (bytes[0] != 'M' || bytes[1] != 'Z') throw MalformedPe("missing MZ magic");

    const uint32_t e_lfanew = read_u32(bytes, kElfanewOffset);
    if (static_cast<uint64_t>(e_lfanew) + 4 + kCoffHeaderSize > len)
        throw MalformedPe("e_lfanew beyond file");
    if (std::memcmp(bytes.data() + e_lfanew, "PE\0\0", 4) != 0)
        throw MalformedPe("missing PE signature");

    const size_t coff = e_lfanew + 4;
    const uint16_t n_sections = read_u16(bytes, coff + 2);
    const uint16_t opt_size = read_u16(bytes, coff + 16);

    const uint64_t table = static_cast<uint64_t>(coff) + kCoffHeaderSize + opt_size;
    if (table + static_cast<uint64_t>(n_sections) * kSectionHeaderSize > len)
        throw MalformedPe("section-header region beyond file");

    PeSample sample;
    sample.bytes = std::move(bytes);
    sample.sections.reserve(n_sections);
    for (uint16_t i = 0; i < n_sections; ++i) {
        const size_t h = table + static_cast<size_t>(i) * kSectionHeaderSize;
        SectionEntry e;
        size_t name_len = 0;
        while (name_len < 8 && sample.bytes[h + name_len] != 0) ++name_len;
        e.name.assign(reinterpret_cast<const char*>(sample.bytes.data() + h), name_len);
        if (e.name.empty()) e.name = "unnamed";
        e.virtual_address = read_u32(sample.bytes, h + 12);
        e.raw_size = read_u32(sample.bytes, h + 16);
        e.raw_offset = read_u32(sample.bytes, h + 20);
        if (e.raw_offset >= len) {
            if (e.raw_size != 0)
                std::cerr << "warning: section " << e.name << " raw data starts past end of file, dropping range\n";
            e.raw_size = 0;
        } else if (e.raw_offset + e.raw_size > len) {
            std::cerr << "warning: section " << e.name << " raw size exceeds file, clamping\n";
            e.raw_size = len - e.raw_offset;
        }
        sample.sections.push_back(std::move(e));
    }

    std::stable_sort(sample.sections.begin(), sample.sections.end(),
                     [](const SectionEntry& a, const SectionEntry& b) { return a.raw_offset < b.raw_offset; });

    uint64_t prev_end = 0;
    bool have_prev = false;
    for (const auto& s : sample.sections) {
        if (s.raw_size == 0) continue;
        if (have_prev && s.raw_offset < prev_end) throw MalformedPe("overlapping section raw ranges");
        prev_end = s.raw_offset + s.raw_size;
        have_prev = true;
    }
    return sample;
}

std::string_view section_of_offset(const PeSample& sample, uint64_t offset) {
    if (offset >= sample.bytes.size())
        throw OffsetOutOfRange("offset " + std::to_string(offset) + " >= file length " +
                               std::to_string(sample.bytes.size()));
    bool seen_section = false;
    for (const auto& s : sample.sections) {
        if (s.raw_size == 0) continue;
        if (offset < s.raw_offset) return seen_section ? kGapRegion : kHeaderRegion;
        if (offset < s.raw_offset + s.raw_size) return s.name;
        seen_section = true;
    }
    return seen_section ? kGapRegion : kHeaderRegion;
}

std::string_view region_of_padded_offset(const PeSample& sample, uint64_t offset) {
    if (sample.bytes.empty()) return kHeaderRegion;
    if (offset >= sample.bytes.size()) return kGapRegion;
    return section_of_offset(sample, offset);
}

}  // namespace echelon::pe
