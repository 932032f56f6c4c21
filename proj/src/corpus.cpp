#include "echelon/corpus.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>

#include "echelon/errors.hpp"

namespace echelon::corpus {

namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 6> kNoiseSectionNames = {".text", ".data", ".rdata",
                                                           ".rsrc", ".reloc", ".idata"};

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

void put_u16(std::vector<uint8_t>& b, size_t off, uint16_t v) {
    b[off] = v & 0xff;
    b[off + 1] = (v >> 8) & 0xff;
}

void put_u32(std::vector<uint8_t>& b, size_t off, uint32_t v) {
    for (int i = 0; i < 4; ++i) b[off + i] = (v >> (8 * i)) & 0xff;
}

struct PlannedSection {
    std::string name;
    std::vector<uint8_t> payload;
};

std::string label_str(pe::Label l) { return l == pe::Label::Malware ? "malware" : "benign"; }

}  // namespace

std::vector<uint8_t> build_sample(const CorpusSpec& spec, pe::Label label, uint64_t sample_seed) {
    std::mt19937_64 rng(sample_seed);
    std::uniform_int_distribution<int> byte_dist(0, 255);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto fill_noise = [&](std::vector<uint8_t>& buf) {
        for (auto& b : buf) b = unit(rng) < spec.noise ? static_cast<uint8_t>(byte_dist(rng)) : 0;
    };

    std::vector<PlannedSection> planned;
    std::uniform_int_distribution<int> nsec_dist(spec.min_sections, spec.max_sections);
    std::uniform_int_distribution<size_t> size_dist(spec.min_section_size, spec.max_section_size);
    const int n_noise = nsec_dist(rng);
    for (int i = 0; i < n_noise; ++i) {
        PlannedSection s;
        s.name = kNoiseSectionNames[i % kNoiseSectionNames.size()];
        s.payload.resize(size_dist(rng));
        fill_noise(s.payload);
        planned.push_back(std::move(s));
    }

    for (const auto& m : spec.motifs) {
        const double p = label == pe::Label::Malware ? m.p_malware : m.p_benign;
        if (unit(rng) >= p) continue;
        PlannedSection s;
        std::uniform_int_distribution<size_t> pick(0, m.section_names.size() - 1);
        s.name = m.section_names[pick(rng)];
        s.payload.resize(std::max(size_dist(rng), m.pattern.size()));
        fill_noise(s.payload);
        if (!m.pattern.empty()) {
            std::uniform_int_distribution<size_t> at(0, s.payload.size() - m.pattern.size());
            std::copy(m.pattern.begin(), m.pattern.end(), s.payload.begin() + at(rng));
        }
        planned.push_back(std::move(s));
    }

    const uint16_t n_sections = static_cast<uint16_t>(planned.size());
    const size_t table_off = 0x40 + 4 + 20;  // DOS header, PE signature, COFF header
    const size_t headers_end = table_off + 40ul * n_sections;
    const size_t first_raw = (headers_end + 511) / 512 * 512;

    size_t total = first_raw;
    for (const auto& s : planned) total += s.payload.size();

    std::vector<uint8_t> file(total, 0);
    file[0] = 'M';
    file[1] = 'Z';
    put_u32(file, 0x3C, 0x40);  // e_lfanew
    std::memcpy(file.data() + 0x40, "PE\0\0", 4);
    const size_t coff = 0x40 + 4;
    put_u16(file, coff + 0, 0x014c);       // Machine: i386
    put_u16(file, coff + 2, n_sections);   // NumberOfSections
    put_u16(file, coff + 16, 0);           // SizeOfOptionalHeader
    put_u16(file, coff + 18, 0x0102);      // Characteristics

    size_t raw = first_raw;
    uint32_t va = 0x1000;
    for (size_t i = 0; i < planned.size(); ++i) {
        const size_t h = table_off + 40 * i;
        const auto& s = planned[i];
        std::memcpy(file.data() + h, s.name.data(), std::min<size_t>(8, s.name.size()));
        put_u32(file, h + 8, static_cast<uint32_t>(s.payload.size()));   // VirtualSize
        put_u32(file, h + 12, va);                                       // VirtualAddress
        put_u32(file, h + 16, static_cast<uint32_t>(s.payload.size()));  // SizeOfRawData
        put_u32(file, h + 20, static_cast<uint32_t>(raw));               // PointerToRawData
        std::copy(s.payload.begin(), s.payload.end(), file.begin() + raw);
        raw += s.payload.size();
        va += (static_cast<uint32_t>(s.payload.size()) + 0xfff) / 0x1000 * 0x1000;
    }
    return file;
}

namespace {

std::vector<pe::PeSample> generate_samples(const CorpusSpec& spec) {
    std::vector<pe::PeSample> out;
    out.reserve(spec.n_benign + spec.n_malware);
    char id[32];
    for (int i = 0; i < spec.n_benign; ++i) {
        std::snprintf(id, sizeof id, "b%06d", i);
        pe::PeSample s = pe::parse_pe(build_sample(spec, pe::Label::Benign, splitmix64(spec.seed ^ 0x42454eull ^ splitmix64(i))));
        s.id = id;
        s.label = pe::Label::Benign;
        out.push_back(std::move(s));
    }
    for (int i = 0; i < spec.n_malware; ++i) {
        std::snprintf(id, sizeof id, "m%06d", i);
        pe::PeSample s = pe::parse_pe(build_sample(spec, pe::Label::Malware, splitmix64(spec.seed ^ 0x4d41ull ^ splitmix64(i))));
        s.id = id;
        s.label = pe::Label::Malware;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

std::vector<pe::PeSample> generate_in_memory(const CorpusSpec& spec) { return generate_samples(spec); }

std::vector<ManifestEntry> generate(const CorpusSpec& spec, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir / "benign", ec);
    fs::create_directories(out_dir / "malware", ec);
    if (ec) throw IoFailure("cannot create corpus directories under " + out_dir.string());

    std::vector<ManifestEntry> manifest;
    for (const auto& s : generate_samples(spec)) {
        ManifestEntry e;
        e.id = s.id;
        e.label = s.label;
        e.size = s.bytes.size();
        e.path = label_str(s.label) + "/" + s.id + ".bin";
        std::ofstream f(out_dir / e.path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(s.bytes.data()), static_cast<std::streamsize>(s.bytes.size()));
        if (!f) throw IoFailure("cannot write " + (out_dir / e.path).string());
        manifest.push_back(std::move(e));
    }

    std::ofstream m(out_dir / "manifest.csv");
    m << "id,path,label,size\n";
    for (const auto& e : manifest)
        m << e.id << ',' << e.path << ',' << label_str(e.label) << ',' << e.size << '\n';
    if (!m) throw IoFailure("cannot write manifest under " + out_dir.string());
    return manifest;
}

namespace {

std::optional<pe::PeSample> load_one(const fs::path& path, const std::string& id, pe::Label label,
                                     size_t max_bytes) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        std::cerr << "skip (unreadable): " << path << '\n';
        return std::nullopt;
    }
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() > max_bytes) {
        std::cerr << "skip (over size limit): " << path << '\n';
        return std::nullopt;
    }
    try {
        pe::PeSample s = pe::parse_pe(std::move(bytes));
        s.id = id;
        s.label = label;
        return s;
    } catch (const MalformedPe& e) {
        std::cerr << "skip (" << e.what() << "): " << path << '\n';
        return std::nullopt;
    }
}

void sort_by_id(std::vector<pe::PeSample>& set) {
    std::sort(set.begin(), set.end(),
              [](const pe::PeSample& a, const pe::PeSample& b) { return a.id < b.id; });
}

}  // namespace

std::vector<pe::PeSample> ingest_dir(const fs::path& dir, size_t max_bytes) {
    std::vector<pe::PeSample> out;
    for (const auto& [sub, label] :
         {std::pair{fs::path("benign"), pe::Label::Benign}, {fs::path("malware"), pe::Label::Malware}}) {
        const fs::path d = dir / sub;
        if (!fs::is_directory(d)) continue;
        for (const auto& entry : fs::directory_iterator(d)) {
            if (!entry.is_regular_file()) continue;
            if (auto s = load_one(entry.path(), entry.path().stem().string(), label, max_bytes))
                out.push_back(std::move(*s));
        }
    }
    if (out.empty()) throw EmptyDataset("no usable samples under " + dir.string());
    sort_by_id(out);
    return out;
}

std::vector<pe::PeSample> ingest_manifest(const fs::path& manifest_csv, size_t max_bytes) {
    std::ifstream f(manifest_csv);
    if (!f) throw IoFailure("cannot open manifest " + manifest_csv.string());
    const fs::path base = manifest_csv.parent_path();
    std::vector<pe::PeSample> out;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::array<std::string, 4> field;
        size_t start = 0;
        for (int i = 0; i < 4; ++i) {
            const size_t comma = line.find(',', start);
            field[i] = line.substr(start, comma == std::string::npos ? comma : comma - start);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        const pe::Label label = field[2] == "malware" ? pe::Label::Malware : pe::Label::Benign;
        if (auto s = load_one(base / field[1], field[0], label, max_bytes)) out.push_back(std::move(*s));
    }
    if (out.empty()) throw EmptyDataset("no usable samples in " + manifest_csv.string());
    sort_by_id(out);
    return out;
}

}  // namespace echelon::corpus
