#include "echelon/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "echelon/errors.hpp"

namespace echelon {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts are unsupported");

constexpr char kMagic[8] = {'E', 'C', 'H', 'E', 'L', 'O', 'N', '1'};
constexpr int kVersion = 1;

json hyper_to_json(const nn::Hyper& h) {
    return {{"window", h.window},
            {"filters", h.filters},
            {"embed_dim", h.embed_dim},
            {"hidden", h.hidden},
            {"semantic_aware", h.semantic_aware},
            {"section_vocab_size", h.section_vocab_size}};
}

nn::Hyper hyper_from_json(const json& j) {
    nn::Hyper h;
    h.window = j.at("window");
    h.filters = j.at("filters");
    h.embed_dim = j.at("embed_dim");
    h.hidden = j.at("hidden");
    h.semantic_aware = j.at("semantic_aware");
    h.section_vocab_size = j.at("section_vocab_size");
    return h;
}

json shape_of(const nn::Hyper& h, const std::string& name) {
    if (name == "embedding") return {nn::kVocabSize, h.embed_dim};
    if (name == "conv_w" || name == "gate_w") return {h.filters, h.window, h.embed_dim};
    if (name == "conv_b" || name == "gate_b") return {h.filters};
    if (name == "fc_w") return {h.hidden, h.fc_inputs()};
    if (name == "fc_b" || name == "out_w") return {h.hidden};
    return {1};  // out_b
}

json describe_tensors(nn::ParamSet& p, const std::string& prefix, uint64_t& offset) {
    json out = json::array();
    for (const auto& t : nn::tensor_refs(p)) {
        out.push_back({{"name", prefix + "." + t.name},
                       {"shape", shape_of(p.hyper, t.name)},
                       {"offset", offset},
                       {"count", t.data->size()}});
        offset += t.data->size();
    }
    return out;
}

}  // namespace

void save_model(const EchelonModel& model, std::ostream& out) {
    auto& m = const_cast<EchelonModel&>(model);
    uint64_t offset = 0;
    json header;
    header["schema"] = "echelon-model";
    header["version"] = kVersion;
    header["target_fpr"] = model.target_fpr;
    header["thd1"] = model.thd1;
    header["thd2"] = model.thd2;
    header["mode"] = to_string(model.mode);
    header["s_bias"] = model.s_bias;
    header["section_vocab"] = model.section_vocab;
    if (model.boosting_bound)
        header["boosting_bound"] = *model.boosting_bound;
    else
        header["boosting_bound"] = nullptr;
    header["tier1"] = hyper_to_json(model.tier1.hyper);
    json tensors = describe_tensors(m.tier1, "tier1", offset);
    if (model.tier2) {
        header["tier2"] = hyper_to_json(model.tier2->hyper);
        for (auto& t : describe_tensors(*m.tier2, "tier2", offset)) tensors.push_back(t);
    } else {
        header["tier2"] = nullptr;
    }
    header["tensors"] = tensors;

    const std::string text = header.dump();
    const uint32_t len = static_cast<uint32_t>(text.size());
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(text.data(), len);
    auto dump_params = [&out](nn::ParamSet& p) {
        for (const auto& t : nn::tensor_refs(p))
            out.write(reinterpret_cast<const char*>(t.data->data()),
                      static_cast<std::streamsize>(t.data->size() * sizeof(float)));
    };
    dump_params(m.tier1);
    if (m.tier2) dump_params(*m.tier2);
    if (!out) throw IoFailure("model write failed");
}

void save_model(const EchelonModel& model, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path.string() + " for writing");
    save_model(model, f);
}

EchelonModel load_model(std::istream& in) {
    char magic[8];
    uint32_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw IoFailure("not an echelon model file");
    std::string text(len, '\0');
    in.read(text.data(), len);
    const json header = json::parse(text);
    if (header.at("version").get<int>() != kVersion)
        throw IoFailure("unsupported model version");

    EchelonModel m;
    m.target_fpr = header.at("target_fpr");
    m.thd1 = header.at("thd1");
    m.thd2 = header.at("thd2");
    m.mode = tier2_mode_from_string(header.at("mode"));
    m.s_bias = header.at("s_bias").get<std::vector<std::string>>();
    m.section_vocab = header.at("section_vocab").get<std::map<std::string, int>>();
    if (!header.at("boosting_bound").is_null()) m.boosting_bound = header.at("boosting_bound").get<float>();
    m.tier1 = nn::ParamSet::zeros(hyper_from_json(header.at("tier1")));
    if (!header.at("tier2").is_null()) m.tier2 = nn::ParamSet::zeros(hyper_from_json(header.at("tier2")));

    auto read_params = [&in](nn::ParamSet& p) {
        for (const auto& t : nn::tensor_refs(p))
            in.read(reinterpret_cast<char*>(t.data->data()),
                    static_cast<std::streamsize>(t.data->size() * sizeof(float)));
    };
    read_params(m.tier1);
    if (m.tier2) read_params(*m.tier2);
    if (!in) throw IoFailure("truncated model file");
    return m;
}

EchelonModel load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path.string());
    return load_model(f);
}

}  // namespace echelon
