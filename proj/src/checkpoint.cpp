#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "deltaseg/network.hpp"

namespace deltaseg {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'E', 'G', 'C', 'K', 'P', '1'};
constexpr int kFormatVersion = 1;

nlohmann::json config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["num_classes"] = c.num_classes;
    j["input_h"] = c.input_h;
    j["input_w"] = c.input_w;
    j["encoder_widths"] = c.encoder_widths;
    j["encoder_dilations"] = c.encoder_dilations;
    j["aspp_rates"] = c.aspp_rates;
    j["aspp_dropout"] = c.aspp_dropout;
    j["variant"] = variant_name(c.variant);
    j["width_multiplier"] = c.width_multiplier;
    j["seed"] = c.seed;
    j["se_reduction"] = c.se_reduction;
    j["ca_reduction"] = c.ca_reduction;
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.num_classes = j.at("num_classes").get<int>();
    c.input_h = j.at("input_h").get<int>();
    c.input_w = j.at("input_w").get<int>();
    c.encoder_widths = j.at("encoder_widths").get<std::array<int, 5>>();
    c.encoder_dilations = j.at("encoder_dilations").get<std::array<int, 5>>();
    c.aspp_rates = j.at("aspp_rates").get<std::array<int, 3>>();
    c.aspp_dropout = j.at("aspp_dropout").get<double>();
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.width_multiplier = j.at("width_multiplier").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.se_reduction = j.at("se_reduction").get<int>();
    c.ca_reduction = j.at("ca_reduction").get<int>();
    return c;
}

}  // namespace

void save_checkpoint(DeltaSegModelT<float>& model, const std::string& path) {
    auto params = model.params();

    nlohmann::json header;
    header["format_version"] = kFormatVersion;
    header["config"] = config_to_json(model.config());
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& p : params) {
        nlohmann::json e;
        e["name"] = p.path;
        if (p.tensor) {
            e["shape"] = p.tensor->shape;
            e["size"] = p.tensor->numel();
        } else {
            e["shape"] = std::vector<int>{static_cast<int>(p.buffer->size())};
            e["size"] = p.buffer->size();
        }
        e["offset"] = offset;
        offset += e["size"].get<std::uint64_t>();
        entries.push_back(e);
    }
    header["entries"] = entries;
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    const std::uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& p : params) {
        const float* src = p.tensor ? p.tensor->data.data() : p.buffer->data();
        const std::size_t n = p.tensor ? p.tensor->data.size() : p.buffer->size();
        f.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(n * sizeof(float)));
    }
    if (!f) throw std::runtime_error("failed writing checkpoint: " + path);
}

std::unique_ptr<DeltaSegModelT<float>> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw std::runtime_error("truncated checkpoint header: " + path);

    nlohmann::json header = nlohmann::json::parse(hs);
    if (header.at("format_version").get<int>() != kFormatVersion)
        throw std::runtime_error("unsupported checkpoint format version " +
                                 std::to_string(header.at("format_version").get<int>()));
    auto model = std::make_unique<DeltaSegModelT<float>>(config_from_json(header.at("config")));

    auto params = model->params();
    std::set<std::string> expected;
    for (const auto& p : params) expected.insert(p.path);

    std::set<std::string> present;
    struct Entry {
        std::vector<int> shape;
        std::uint64_t offset, size;
    };
    std::map<std::string, Entry> table;
    for (const auto& e : header.at("entries")) {
        const std::string name = e.at("name").get<std::string>();
        present.insert(name);
        table[name] = {e.at("shape").get<std::vector<int>>(), e.at("offset").get<std::uint64_t>(),
                       e.at("size").get<std::uint64_t>()};
    }

    std::string missing, extra;
    for (const auto& n : expected)
        if (!present.count(n)) missing += (missing.empty() ? "" : ", ") + n;
    for (const auto& n : present)
        if (!expected.count(n)) extra += (extra.empty() ? "" : ", ") + n;
    if (!missing.empty() || !extra.empty())
        throw std::runtime_error("checkpoint entry mismatch" +
                                 (missing.empty() ? std::string() : "; missing: " + missing) +
                                 (extra.empty() ? std::string() : "; unexpected: " + extra));

    const std::streampos payload = f.tellg();
    for (auto& p : params) {
        const Entry& e = table.at(p.path);
        float* dst;
        std::size_t n;
        std::vector<int> shape;
        if (p.tensor) {
            dst = p.tensor->data.data();
            n = p.tensor->data.size();
            shape = p.tensor->shape;
        } else {
            dst = p.buffer->data();
            n = p.buffer->size();
            shape = {static_cast<int>(p.buffer->size())};
        }
        if (e.shape != shape)
            throw std::runtime_error("checkpoint entry '" + p.path + "' has shape " + shape_str(e.shape) +
                                     ", model expects " + shape_str(shape));
        f.seekg(payload + static_cast<std::streamoff>(e.offset * sizeof(float)));
        f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(float)));
        if (!f) throw std::runtime_error("truncated checkpoint payload at entry '" + p.path + "'");
    }
    return model;
}

}  // namespace deltaseg
