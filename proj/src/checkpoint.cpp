#include "satseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

namespace satseg::checkpoint {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'T', 'S', 'E', 'G', 'C', 'K'};

nlohmann::ordered_json config_to_json(const model::ModelConfig& c) {
    nlohmann::ordered_json j;
    j["vocab_size"] = c.vocab_size;
    j["dim"] = c.dim;
    j["n_layers"] = c.n_layers;
    j["n_heads"] = c.n_heads;
    j["ffn_dim"] = c.ffn_dim;
    j["max_context"] = c.max_context;
    j["lookahead_total"] = c.lookahead_total;
    j["lookahead_per_layer"] = c.lookahead_per_layer;
    j["aux_vocab"] = c.aux_vocab;
    return j;
}

model::ModelConfig config_from_json(const nlohmann::json& j) {
    model::ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<size_t>();
    c.dim = j.at("dim").get<size_t>();
    c.n_layers = j.at("n_layers").get<size_t>();
    c.n_heads = j.at("n_heads").get<size_t>();
    c.ffn_dim = j.at("ffn_dim").get<size_t>();
    c.max_context = j.at("max_context").get<size_t>();
    c.lookahead_total = j.at("lookahead_total").get<int>();
    c.lookahead_per_layer = j.at("lookahead_per_layer").get<int>();
    c.aux_vocab = j.at("aux_vocab").get<size_t>();
    return c;
}

void write_u64_le(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f32_le(std::vector<unsigned char>& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    out.push_back(static_cast<unsigned char>(bits & 0xFF));
    out.push_back(static_cast<unsigned char>((bits >> 8) & 0xFF));
    out.push_back(static_cast<unsigned char>((bits >> 16) & 0xFF));
    out.push_back(static_cast<unsigned char>((bits >> 24) & 0xFF));
}

float read_f32_le(const unsigned char* p) {
    uint32_t bits = static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
                    static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

void save(const std::string& path, const model::ModelParams& params, const tokenize::Tokenizer& tok,
          const Meta& meta) {
    nlohmann::ordered_json manifest;
    manifest["format"] = kFormatTag;
    manifest["config"] = config_to_json(params.config);
    manifest["aux_token_ids"] = params.aux_token_ids;
    if (params.lora) {
        nlohmann::ordered_json lj;
        lj["rank"] = params.lora->rank;
        lj["scale"] = params.lora->scale;
        std::vector<std::string> targets;
        for (auto t : params.lora->targets)
            targets.push_back(t == model::LoraTarget::Query
                                  ? "query"
                                  : (t == model::LoraTarget::Value ? "value" : "ffn_intermediate"));
        lj["targets"] = targets;
        manifest["lora"] = lj;
    }
    manifest["tokenizer"] = nlohmann::ordered_json::parse(tok.to_json());
    manifest["meta"]["stage"] = meta.stage;
    manifest["meta"]["default_alpha"] = meta.default_alpha;
    if (meta.tuned_alpha) manifest["meta"]["tuned_alpha"] = *meta.tuned_alpha;

    std::vector<unsigned char> payload;
    nlohmann::ordered_json tensors;
    model::for_each_tensor(params, [&](const std::string& name, const Mat& m) {
        nlohmann::ordered_json t;
        t["shape"] = std::vector<size_t>{m.rows, m.cols};
        t["dtype"] = "f32";
        t["offset"] = payload.size();
        t["nbytes"] = m.size() * 4;
        tensors[name] = t;
        for (double d : m.v) write_f32_le(payload, static_cast<float>(d));
    });
    manifest["tensors"] = std::move(tensors);

    const std::string mjson = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 8);
    write_u64_le(f, mjson.size());
    f.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
    f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!f) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) throw DataError("not a satseg checkpoint: " + path);
    const uint64_t mlen = read_u64_le(f);
    std::string mjson(mlen, '\0');
    f.read(mjson.data(), static_cast<std::streamsize>(mlen));
    if (!f) throw DataError("truncated checkpoint manifest: " + path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mjson);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad checkpoint manifest: ") + e.what());
    }
    if (manifest.value("format", "") != std::string(kFormatTag))
        throw DataError("unsupported checkpoint format tag in " + path);

    std::vector<unsigned char> payload((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Checkpoint ck;
    ck.params = model::make_params(config_from_json(manifest.at("config")));
    ck.params.aux_token_ids = manifest.value("aux_token_ids", std::vector<int>{});
    if (manifest.contains("lora")) {
        model::LoraSpec spec;
        spec.rank = manifest["lora"].at("rank").get<size_t>();
        spec.scale = manifest["lora"].at("scale").get<double>();
        spec.targets.clear();
        for (const auto& t : manifest["lora"].at("targets")) {
            const std::string s = t.get<std::string>();
            if (s == "query") spec.targets.push_back(model::LoraTarget::Query);
            else if (s == "value") spec.targets.push_back(model::LoraTarget::Value);
            else if (s == "ffn_intermediate") spec.targets.push_back(model::LoraTarget::FfnIntermediate);
            else throw DataError("checkpoint: unknown lora target '" + s + "'");
        }
        model::attach_lora(ck.params, spec, 0);
    }

    const auto& tensors = manifest.at("tensors");
    model::for_each_tensor(ck.params, [&](const std::string& name, Mat& m) {
        if (!tensors.contains(name)) throw DataError("checkpoint missing tensor '" + name + "'");
        const auto& t = tensors.at(name);
        const auto shape = t.at("shape").get<std::vector<size_t>>();
        if (shape.size() != 2 || shape[0] != m.rows || shape[1] != m.cols)
            throw DataError("checkpoint tensor '" + name + "' has unexpected shape");
        const size_t offset = t.at("offset").get<size_t>();
        if (offset + m.size() * 4 > payload.size()) throw DataError("checkpoint payload truncated at '" + name + "'");
        for (size_t i = 0; i < m.size(); ++i)
            m.v[i] = static_cast<double>(read_f32_le(payload.data() + offset + i * 4));
    });

    ck.tokenizer = tokenize::Tokenizer::from_json(manifest.at("tokenizer").dump());
    ck.meta.stage = manifest.at("meta").value("stage", "init");
    ck.meta.default_alpha = manifest.at("meta").value("default_alpha", 0.025);
    if (manifest.at("meta").contains("tuned_alpha")) ck.meta.tuned_alpha = manifest["meta"]["tuned_alpha"].get<double>();
    return ck;
}

}  // namespace satseg::checkpoint
