#include "ppg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "ppg/errors.hpp"
#include "ppg/rng.hpp"

namespace ppg {

namespace {

std::uint64_t fnv1a(const std::vector<unsigned char>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// f64 values as little-endian bytes (byte-swapped on big-endian hosts)
void append_f64_le(std::vector<unsigned char>& out, const std::vector<double>& values) {
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    }
}

double read_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

ModelSpec mspec_from_json(const nlohmann::json& j) {
    ModelSpec s = ModelSpec::for_kind(model_kind_from_name(j.at("kind").get<std::string>()));
    if (j.contains("transformer")) {
        const auto& t = j.at("transformer");
        s.transformer.n_layers = t.at("n_layers").get<std::size_t>();
        s.transformer.d_model = t.at("d_model").get<std::size_t>();
        s.transformer.n_heads = t.at("n_heads").get<std::size_t>();
        s.transformer.ff_hidden = t.at("ff_hidden").get<std::size_t>();
        s.transformer.dropout = t.at("dropout").get<double>();
        s.transformer.token_len = t.at("token_len").get<std::size_t>();
        s.transformer.n_tokens = t.at("n_tokens").get<std::size_t>();
        s.transformer.positional_encoding = t.at("positional_encoding").get<bool>();
        s.transformer.grn_blocks = t.at("grn_blocks").get<std::size_t>();
        s.transformer.grn_placement = static_cast<GrnPlacement>(t.at("grn_placement").get<int>());
    }
    if (j.contains("mlp")) {
        const auto& m = j.at("mlp");
        s.mlp.hidden = m.at("hidden").get<std::size_t>();
        s.mlp.n_hidden = m.at("n_hidden").get<std::size_t>();
        s.mlp.dropout = m.at("dropout").get<double>();
        s.mlp.grn_blocks = m.at("grn_blocks").get<std::size_t>();
        s.mlp.grn_width = m.at("grn_width").get<std::size_t>();
    }
    if (j.contains("knn")) s.knn.k = j.at("knn").at("k").get<std::size_t>();
    return s;
}

}  // namespace

void save_checkpoint(const std::string& manifest_path, const std::string& blob_path,
                     Classifier& model, const ModelSpec& mspec,
                     const nlohmann::ordered_json& extra) {
    nlohmann::ordered_json manifest;
    manifest["format"] = "ppg-checkpoint-v1";
    manifest["model"] = mspec.to_json();
    for (const auto& [key, value] : extra.items()) manifest[key] = value;

    std::vector<unsigned char> blob;
    nlohmann::ordered_json index = nlohmann::json::array();
    std::size_t offset = 0;
    for (auto& [name, tensor] : model.named_params()) {
        index.push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
        append_f64_le(blob, tensor.data());
        offset += tensor.numel();
    }
    manifest["params"] = index;
    manifest["blob_file"] = blob_path.substr(blob_path.find_last_of('/') + 1);
    manifest["blob_bytes"] = blob.size();
    manifest["blob_fnv1a"] = fnv1a(blob);

    std::ofstream bf(blob_path, std::ios::binary);
    if (!bf) throw DataError("cannot open for writing: " + blob_path);
    bf.write(reinterpret_cast<const char*>(blob.data()), static_cast<long>(blob.size()));
    if (!bf) throw DataError("write failed: " + blob_path);

    std::ofstream mf(manifest_path);
    if (!mf) throw DataError("cannot open for writing: " + manifest_path);
    mf << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw DataError("cannot open: " + manifest_path);
    nlohmann::ordered_json manifest;
    try {
        manifest = nlohmann::ordered_json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupted checkpoint manifest: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "ppg-checkpoint-v1")
        throw DataError("checkpoint integrity error: unknown format");

    Checkpoint ckpt;
    ckpt.manifest = manifest;
    ckpt.mspec = mspec_from_json(manifest.at("model"));
    Rng rng(0);
    switch (ckpt.mspec.kind) {
        case ModelKind::Transformer:
        case ModelKind::GrnTransformer:
            ckpt.model = std::make_shared<TransformerClassifier>(ckpt.mspec.transformer, rng);
            break;
        case ModelKind::Mlp:
        case ModelKind::GrnMlp:
            ckpt.model = std::make_shared<MlpClassifier>(ckpt.mspec.mlp, rng);
            break;
        case ModelKind::Knn:
            throw DataError("knn models have no checkpoint representation");
    }

    const std::string dir = manifest_path.substr(0, manifest_path.find_last_of('/') + 1);
    const std::string blob_path = dir + manifest.at("blob_file").get<std::string>();
    std::ifstream bf(blob_path, std::ios::binary);
    if (!bf) throw DataError("cannot open: " + blob_path);
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)),
                                    std::istreambuf_iterator<char>());
    if (blob.size() != manifest.at("blob_bytes").get<std::size_t>())
        throw DataError("checkpoint integrity error: blob size mismatch");
    if (fnv1a(blob) != manifest.at("blob_fnv1a").get<std::uint64_t>())
        throw DataError("checkpoint integrity error: blob checksum mismatch");

    auto named = ckpt.model->named_params();
    const auto& index = manifest.at("params");
    if (index.size() != named.size())
        throw DataError("checkpoint integrity error: parameter count mismatch");
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& entry = index[i];
        Tensor& t = named[i].second;
        if (entry.at("name").get<std::string>() != named[i].first)
            throw DataError("checkpoint integrity error: parameter order mismatch at " +
                            named[i].first);
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        if ((offset + t.numel()) * 8 > blob.size())
            throw DataError("checkpoint integrity error: blob too small for " + named[i].first);
        for (std::size_t j = 0; j < t.numel(); ++j)
            t.data()[j] = read_f64_le(blob.data() + (offset + j) * 8);
    }
    return ckpt;
}

}  // namespace ppg
