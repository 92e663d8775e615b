#include "cuci/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cuci/errors.hpp"

namespace cuci {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'C', 'U', 'C', 'I', 'C', 'K', 'P', 'T'};

}  // namespace

void save_checkpoint(CuciNet& model, const TrainConfig& config, const std::filesystem::path& path) {
    using nlohmann::json;
    json registry = json::array();
    std::vector<torch::Tensor> blobs;
    std::uint64_t offset = 0;
    for (const auto& item : model->named_parameters(true)) {
        auto t = item.value().detach().to(torch::kCPU, torch::kFloat).contiguous();
        registry.push_back({{"name", item.key()}, {"shape", t.sizes().vec()}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(t.numel()) * sizeof(float);
        blobs.push_back(std::move(t));
    }
    const json header{{"format_version", 1}, {"config", config}, {"parameters", registry}, {"data_bytes", offset}};
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError(fmt::format("cannot write checkpoint {}", path.string()));
    const std::uint64_t header_len = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : blobs)
        out.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw LoadError(fmt::format("short write to {}", path.string()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    using nlohmann::json;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(fmt::format("missing file {}", path.string()));
    char magic[8];
    std::uint64_t header_len = 0;
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw SchemaError(fmt::format("{} is not a checkpoint", path.string()));
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw SchemaError(fmt::format("{}: truncated header", path.string()));

    json header;
    LoadedCheckpoint loaded;
    try {
        header = json::parse(text);
        from_json(header.at("config"), loaded.config);
    } catch (const json::exception& e) {
        throw SchemaError(fmt::format("{}: malformed header: {}", path.string(), e.what()));
    }
    loaded.config.validate();
    loaded.model = CuciNet(loaded.config.model);

    const std::uint64_t data_bytes = header.value("data_bytes", std::uint64_t{0});
    std::vector<char> data(data_bytes);
    in.read(data.data(), static_cast<std::streamsize>(data_bytes));
    if (!in) throw SchemaError(fmt::format("{}: truncated parameter data", path.string()));

    auto params = loaded.model->named_parameters(true);
    const auto& registry = header.at("parameters");
    if (registry.size() != params.size())
        throw SchemaError(fmt::format("{}: {} parameters stored, config expects {}", path.string(), registry.size(),
                                      params.size()));
    torch::NoGradGuard guard;
    for (const auto& entry : registry) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        const auto offset = entry.at("offset").get<std::uint64_t>();
        auto* param = params.find(name);
        if (param == nullptr) throw SchemaError(fmt::format("{}: unknown parameter '{}'", path.string(), name));
        if (param->sizes().vec() != shape)
            throw SchemaError(fmt::format("{}: parameter '{}' shape mismatch against config", path.string(), name));
        const auto bytes = static_cast<std::uint64_t>(param->numel()) * sizeof(float);
        if (offset + bytes > data_bytes)
            throw SchemaError(fmt::format("{}: parameter '{}' overruns the data block", path.string(), name));
        auto src = torch::from_blob(data.data() + offset, shape, torch::kFloat);
        param->copy_(src);
    }
    return loaded;
}

ParameterSnapshot snapshot_parameters(const torch::nn::Module& model) {
    ParameterSnapshot out;
    for (const auto& p : model.parameters(true)) out.push_back(p.detach().clone());
    return out;
}

void restore_parameters(torch::nn::Module& model, const ParameterSnapshot& snapshot) {
    auto params = model.parameters(true);
    if (params.size() != snapshot.size()) throw PreconditionError("restore_parameters: snapshot does not match model");
    torch::NoGradGuard guard;
    for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(snapshot[i]);
}

}  // namespace cuci
