#include "stylealign/checkpoint.hpp"

#include "stylealign/errors.hpp"

#include <fstream>
#include <sstream>

namespace stylealign {

namespace {
constexpr const char *kFormat = "stylealign-checkpoint";
constexpr int kVersion = 1;
}    // namespace

auto checkpoint_to_json(const Checkpoint &ckpt) -> nlohmann::json {
    nlohmann::json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["kind"] = ckpt.kind;
    j["config"] = ckpt.config;
    auto tensors = nlohmann::json::array();
    for (const auto &p : ckpt.params.entries()) {
        tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"data", p.value.values()}});
    }
    j["tensors"] = std::move(tensors);
    return j;
}

auto checkpoint_from_json(const nlohmann::json &j) -> Checkpoint {
    try {
        if (j.at("format").get<std::string>() != kFormat) {
            throw SchemaError("not a stylealign checkpoint");
        }
        if (j.at("version").get<int>() != kVersion) {
            throw SchemaError("unsupported checkpoint version " + j.at("version").dump());
        }
        Checkpoint ckpt;
        ckpt.kind = j.at("kind").get<std::string>();
        ckpt.config = j.at("config");
        for (const auto &t : j.at("tensors")) {
            auto shape = t.at("shape").get<Shape>();
            auto data = t.at("data").get<std::vector<double>>();
            ckpt.params.add(t.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
        }
        return ckpt;
    } catch (const nlohmann::json::exception &e) {
        throw SchemaError(std::string("checkpoint schema: ") + e.what());
    } catch (const DimensionError &e) {
        throw SchemaError(std::string("checkpoint tensor: ") + e.what());
    }
}

void write_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << checkpoint_to_json(ckpt).dump() << '\n';
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

auto read_checkpoint(const std::filesystem::path &path) -> Checkpoint {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

}    // namespace stylealign
