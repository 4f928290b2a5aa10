#include "lvdiag/segnet.hpp"

#include "lvdiag/tensor/ltsr.hpp"

#include <json.hpp>

#include <fstream>

namespace lvdiag::segnet {

void save_checkpoint(const std::filesystem::path& dir, const SegNetParams& params) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["format"] = "lvdiag-segnet";
    j["levels"] = params.arch.levels;
    j["base_channels"] = params.arch.base_channels;
    j["seed"] = params.seed;
    j["epoch"] = params.epoch;
    j["input_shape"] = params.input_shape;
    auto& list = j["parameters"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < params.names.size(); ++i) {
        const std::string file = params.names[i] + ".ltsr";
        save_ltsr(dir / file, params.tensors[i]);
        list.push_back({{"name", params.names[i]}, {"file", file}, {"shape", params.tensors[i].shape()}});
    }
    std::ofstream os(dir / "model.json");
    if (!os) throw std::runtime_error("segnet: cannot write " + (dir / "model.json").string());
    os << j.dump(2) << '\n';
}

SegNetParams load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream is(dir / "model.json");
    if (!is) throw std::runtime_error("segnet: cannot open " + (dir / "model.json").string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("segnet: malformed model.json: " + std::string(e.what()));
    }
    if (j.value("format", "") != "lvdiag-segnet") throw std::runtime_error("segnet: model.json is not a segnet checkpoint");
    Architecture arch{j.at("levels").get<std::size_t>(), j.at("base_channels").get<std::size_t>()};
    SegNetParams p = build(arch, j.at("seed").get<std::uint64_t>());
    p.epoch = j.at("epoch").get<std::size_t>();
    p.input_shape = j.at("input_shape").get<Shape>();
    const auto& list = j.at("parameters");
    if (list.size() != p.names.size())
        throw std::runtime_error("segnet: checkpoint has " + std::to_string(list.size()) + " parameters, expected " +
                                 std::to_string(p.names.size()));
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i].at("name").get<std::string>() != p.names[i])
            throw std::runtime_error("segnet: parameter " + std::to_string(i) + " is " +
                                     list[i].at("name").get<std::string>() + ", expected " + p.names[i]);
        Tensor t = load_ltsr(dir / list[i].at("file").get<std::string>());
        if (t.shape() != p.tensors[i].shape())
            throw ShapeError("segnet: parameter " + p.names[i] + " has shape " + shape_str(t.shape()) + ", expected " +
                             shape_str(p.tensors[i].shape()));
        p.tensors[i] = std::move(t);
    }
    return p;
}

} // namespace lvdiag::segnet
