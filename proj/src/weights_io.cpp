#include "resdecomp/weights_io.hpp"

#include "resdecomp/container.hpp"
#include "resdecomp/errors.hpp"

namespace resdecomp {

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"layers", c.layers}, {"heads", c.heads},   {"d_model", c.d_model},
            {"d_head", c.d_head}, {"d_mlp", c.d_mlp},   {"vocab", c.vocab},
            {"max_seq", c.max_seq}, {"eps", c.eps}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.layers = j.at("layers").get<int>();
        c.heads = j.at("heads").get<int>();
        c.d_model = j.at("d_model").get<int>();
        c.d_head = j.at("d_head").get<int>();
        c.d_mlp = j.at("d_mlp").get<int>();
        c.vocab = j.at("vocab").get<int>();
        c.max_seq = j.at("max_seq").get<int>();
        c.eps = j.at("eps").get<float>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string encode_weights(const TransformerWeights& weights, const std::optional<CheckpointMeta>& meta) {
    weights.validate();
    Container c;
    c.header["format"] = "TDW1";
    c.header["config"] = config_to_json(weights.config);
    if (meta) {
        c.header["step"] = meta->step;
        c.header["train_loss"] = meta->train_loss;
    }
    for_each_tensor(weights, [&](const std::string& name, std::size_t rows, std::size_t cols,
                                 const std::vector<float>& data) {
        std::vector<std::uint64_t> shape{rows};
        if (name.find("gamma") == std::string::npos) shape.push_back(cols);
        c.tensors.push_back({name, std::move(shape), data});
    });
    return encode_container(kWeightsMagic, c);
}

DecodedWeights decode_weights(std::string_view bytes) {
    const Container c = decode_container(kWeightsMagic, bytes);
    if (!c.header.contains("config")) {
        throw FormatError("weights: header has no config");
    }
    DecodedWeights out;
    TransformerWeights& w = out.weights;
    w.config = config_from_json(c.header["config"]);
    const ModelConfig& cfg = w.config;
    const auto d = static_cast<std::size_t>(cfg.d_model);
    w.token_embedding = Matrix(static_cast<std::size_t>(cfg.vocab), d);
    w.position_embedding = Matrix(static_cast<std::size_t>(cfg.max_seq), d);
    w.layers.resize(static_cast<std::size_t>(cfg.layers));

    auto matrix = [&](const std::string& name) {
        const ContainerTensor& t = c.tensor(name);
        if (t.shape.size() != 2) throw FormatError("weights: '" + name + "' must be 2-D");
        return Matrix(t.shape[0], t.shape[1], t.data);
    };
    auto vector = [&](const std::string& name) {
        const ContainerTensor& t = c.tensor(name);
        if (t.shape.size() != 1) throw FormatError("weights: '" + name + "' must be 1-D");
        return t.data;
    };

    w.token_embedding = matrix("token_embedding");
    w.position_embedding = matrix("position_embedding");
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        auto& layer = w.layers[l];
        layer.ln1_gamma = vector(p + "ln1_gamma");
        layer.w_q = matrix(p + "w_q");
        layer.w_k = matrix(p + "w_k");
        layer.w_v = matrix(p + "w_v");
        layer.w_o = matrix(p + "w_o");
        layer.ln2_gamma = vector(p + "ln2_gamma");
        layer.w_up = matrix(p + "w_up");
        layer.w_down = matrix(p + "w_down");
    }
    w.final_gamma = vector("final_gamma");
    w.output_embedding = matrix("output_embedding");
    w.validate();

    if (c.header.contains("step")) {
        out.meta = CheckpointMeta{c.header["step"].get<std::int64_t>(),
                                  c.header.value("train_loss", 0.0)};
    }
    return out;
}

void save_weights(const std::filesystem::path& path, const TransformerWeights& weights,
                  const std::optional<CheckpointMeta>& meta) {
    write_file_bytes(path, encode_weights(weights, meta));
}

DecodedWeights load_weights(const std::filesystem::path& path) {
    return decode_weights(read_file_bytes(path));
}

}  // namespace resdecomp
