#include "resdecomp/decomposition.hpp"

#include <cmath>
#include <regex>

#include "resdecomp/container.hpp"
#include "resdecomp/errors.hpp"

namespace resdecomp {

std::string ComponentId::name() const {
    switch (kind) {
        case Kind::Embedding:
            return "x0";
        case Kind::Head:
            return "L" + std::to_string(layer) + "H" + std::to_string(head);
        case Kind::Mlp:
            return "L" + std::to_string(layer) + "MLP";
    }
    return "?";
}

ComponentId ComponentId::parse(const std::string& text) {
    static const std::regex head_re(R"(L(\d+)H(\d+))");
    static const std::regex mlp_re(R"(L(\d+)MLP)");
    std::smatch m;
    if (text == "x0") return embedding();
    if (std::regex_match(text, m, head_re)) return attention_head(std::stoi(m[1]), std::stoi(m[2]));
    if (std::regex_match(text, m, mlp_re)) return mlp(std::stoi(m[1]));
    throw InputError("unrecognized component id '" + text + "'");
}

void ComponentId::validate(const ModelConfig& config) const {
    const bool ok = kind == Kind::Embedding ||
                    (kind == Kind::Head && layer >= 0 && layer < config.layers && head >= 0 &&
                     head < config.heads) ||
                    (kind == Kind::Mlp && layer >= 0 && layer < config.layers);
    if (!ok) {
        throw IndexError("component " + name() + " out of range for model");
    }
}

std::vector<ComponentId> enumerate_components(const ModelConfig& config, bool include_x0) {
    std::vector<ComponentId> ids;
    ids.reserve(static_cast<std::size_t>(config.component_count()));
    if (include_x0) ids.push_back(ComponentId::embedding());
    for (int l = 0; l < config.layers; ++l) {
        for (int h = 0; h < config.heads; ++h) ids.push_back(ComponentId::attention_head(l, h));
    }
    for (int l = 0; l < config.layers; ++l) ids.push_back(ComponentId::mlp(l));
    return ids;
}

std::size_t write_index(const ModelConfig& config, const ComponentId& id) {
    id.validate(config);
    switch (id.kind) {
        case ComponentId::Kind::Embedding:
            return 0;
        case ComponentId::Kind::Head:
            return 1 + static_cast<std::size_t>(id.layer * config.heads + id.head);
        case ComponentId::Kind::Mlp:
            return 1 + static_cast<std::size_t>(config.layers * config.heads + id.layer);
    }
    return 0;
}

const Vector& component_write(const ResidualWrites& writes, const ComponentId& id) {
    switch (id.kind) {
        case ComponentId::Kind::Embedding:
            return writes.x0;
        case ComponentId::Kind::Head:
            return writes.head(id.layer, id.head);
        case ComponentId::Kind::Mlp:
            return writes.mlp_writes.at(static_cast<std::size_t>(id.layer));
    }
    return writes.x0;
}

ComponentActivations fold_final_layernorm(const ResidualWrites& writes, std::span<const float> gamma,
                                          float eps) {
    if (writes.x0.empty()) {
        throw InputError("fold_final_layernorm: empty residual writes");
    }
    if (gamma.size() != writes.x0.size()) {
        throw DimensionError("fold_final_layernorm: gamma length does not match model width");
    }
    const Vector total = writes.sum();
    const double rms = root_mean_square(total, eps);
    if (!(rms > 0.0)) {
        throw SingularNormError("fold_final_layernorm: residual sum is zero and eps is 0");
    }

    ComponentActivations out;
    out.gamma_hat.resize(gamma.size());
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        out.gamma_hat[i] = static_cast<float>(gamma[i] / rms);
    }
    auto fold = [&](const Vector& z) {
        Vector c(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) c[i] = z[i] * out.gamma_hat[i];
        return c;
    };
    out.ids.push_back(ComponentId::embedding());
    out.activations.push_back(fold(writes.x0));
    for (int l = 0; l < writes.layers; ++l) {
        for (int h = 0; h < writes.heads; ++h) {
            out.ids.push_back(ComponentId::attention_head(l, h));
            out.activations.push_back(fold(writes.head(l, h)));
        }
    }
    for (int l = 0; l < writes.layers; ++l) {
        out.ids.push_back(ComponentId::mlp(l));
        out.activations.push_back(fold(writes.mlp_writes[static_cast<std::size_t>(l)]));
    }
    return out;
}

Matrix select_rows(const Matrix& u, std::span<const TokenId> rows) {
    Matrix out(rows.size(), u.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || static_cast<std::size_t>(rows[r]) >= u.rows()) {
            throw IndexError("select_rows: token id " + std::to_string(rows[r]) + " out of range");
        }
        const auto src = u.row(static_cast<std::size_t>(rows[r]));
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

Vector early_decode(std::span<const float> activation, const Matrix& u_rows) {
    if (u_rows.rows() == 0) {
        throw InputError("early_decode: empty row set");
    }
    return matvec(u_rows, activation);
}

std::size_t component_prediction(std::span<const float> contribution) {
    return argmax(contribution);
}

Vector remove_component_cached(std::span<const float> full, std::span<const float> contribution) {
    if (full.size() != contribution.size()) {
        throw DimensionError("remove_component_cached: shape mismatch");
    }
    Vector out(full.size());
    for (std::size_t i = 0; i < full.size(); ++i) out[i] = full[i] - contribution[i];
    return out;
}

std::span<const float> ContributionCache::contribution(std::size_t example, std::size_t component) const {
    const std::size_t y = num_labels();
    return {values.data() + (example * num_components() + component) * y, y};
}

std::span<const float> ContributionCache::example_offset(std::size_t example) const {
    return {offset.data() + example * num_labels(), num_labels()};
}

Vector ContributionCache::summed(std::size_t example) const {
    const std::size_t y = num_labels();
    std::vector<double> acc(y);
    const auto off = example_offset(example);
    for (std::size_t c = 0; c < y; ++c) acc[c] = off[c];
    for (std::size_t j = 0; j < num_components(); ++j) {
        const auto g = contribution(example, j);
        for (std::size_t c = 0; c < y; ++c) acc[c] += g[c];
    }
    return Vector(acc.begin(), acc.end());
}

void ContributionCache::append(const std::string& id, int gold_label, const ExampleContributions& row) {
    if (row.values.size() != num_components() * num_labels() || row.offset.size() != num_labels()) {
        throw DimensionError("ContributionCache::append: row shape does not match cache");
    }
    example_ids.push_back(id);
    gold.push_back(gold_label);
    values.insert(values.end(), row.values.begin(), row.values.end());
    offset.insert(offset.end(), row.offset.begin(), row.offset.end());
}

void ContributionCache::validate() const {
    if (num_labels() == 0) throw InputError("ContributionCache: no label words");
    if (gold.size() != num_examples()) throw DimensionError("ContributionCache: gold count mismatch");
    if (values.size() != num_examples() * num_components() * num_labels()) {
        throw DimensionError("ContributionCache: value array has wrong length");
    }
    if (offset.size() != num_examples() * num_labels()) {
        throw DimensionError("ContributionCache: offset array has wrong length");
    }
    for (int g : gold) {
        if (g < 0 || static_cast<std::size_t>(g) >= num_labels()) {
            throw IndexError("ContributionCache: gold label out of range");
        }
    }
    if (!all_finite(values) || !all_finite(offset)) {
        throw InputError("ContributionCache: non-finite entry");
    }
}

ExampleContributions decompose_example(const TransformerWeights& weights, std::span<const TokenId> tokens,
                                       std::span<const TokenId> label_words,
                                       std::span<const ComponentId> components) {
    const ForwardResult fwd = forward_decomposed(weights, tokens);
    const ComponentActivations acts =
        fold_final_layernorm(fwd.writes, weights.final_gamma, weights.config.eps);
    const Matrix u_y = select_rows(weights.output_embedding, label_words);
    const std::size_t y = label_words.size();

    ExampleContributions out;
    out.values.reserve(components.size() * y);
    std::vector<bool> used(acts.ids.size(), false);
    for (const ComponentId& id : components) {
        const std::size_t idx = write_index(weights.config, id);
        used[idx] = true;
        const Vector g = early_decode(acts.activations[idx], u_y);
        out.values.insert(out.values.end(), g.begin(), g.end());
    }
    std::vector<double> off(y, 0.0);
    for (std::size_t idx = 0; idx < acts.ids.size(); ++idx) {
        if (used[idx]) continue;
        const Vector g = early_decode(acts.activations[idx], u_y);
        for (std::size_t c = 0; c < y; ++c) off[c] += g[c];
    }
    out.offset.assign(off.begin(), off.end());
    out.label_logits.resize(y);
    for (std::size_t c = 0; c < y; ++c) {
        out.label_logits[c] = fwd.logits[static_cast<std::size_t>(label_words[c])];
    }
    return out;
}

std::string encode_cache(const ContributionCache& cache) {
    cache.validate();
    Container c;
    c.header["format"] = "TDC1";
    nlohmann::json names = nlohmann::json::array();
    for (const auto& id : cache.components) names.push_back(id.name());
    c.header["components"] = names;
    c.header["label_words"] = cache.label_words;
    c.header["example_ids"] = cache.example_ids;
    c.header["gold"] = cache.gold;
    c.tensors.push_back({"values",
                         {cache.num_examples(), cache.num_components(), cache.num_labels()},
                         cache.values});
    c.tensors.push_back({"offset", {cache.num_examples(), cache.num_labels()}, cache.offset});
    return encode_container(kCacheMagic, c);
}

ContributionCache decode_cache(std::string_view bytes) {
    const Container c = decode_container(kCacheMagic, bytes);
    ContributionCache cache;
    try {
        for (const auto& n : c.header.at("components")) cache.components.push_back(ComponentId::parse(n));
        cache.label_words = c.header.at("label_words").get<std::vector<TokenId>>();
        cache.example_ids = c.header.at("example_ids").get<std::vector<std::string>>();
        cache.gold = c.header.at("gold").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("cache header: ") + e.what());
    }
    cache.values = c.tensor("values").data;
    cache.offset = c.tensor("offset").data;
    cache.validate();
    return cache;
}

void save_cache(const std::filesystem::path& path, const ContributionCache& cache) {
    write_file_bytes(path, encode_cache(cache));
}

ContributionCache load_cache(const std::filesystem::path& path) {
    return decode_cache(read_file_bytes(path));
}

}  // namespace resdecomp
