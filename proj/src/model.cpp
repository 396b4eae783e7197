#include "rlstm/model.hpp"

#include "rlstm/errors.hpp"

namespace rlstm {

std::string to_string(Variant v)
{
    switch (v) {
    case Variant::Baseline:
        return "baseline";
    case Variant::A:
        return "a";
    case Variant::B:
        return "b";
    case Variant::C:
        return "c";
    case Variant::D:
        return "d";
    }
    return "?";
}

Variant parse_variant(const std::string& name)
{
    for (Variant v : kAllVariants)
        if (to_string(v) == name)
            return v;
    throw ContractError("unknown variant '" + name + "' (expected baseline, a, b, c or d)");
}

void ModelConfig::validate() const
{
    if (d_model <= 0 || d_model % 2 != 0)
        throw ContractError("ModelConfig: d_model must be positive and even, got " + std::to_string(d_model));
    if (numhead <= 0 || d_model % numhead != 0)
        throw ContractError("ModelConfig: d_model mod numhead must be 0 (d_model=" + std::to_string(d_model) +
                            ", numhead=" + std::to_string(numhead) + ")");
    if (!(numdrop >= 0.0 && numdrop < 1.0))
        throw ContractError("ModelConfig: numdrop must lie in [0, 1), got " + std::to_string(numdrop));
    if (numlstm < 1)
        throw ContractError("ModelConfig: numLSTM must be at least 1, got " + std::to_string(numlstm));
    if (n_encoder_layers < 1)
        throw ContractError("ModelConfig: n_encoder_layers must be at least 1, got " +
                            std::to_string(n_encoder_layers));
}

ModelConfig default_config(Task task)
{
    ModelConfig cfg;
    cfg.task = task;
    if (task == Task::Frequency) {
        cfg.numhead = 4;
        cfg.numdrop = 0.00015;
        cfg.numlstm = 256;
    } else {
        cfg.numhead = 2;
        cfg.numdrop = 0.00054;
        cfg.numlstm = 160;
    }
    return cfg;
}

std::string encoder_prefix(int layer)
{
    return "encoder." + std::to_string(layer);
}

namespace {

bool has_ffn(Variant v)
{
    return v != Variant::C;
}

bool has_layer_norm(Variant v)
{
    return v == Variant::Baseline;
}

} // namespace

ParamStore<double> build_parameters(const ModelConfig& cfg)
{
    cfg.validate();
    const Index d = cfg.d_model;
    Rng rng(derive_seed(cfg.seed, "init"));
    ParamStore<double> store;
    init_embedding(store, "embed", d, rng);
    for (int l = 0; l < cfg.n_encoder_layers; ++l) {
        const std::string pre = encoder_prefix(l);
        init_mhsa(store, pre + ".msa1", d, rng);
        if (cfg.variant == Variant::C) {
            if (cfg.share_attention)
                alias_mhsa(store, pre + ".msa2", pre + ".msa1");
            else
                init_mhsa(store, pre + ".msa2", d, rng);
        }
        if (has_ffn(cfg.variant))
            init_ffn(store, pre + ".ffn", d, ffn_width(cfg.d_model), rng);
        if (has_layer_norm(cfg.variant)) {
            init_layer_norm(store, pre + ".ln1", d);
            init_layer_norm(store, pre + ".ln2", d);
        }
    }
    init_lstm(store, "lstm", d, cfg.numlstm, rng);
    init_linear(store, "head", cfg.numlstm, cfg.out_dim(), rng);
    return store;
}

ParameterCount count_parameters(const ModelConfig& cfg)
{
    cfg.validate();
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    const std::size_t dff = static_cast<std::size_t>(ffn_width(cfg.d_model));
    const std::size_t H = static_cast<std::size_t>(cfg.numlstm);
    const std::size_t out = static_cast<std::size_t>(cfg.out_dim());
    ParameterCount c;
    auto put = [&c](const std::string& path, std::size_t n) { c.per_path[path] = n; };

    put("embed.w", 3 * d);
    put("embed.b", 3 * d);
    for (int l = 0; l < cfg.n_encoder_layers; ++l) {
        const std::string pre = encoder_prefix(l);
        for (const char* name : {"q", "k", "v", "o"}) {
            put(pre + ".msa1.w_" + name, d * d);
            put(pre + ".msa1.b_" + name, d);
            if (cfg.variant == Variant::C) {
                if (cfg.share_attention) {
                    c.aliases[pre + ".msa2.w_" + name] = pre + ".msa1.w_" + name;
                    c.aliases[pre + ".msa2.b_" + name] = pre + ".msa1.b_" + name;
                } else {
                    put(pre + ".msa2.w_" + name, d * d);
                    put(pre + ".msa2.b_" + name, d);
                }
            }
        }
        if (has_ffn(cfg.variant)) {
            put(pre + ".ffn.fc1.w", d * dff);
            put(pre + ".ffn.fc1.b", dff);
            put(pre + ".ffn.fc2.w", dff * d);
            put(pre + ".ffn.fc2.b", d);
        }
        if (has_layer_norm(cfg.variant))
            for (const char* ln : {".ln1", ".ln2"}) {
                put(pre + ln + ".gain", d);
                put(pre + ln + ".bias", d);
            }
    }
    put("lstm.w_ih", d * 4 * H);
    put("lstm.w_hh", H * 4 * H);
    put("lstm.b", 4 * H);
    put("head.w", H * out);
    put("head.b", out);
    for (const auto& [path, n] : c.per_path)
        c.total += n;
    return c;
}

std::size_t encoder_layer_parameters(const ModelConfig& cfg)
{
    ModelConfig one = cfg;
    one.n_encoder_layers = 1;
    const auto counts = count_parameters(one);
    const std::string pre = encoder_prefix(0) + ".";
    std::size_t n = 0;
    for (const auto& [path, k] : counts.per_path)
        if (path.rfind(pre, 0) == 0)
            n += k;
    return n;
}

TransformerLstm::TransformerLstm(const ModelConfig& cfg) : cfg_(cfg), params_(build_parameters(cfg)) {}

TransformerLstm::TransformerLstm(const ModelConfig& cfg, ParamStore<double> params)
    : cfg_(cfg), params_(std::move(params))
{
    const ParamStore<double> ref = build_parameters(cfg);
    for (const auto& path : ref.paths()) {
        if (!params_.contains(path) || params_.is_alias(path))
            throw ContractError("model parameters: missing weight '" + path + "'");
        const auto& want = ref.at(path).value;
        const auto& got = params_.at(path).value;
        if (want.rows() != got.rows() || want.cols() != got.cols())
            throw ContractError("model parameters: weight '" + path + "' has shape " +
                                shape_str(got.rows(), got.cols()) + ", expected " +
                                shape_str(want.rows(), want.cols()));
    }
    for (const auto& path : params_.paths())
        if (!ref.contains(path) || ref.is_alias(path))
            throw ContractError("model parameters: unexpected weight '" + path + "'");
    if (params_.aliases() != ref.aliases())
        throw ContractError("model parameters: shared-weight layout does not match the configuration");
}

Tensor<double> TransformerLstm::forward(ParamBinder<double>& p, const Tensor<double>& inputs, Mode mode, Rng* rng,
                                        Mat* attention_out) const
{
    Tensor<double> x = embed(inputs, p, "embed");
    x = add_positional_encoding(x, kSeqLen);
    for (int l = 0; l < cfg_.n_encoder_layers; ++l)
        x = encoder_forward(x, cfg_.variant, p, encoder_prefix(l), cfg_.numhead, l == 0 ? attention_out : nullptr);
    const LstmOutput<double> lstm = lstm_forward(x, p, "lstm", cfg_.numlstm);
    const Tensor<double> h = dropout(lstm.hidden, cfg_.numdrop, mode, rng);
    return dense_head(h, p, "head");
}

Mat TransformerLstm::predict(const Mat& inputs) const
{
    if (inputs.rows() == 0)
        return Mat(0, cfg_.out_dim());
    Graph<double> g;
    // Frozen binding only creates read-only views of the weights.
    ParamBinder<double> p(g, const_cast<ParamStore<double>&>(params_), /*frozen=*/true);
    return forward(p, g.view(inputs), Mode::Eval, nullptr).value();
}

} // namespace rlstm
