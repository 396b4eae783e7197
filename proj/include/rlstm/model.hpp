#ifndef RLSTM_MODEL_HPP
#define RLSTM_MODEL_HPP

#include "rlstm/dataset.hpp"
#include "rlstm/layers.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace rlstm {

/// Encoder configurations of the ablation study.
///   Baseline: y = LN(x + MSA1(x));  out = LN(y + FFN(y))
///   A:        y = x + MSA1(x);      out = y + FFN(y)
///   B:        y = MSA1(x);          out = y + FFN(y)
///   C:        y = MSA1(x);          out = y + MSA2(y)   (proposed model)
///   D:        y = x + MSA1(x);      out = FFN(y)
enum class Variant { Baseline, A, B, C, D };

inline constexpr std::array<Variant, 5> kAllVariants{Variant::Baseline, Variant::A, Variant::B, Variant::C,
                                                     Variant::D};

/// "baseline", "a", "b", "c", "d".
std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
    Task task = Task::Frequency;
    Variant variant = Variant::C;
    int d_model = 64;
    int numhead = 4;
    double numdrop = 0.00015;
    int numlstm = 256;
    int n_encoder_layers = 1;
    bool share_attention = true;
    std::uint64_t seed = 0;

    int out_dim() const { return output_dim(task); }
    /// Throws ContractError naming the first violated invariant.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Tuned hyperparameters for each task: frequency (4 heads, dropout 0.00015,
/// 256 LSTM units) and radius (2 heads, dropout 0.00054, 160 LSTM units).
ModelConfig default_config(Task task);

/// d_ff of the feed-forward block.
inline int ffn_width(int d_model)
{
    return 4 * d_model;
}

/// Parameter-path prefix of encoder layer `layer`.
std::string encoder_prefix(int layer);

/// One encoder layer's dataflow for `variant`.
template <typename Scalar>
Tensor<Scalar> encoder_forward(const Tensor<Scalar>& x, Variant variant, ParamBinder<Scalar>& p,
                               const std::string& prefix, Index heads, Matrix<Scalar>* attention_out = nullptr)
{
    auto msa1 = [&](const Tensor<Scalar>& in) { return mhsa(in, p, prefix + ".msa1", heads, kSeqLen, attention_out); };
    switch (variant) {
    case Variant::Baseline: {
        Tensor<Scalar> y = layer_norm(add(x, msa1(x)), p, prefix + ".ln1");
        return layer_norm(add(y, ffn(y, p, prefix + ".ffn")), p, prefix + ".ln2");
    }
    case Variant::A: {
        Tensor<Scalar> y = add(x, msa1(x));
        return add(y, ffn(y, p, prefix + ".ffn"));
    }
    case Variant::B: {
        Tensor<Scalar> y = msa1(x);
        return add(y, ffn(y, p, prefix + ".ffn"));
    }
    case Variant::C: {
        Tensor<Scalar> y = msa1(x);
        return add(y, mhsa(y, p, prefix + ".msa2", heads));
    }
    case Variant::D: {
        Tensor<Scalar> y = add(x, msa1(x));
        return ffn(y, p, prefix + ".ffn");
    }
    }
    throw ContractError("encoder_forward: unknown variant");
}

/// Exact parameter counts per owned path (aliases are listed in `aliases`
/// and contribute nothing to the total).
struct ParameterCount {
    std::map<std::string, std::size_t> per_path;
    std::map<std::string, std::string> aliases;
    std::size_t total = 0;
};

/// Closed-form count from the configuration alone (no allocation).
ParameterCount count_parameters(const ModelConfig& cfg);

/// Scalars in one encoder layer of the configuration.
std::size_t encoder_layer_parameters(const ModelConfig& cfg);

/// embed -> +positional encoding -> encoder x n -> LSTM -> dropout -> dense head.
/// Inputs and outputs are in standardized units.
class TransformerLstm {
public:
    /// Builds and initializes the parameters from cfg.seed.
    explicit TransformerLstm(const ModelConfig& cfg);
    /// Adopts existing parameters; throws ContractError if any path is missing,
    /// extra or mis-shaped for the configuration.
    TransformerLstm(const ModelConfig& cfg, ParamStore<double> params);

    const ModelConfig& config() const { return cfg_; }
    ParamStore<double>& params() { return params_; }
    const ParamStore<double>& params() const { return params_; }

    /// Records the forward pass of a B x 3 input batch into g; returns B x out_dim.
    /// `attention_out`, if given, receives the first encoder layer's MSA1 weights.
    Tensor<double> forward(ParamBinder<double>& p, const Tensor<double>& inputs, Mode mode, Rng* rng,
                           Mat* attention_out = nullptr) const;

    /// Eval-mode forward on a standardized B x 3 batch.
    Mat predict(const Mat& inputs) const;

private:
    ModelConfig cfg_;
    ParamStore<double> params_;
};

/// Allocates and initializes a parameter store for cfg.
ParamStore<double> build_parameters(const ModelConfig& cfg);

} // namespace rlstm

#endif // RLSTM_MODEL_HPP
