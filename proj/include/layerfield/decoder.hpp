#pragma once

#include <map>
#include <string>
#include <vector>

#include "layerfield/rng.hpp"
#include "layerfield/tape.hpp"

namespace lf {

enum class DensityActivation { kShiftedSoftplus, kSoftplus, kRelu };

// Shared NeRF decoder: four fully connected layers plus a density head fed
// by tri-plane features only and a view-dependent color head. Colors are
// sigmoid-bounded; density is nonnegative by activation.
template <typename T>
struct MlpDecoder {
  int hidden = 32;
  int feature_dim = 27;  // 3C
  int l_feat = 2;
  int l_dir = 4;
  DensityActivation density_act = DensityActivation::kShiftedSoftplus;
  T density_shift = T(-1);

  Tensor<T> w1, b1;          // encoded features -> hidden
  Tensor<T> w2, b2;          // hidden -> hidden
  Tensor<T> sigma_w, sigma_b;  // hidden -> 1
  Tensor<T> w3, b3;          // hidden + encoded dir -> hidden
  Tensor<T> w4, b4;          // hidden -> hidden
  Tensor<T> color_w, color_b;  // hidden -> 3

  int encoded_feature_dim() const { return feature_dim * (1 + 2 * l_feat); }
  int encoded_dir_dim() const { return 3 * (1 + 2 * l_dir); }

  void init(Rng& rng) {
    auto dense = [&rng](int64_t fan_in, int64_t fan_out, double gain) {
      Tensor<T> t({fan_in, fan_out});
      const double std = gain / std::sqrt(double(fan_in));
      for (auto& v : t.data) v = T(std * rng.normal());
      return t;
    };
    const int ef = encoded_feature_dim(), ed = encoded_dir_dim();
    w1 = dense(ef, hidden, std::sqrt(2.0));
    b1 = Tensor<T>::zeros({hidden});
    w2 = dense(hidden, hidden, std::sqrt(2.0));
    b2 = Tensor<T>::zeros({hidden});
    sigma_w = dense(hidden, 1, 1.0);
    sigma_b = Tensor<T>::zeros({1});
    w3 = dense(hidden + ed, hidden, std::sqrt(2.0));
    b3 = Tensor<T>::zeros({hidden});
    w4 = dense(hidden, hidden, std::sqrt(2.0));
    b4 = Tensor<T>::zeros({hidden});
    color_w = dense(hidden, 3, 1.0);
    color_b = Tensor<T>::zeros({3});
  }

  std::vector<std::pair<std::string, Tensor<T>*>> params() {
    return {{"w1", &w1},     {"b1", &b1},         {"w2", &w2},         {"b2", &b2},
            {"sigma_w", &sigma_w}, {"sigma_b", &sigma_b}, {"w3", &w3},   {"b3", &b3},
            {"w4", &w4},     {"b4", &b4},         {"color_w", &color_w}, {"color_b", &color_b}};
  }
  std::vector<std::pair<std::string, const Tensor<T>*>> params() const {
    auto* self = const_cast<MlpDecoder*>(this);
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    for (auto& [n, p] : self->params()) out.emplace_back(n, p);
    return out;
  }
};

template <typename T>
struct DecoderVars {
  std::map<std::string, Var<T>> vars;
  Var<T> at(const std::string& n) const { return vars.at(n); }
};

template <typename T>
DecoderVars<T> decoder_leaves(Tape<T>& tape, MlpDecoder<T>& d, bool trainable) {
  DecoderVars<T> dv;
  for (auto& [name, p] : d.params())
    dv.vars.emplace(name, trainable ? tape.leaf(*p) : tape.constant(*p));
  return dv;
}

template <typename T>
Var<T> apply_density_activation(Var<T> pre, DensityActivation act, T shift) {
  switch (act) {
    case DensityActivation::kShiftedSoftplus: return softplus(offset(pre, shift));
    case DensityActivation::kSoftplus: return softplus(pre);
    default: return relu(pre);
  }
}

// Decode a batch of samples: density from features alone, color from
// features and the encoded view direction. feats is [P, 3C] on tape;
// dir_enc is a constant [P, encoded_dir_dim].
template <typename T>
struct DecodeOut {
  Var<T> sigma;  // [P]
  Var<T> rgb;    // [P, 3]
};

// Hidden layers use SiLU: smooth everywhere, so gradient checks against
// central differences are well posed at any parameter value.
template <typename T>
DecodeOut<T> decode_batch(Tape<T>& tape, const MlpDecoder<T>& d, const DecoderVars<T>& dv,
                          Var<T> feats, Var<T> dir_enc) {
  const int64_t p = feats.shape()[0];
  Var<T> enc = positional_encoding(feats, d.l_feat);
  Var<T> h1 = silu(add_rowvec(matmul(enc, dv.at("w1")), dv.at("b1")));
  Var<T> h2 = silu(add_rowvec(matmul(h1, dv.at("w2")), dv.at("b2")));
  Var<T> sigma_pre = add_rowvec(matmul(h2, dv.at("sigma_w")), dv.at("sigma_b"));
  Var<T> sigma = reshape(apply_density_activation(sigma_pre, d.density_act, d.density_shift), {p});
  Var<T> h3 = silu(add_rowvec(matmul(concat_cols(h2, dir_enc), dv.at("w3")), dv.at("b3")));
  Var<T> h4 = silu(add_rowvec(matmul(h3, dv.at("w4")), dv.at("b4")));
  Var<T> rgb = sigmoid(add_rowvec(matmul(h4, dv.at("color_w")), dv.at("color_b")));
  return {sigma, rgb};
}

}  // namespace lf
