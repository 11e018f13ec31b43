// Copyright 2026 the n4mc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "n4mc/models.hpp"

#include <cmath>

namespace n4mc {

ModelConfig ModelConfig::for_resolution(int k, int lambda_width) {
    ModelConfig c;
    c.k = k;
    switch (k) {
        case 32:
            // Scaled-down fixture variant (three stages, thin channels).
            c.kprime = 4;
            c.d = 16;
            c.stem_stride = 2;
            c.enc_channels = {32, 32, 16};
            c.enc_blocks = {1, 1, 1};
            c.dec_schedule = {24, 16, 12, 8};
            c.dec_upsamples = 3;
            c.lambda_width = 16;
            break;
        case 64:
            c.kprime = 4;
            c.d = 64;
            c.stem_stride = 2;
            c.enc_channels = {64, 64, 64, 16};
            c.enc_blocks = {2, 2, 2, 2};
            c.dec_schedule = {32, 24, 16, 12, 8};
            c.dec_upsamples = 4;
            c.lambda_width = 16;
            break;
        case 128:
            c.kprime = 8;
            c.d = 16;
            c.stem_stride = 2;
            c.enc_channels = {64, 64, 64, 16};
            c.enc_blocks = {2, 2, 2, 2};
            c.dec_schedule = {48, 36, 24, 16, 12};
            c.dec_upsamples = 4;
            c.lambda_width = 24;
            break;
        case 256:
            c.kprime = 8;
            c.d = 32;
            c.stem_stride = 4;
            c.enc_channels = {64, 64, 64, 16};
            c.enc_blocks = {4, 2, 2, 2};
            c.dec_schedule = {64, 48, 32, 24, 16};
            c.dec_upsamples = 5;
            c.lambda_width = 32;
            break;
        default:
            throw ValidationError("unsupported resolution k=" + std::to_string(k) +
                                  " (expected 32, 64, 128 or 256)");
    }
    if (lambda_width > 0) c.lambda_width = lambda_width;
    if (c.lambda_width % c.heads != 0)
        throw ValidationError("transformer width not divisible by head count");
    return c;
}

uint64_t ModelConfig::fingerprint() const {
    std::string s = "k=" + std::to_string(k) + ";kp=" + std::to_string(kprime) +
                    ";d=" + std::to_string(d) + ";stem=" + std::to_string(stem_stride) + ";ec=";
    for (int c : enc_channels) s += std::to_string(c) + ",";
    s += ";eb=";
    for (int b : enc_blocks) s += std::to_string(b) + ",";
    s += ";dc=";
    for (int c : dec_schedule) s += std::to_string(c) + ",";
    s += ";ups=" + std::to_string(dec_upsamples) + ";lam=" + std::to_string(lambda_width) +
         ";h=" + std::to_string(heads) + ";el=" + std::to_string(enc_layers) +
         ";dl=" + std::to_string(dec_layers) + ";ff=" + std::to_string(ff_ratio) +
         ";vh=" + std::to_string(voxel_hidden) + ";ld=" + std::to_string(latent_dim) +
         ";tb=" + std::to_string(time_bands) + ";pn=" + std::to_string(pointnet_dim);
    return fnv1a(s);
}

std::vector<float> time_embedding(double alpha, int bands) {
    if (alpha < 0.0 || alpha > 1.0) throw ValidationError("time_embedding: alpha outside [0,1]");
    std::vector<float> e(2 * bands);
    double freq = 3.14159265358979323846;  // 2^b * pi
    for (int b = 0; b < bands; ++b) {
        e[2 * b] = static_cast<float>(std::sin(freq * alpha));
        e[2 * b + 1] = static_cast<float>(std::cos(freq * alpha));
        freq *= 2.0;
    }
    return e;
}

Tensor<float> grid_to_tensor(const TsdfDefGrid& grid, bool requires_grad) {
    const int k = grid.k;
    const int64_t v = static_cast<int64_t>(k) * k * k;
    std::vector<float> data(4 * v);
    for (int64_t i = 0; i < v; ++i)
        for (int c = 0; c < 4; ++c) data[c * v + i] = grid.values[i * 4 + c];
    return Tensor<float>::from({1, 4, k, k, k}, std::move(data), requires_grad);
}

TsdfDefGrid tensor_to_grid(const Tensor<float>& t, float tau) {
    const auto& s = t.shape();
    if (s.size() != 5 || s[0] != 1 || s[1] != 4 || s[2] != s[3] || s[3] != s[4])
        throw ValidationError("tensor_to_grid: expects [1,4,k,k,k]");
    TsdfDefGrid g;
    g.k = s[2];
    g.tau = tau;
    const int64_t v = static_cast<int64_t>(g.k) * g.k * g.k;
    g.values.resize(4 * v);
    for (int64_t i = 0; i < v; ++i)
        for (int c = 0; c < 4; ++c) g.values[i * 4 + c] = t.value()[c * v + i];
    return g;
}

Tensor<float> feature_to_tensor(const FeatureTensor& f, bool requires_grad) {
    return Tensor<float>::from({static_cast<int>(f.voxels()), f.d}, f.data, requires_grad);
}

FeatureTensor tensor_to_feature(const Tensor<float>& t, int kprime, int d) {
    FeatureTensor f;
    f.kprime = kprime;
    f.d = d;
    if (t.numel() != static_cast<int64_t>(kprime) * kprime * kprime * d)
        throw ValidationError("tensor_to_feature: size mismatch");
    f.data = t.value();
    return f;
}

namespace {

// linear through a fake-quantized weight (quantization-aware layer).
Tensor<float> qlinear(const Tensor<float>& x, const Tensor<float>& w, const Tensor<float>& b) {
    return linear(x, fake_quantize(w), b);
}

Tensor<float> qconv(const Tensor<float>& x, const Tensor<float>& w, const Tensor<float>& b,
                    int stride, int padding) {
    return conv3d(x, fake_quantize(w), b, stride, padding);
}

// ConvNeXt block: depthwise 7^3, channels-last LayerNorm, pointwise 4x
// expansion with GELU, pointwise contraction, residual add.
struct BlockParams {
    Tensor<float>*dw_w, *dw_b, *ln_g, *ln_b, *pw1_w, *pw1_b, *pw2_w, *pw2_b;
};

Tensor<float> convnext_block(const Tensor<float>& x, const BlockParams& p) {
    Tensor<float> t = depthwise_conv3d(x, *p.dw_w, *p.dw_b, 3);
    t = permute(t, {0, 2, 3, 4, 1});  // channels last
    t = layer_norm(t, *p.ln_g, *p.ln_b);
    t = linear(t, *p.pw1_w, *p.pw1_b);
    t = gelu(t);
    t = linear(t, *p.pw2_w, *p.pw2_b);
    t = permute(t, {0, 4, 1, 2, 3});
    return add(x, t);
}

}  // namespace

// ----------------------------------------------------------------- Encoder

Encoder::Encoder(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    const int stem = cfg.stem_stride;
    const int c0 = cfg.enc_channels[0];
    store_.create_uniform("stem.w", {c0, 4, stem, stem, stem}, 4 * stem * stem * stem, rng);
    store_.create_zeros("stem.b", {c0});
    for (size_t s = 0; s < cfg.enc_channels.size(); ++s) {
        const int c = cfg.enc_channels[s];
        for (int b = 0; b < cfg.enc_blocks[s]; ++b) {
            std::string pre = "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
            store_.create_uniform(pre + "dw.w", {c, 7, 7, 7}, 343, rng);
            store_.create_zeros(pre + "dw.b", {c});
            store_.create_full(pre + "ln.g", {c}, 1.0f);
            store_.create_zeros(pre + "ln.b", {c});
            store_.create_uniform(pre + "pw1.w", {4 * c, c}, c, rng);
            store_.create_zeros(pre + "pw1.b", {4 * c});
            store_.create_uniform(pre + "pw2.w", {c, 4 * c}, 4 * c, rng);
            store_.create_zeros(pre + "pw2.b", {c});
        }
        if (s + 1 < cfg.enc_channels.size()) {
            const int cn = cfg.enc_channels[s + 1];
            store_.create_uniform("ds" + std::to_string(s) + ".w", {cn, c, 2, 2, 2}, c * 8, rng);
            store_.create_zeros("ds" + std::to_string(s) + ".b", {cn});
        }
    }
    const int clast = cfg.enc_channels.back();
    store_.create_uniform("proj.w", {cfg.d, clast, 1, 1, 1}, clast, rng);
    store_.create_zeros("proj.b", {cfg.d});
}

Tensor<float> Encoder::forward(const Tensor<float>& grid) const {
    auto& st = const_cast<ParamStore&>(store_);
    const auto& xs = grid.shape();
    if (xs.size() != 5 || xs[2] != cfg_.k)
        throw ValidationError("encoder: input resolution " +
                              std::to_string(xs.size() == 5 ? xs[2] : -1) +
                              " does not match config k=" + std::to_string(cfg_.k));
    Tensor<float> x = conv3d(grid, st.at("stem.w").tensor, st.at("stem.b").tensor,
                             cfg_.stem_stride, 0);
    for (size_t s = 0; s < cfg_.enc_channels.size(); ++s) {
        for (int b = 0; b < cfg_.enc_blocks[s]; ++b) {
            std::string pre = "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
            BlockParams p{&st.at(pre + "dw.w").tensor,  &st.at(pre + "dw.b").tensor,
                          &st.at(pre + "ln.g").tensor,  &st.at(pre + "ln.b").tensor,
                          &st.at(pre + "pw1.w").tensor, &st.at(pre + "pw1.b").tensor,
                          &st.at(pre + "pw2.w").tensor, &st.at(pre + "pw2.b").tensor};
            x = convnext_block(x, p);
        }
        if (s + 1 < cfg_.enc_channels.size()) {
            std::string pre = "ds" + std::to_string(s);
            x = conv3d(x, st.at(pre + ".w").tensor, st.at(pre + ".b").tensor, 2, 0);
        }
    }
    x = conv3d(x, st.at("proj.w").tensor, st.at("proj.b").tensor);
    // [1,d,k',k',k'] -> [V,d]
    x = reshape(x, {cfg_.d, cfg_.kprime * cfg_.kprime * cfg_.kprime});
    x = permute(x, {1, 0});
    return x;
}

FeatureTensor Encoder::encode(const TsdfDefGrid& grid) const {
    if (grid.k != cfg_.k)
        throw ValidationError("encoder: grid resolution " + std::to_string(grid.k) +
                              " does not match config k=" + std::to_string(cfg_.k));
    Tensor<float> out = forward(grid_to_tensor(grid));
    return tensor_to_feature(out, cfg_.kprime, cfg_.d);
}

// ----------------------------------------------------------------- Decoder

Decoder::Decoder(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    const auto& sched = cfg.dec_schedule;
    store_.create_uniform("head.w", {sched[0], cfg.d, 3, 3, 3}, cfg.d * 27, rng, true);
    store_.create_zeros("head.b", {sched[0]});
    int ch = sched[0];
    for (int u = 0; u < cfg.dec_upsamples; ++u) {
        int out_ch = sched[std::min<size_t>(u + 1, sched.size() - 1)];
        std::string pre = "up" + std::to_string(u);
        store_.create_uniform(pre + ".w", {8 * out_ch, ch, 3, 3, 3}, ch * 27, rng, true);
        store_.create_zeros(pre + ".b", {8 * out_ch});
        ch = out_ch;
    }
    store_.create_uniform("out.w", {4, ch, 3, 3, 3}, ch * 27, rng, true);
    store_.create_zeros("out.b", {4});
}

Tensor<float> Decoder::forward(const Tensor<float>& features) const {
    auto& st = const_cast<ParamStore&>(store_);
    const int kp = cfg_.kprime;
    const int64_t v = static_cast<int64_t>(kp) * kp * kp;
    if (features.numel() != v * cfg_.d)
        throw ValidationError("decoder: feature dims do not match config");
    // [V,d] -> [1,d,k',k',k']
    Tensor<float> x = permute(reshape(features, {kp, kp, kp, cfg_.d}), {3, 0, 1, 2});
    x = reshape(x, {1, cfg_.d, kp, kp, kp});

    x = qconv(x, st.at("head.w").tensor, st.at("head.b").tensor, 1, 1);
    for (int u = 0; u < cfg_.dec_upsamples; ++u) {
        std::string pre = "up" + std::to_string(u);
        x = qconv(x, st.at(pre + ".w").tensor, st.at(pre + ".b").tensor, 1, 1);
        x = pixel_shuffle3d(x, 2);
        x = gelu(x);
    }
    x = qconv(x, st.at("out.w").tensor, st.at("out.b").tensor, 1, 1);
    x = tanh_t(x);
    // TSDF channel stays in [-1,1]; deformation channels scale to half a
    // voxel.
    const int k = cfg_.k;
    const int64_t kv = static_cast<int64_t>(k) * k * k;
    std::vector<float> chan_scale(4 * kv, static_cast<float>(0.5 * cfg_.voxel_size()));
    std::fill(chan_scale.begin(), chan_scale.begin() + kv, 1.0f);
    return mul(x, Tensor<float>::from({1, 4, k, k, k}, std::move(chan_scale)));
}

TsdfDefGrid Decoder::decode(const FeatureTensor& f, float tau) const {
    Tensor<float> out = forward(feature_to_tensor(f));
    return tensor_to_grid(out, tau);
}

// ------------------------------------------------------------ LatentMapper

LatentMapper::LatentMapper(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    const int pd = cfg.pointnet_dim;
    store_.create_uniform("pn1.w", {pd, 3}, 3, rng);
    store_.create_zeros("pn1.b", {pd});
    store_.create_uniform("pn2.w", {pd, pd}, pd, rng);
    store_.create_zeros("pn2.b", {pd});
    store_.create_uniform("pn3.w", {pd, pd}, pd, rng);
    store_.create_zeros("pn3.b", {pd});
    const int in = 4 * pd + 2 * cfg.time_bands;  // 544 for the default dims
    store_.create_uniform("m1.w", {256, in}, in, rng);
    store_.create_zeros("m1.b", {256});
    store_.create_uniform("m2.w", {256, 256}, 256, rng);
    store_.create_zeros("m2.b", {256});
    store_.create_uniform("m3.w", {cfg.latent_dim, 256}, 256, rng);
    store_.create_zeros("m3.b", {cfg.latent_dim});
    store_.create_full("ln.g", {cfg.latent_dim}, 1.0f);
    store_.create_zeros("ln.b", {cfg.latent_dim});
    store_.create_full("sigma", {1}, 0.1f);
}

Tensor<float> LatentMapper::point_encode(const std::vector<Vec3>& points) const {
    if (points.empty()) throw ValidationError("point_encode: empty point set");
    auto& st = const_cast<ParamStore&>(store_);
    std::vector<float> data;
    data.reserve(points.size() * 3);
    for (const auto& p : points) {
        data.push_back(static_cast<float>(p.x));
        data.push_back(static_cast<float>(p.y));
        data.push_back(static_cast<float>(p.z));
    }
    Tensor<float> x = Tensor<float>::from({static_cast<int>(points.size()), 3}, std::move(data));
    x = gelu(linear(x, st.at("pn1.w").tensor, st.at("pn1.b").tensor));
    x = gelu(linear(x, st.at("pn2.w").tensor, st.at("pn2.b").tensor));
    x = gelu(linear(x, st.at("pn3.w").tensor, st.at("pn3.b").tensor));
    return max_rows(x);
}

Tensor<float> LatentMapper::forward(const std::vector<Vec3>& cs, const std::vector<Vec3>& ct,
                                    const std::vector<Vec3>& ce, double alpha,
                                    Rng* noise_rng) const {
    if (cs.size() != ct.size() || ct.size() != ce.size())
        throw ValidationError("latent_map: center count mismatch across frames");
    auto& st = const_cast<ParamStore&>(store_);
    Tensor<float> zs = point_encode(cs);
    Tensor<float> zt = point_encode(ct);
    Tensor<float> ze = point_encode(ce);
    Tensor<float> dz = scale(sub(ze, zs), 0.5f);
    Tensor<float> gamma = Tensor<float>::from({2 * cfg_.time_bands},
                                              time_embedding(alpha, cfg_.time_bands));
    Tensor<float> x = concat(std::vector{zs, ze, zt, dz, gamma}, 0);
    x = gelu(linear(x, st.at("m1.w").tensor, st.at("m1.b").tensor));
    x = gelu(linear(x, st.at("m2.w").tensor, st.at("m2.b").tensor));
    x = linear(x, st.at("m3.w").tensor, st.at("m3.b").tensor);
    x = layer_norm(x, st.at("ln.g").tensor, st.at("ln.b").tensor);
    x = mul_broadcast(x, st.at("sigma").tensor);
    if (noise_rng) {
        std::vector<float> noise(cfg_.latent_dim);
        for (auto& n : noise) n = static_cast<float>(noise_rng->normal(0.0, 0.01));
        x = add(x, Tensor<float>::from({cfg_.latent_dim}, std::move(noise)));
    }
    return x;
}

// ------------------------------------------------------------ Interpolator

Interpolator::Interpolator(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    const int L = cfg.lambda_width;
    const int vh = cfg.voxel_hidden;
    const int V = cfg.kprime * cfg.kprime * cfg.kprime;

    store_.create_uniform("lift1.w", {vh, cfg.d}, cfg.d, rng, true);
    store_.create_zeros("lift1.b", {vh});
    store_.create_uniform("lift2.w", {vh, vh}, vh, rng, true);
    store_.create_zeros("lift2.b", {vh});
    store_.create_uniform("proj1.w", {vh, vh}, vh, rng, true);
    store_.create_zeros("proj1.b", {vh});
    store_.create_uniform("proj2.w", {L, vh}, vh, rng, true);
    store_.create_zeros("proj2.b", {L});

    {
        std::vector<float> coord(static_cast<size_t>(V) * L);
        for (auto& c : coord) c = static_cast<float>(rng.normal(0.0, 0.02));
        store_.create("coord", {V, L}, std::move(coord));
    }
    store_.create_uniform("time.w", {L, 2 * cfg.time_bands}, 2 * cfg.time_bands, rng, true);
    store_.create_zeros("time.b", {L});

    auto make_attn = [&](const std::string& pre) {
        store_.create_full(pre + ".ln.g", {L}, 1.0f);
        store_.create_zeros(pre + ".ln.b", {L});
        for (const char* nm : {"q", "k", "v", "o"}) {
            store_.create_uniform(pre + "." + nm + ".w", {L, L}, L, rng, true);
            store_.create_zeros(pre + "." + nm + ".b", {L});
        }
    };
    auto make_ff = [&](const std::string& pre) {
        store_.create_full(pre + ".ln.g", {L}, 1.0f);
        store_.create_zeros(pre + ".ln.b", {L});
        store_.create_uniform(pre + ".w1", {cfg.ff_ratio * L, L}, L, rng, true);
        store_.create_zeros(pre + ".b1", {cfg.ff_ratio * L});
        store_.create_uniform(pre + ".w2", {L, cfg.ff_ratio * L}, cfg.ff_ratio * L, rng, true);
        store_.create_zeros(pre + ".b2", {L});
    };

    for (int l = 0; l < cfg.enc_layers; ++l) {
        make_attn("enc" + std::to_string(l) + ".sa");
        make_ff("enc" + std::to_string(l) + ".ff");
    }
    store_.create_full("enc.ln.g", {L}, 1.0f);
    store_.create_zeros("enc.ln.b", {L});

    const int prior_in = 2 * cfg.d + 2 * cfg.time_bands;
    store_.create_uniform("prior1.w", {vh, prior_in}, prior_in, rng, true);
    store_.create_zeros("prior1.b", {vh});
    store_.create_uniform("prior2.w", {L, vh}, vh, rng, true);
    store_.create_zeros("prior2.b", {L});

    store_.create_uniform("film1.w", {vh, cfg.latent_dim + 2 * cfg.time_bands},
                          cfg.latent_dim + 2 * cfg.time_bands, rng, true);
    store_.create_zeros("film1.b", {vh});
    // Zero init: training starts from the unmodulated prior.
    store_.create_zeros("film2.w", {2 * L, vh}, true);
    store_.create_zeros("film2.b", {2 * L});

    for (int l = 0; l < cfg.dec_layers; ++l) {
        make_attn("dec" + std::to_string(l) + ".sa");
        make_attn("dec" + std::to_string(l) + ".ca");
        make_ff("dec" + std::to_string(l) + ".ff");
    }
    store_.create_full("dec.ln.g", {L}, 1.0f);
    store_.create_zeros("dec.ln.b", {L});

    store_.create_uniform("head1.w", {vh, L}, L, rng, true);
    store_.create_zeros("head1.b", {vh});
    // Zero init: the interpolation starts at the linear blend of the inputs.
    store_.create_zeros("head2.w", {cfg.d, vh}, true);
    store_.create_zeros("head2.b", {cfg.d});
}

Tensor<float> Interpolator::encoder_layer(Tensor<float> x, int layer) const {
    auto& st = const_cast<ParamStore&>(store_);
    std::string sa = "enc" + std::to_string(layer) + ".sa";
    std::string ff = "enc" + std::to_string(layer) + ".ff";
    Tensor<float> n1 = layer_norm(x, st.at(sa + ".ln.g").tensor, st.at(sa + ".ln.b").tensor);
    Tensor<float> attn = multi_head_attention(
        qlinear(n1, st.at(sa + ".q.w").tensor, st.at(sa + ".q.b").tensor),
        qlinear(n1, st.at(sa + ".k.w").tensor, st.at(sa + ".k.b").tensor),
        qlinear(n1, st.at(sa + ".v.w").tensor, st.at(sa + ".v.b").tensor), cfg_.heads,
        fake_quantize(st.at(sa + ".o.w").tensor), st.at(sa + ".o.b").tensor);
    x = add(x, attn);
    Tensor<float> n2 = layer_norm(x, st.at(ff + ".ln.g").tensor, st.at(ff + ".ln.b").tensor);
    Tensor<float> h = qlinear(n2, st.at(ff + ".w1").tensor, st.at(ff + ".b1").tensor);
    h = qlinear(gelu(h), st.at(ff + ".w2").tensor, st.at(ff + ".b2").tensor);
    return add(x, h);
}

Tensor<float> Interpolator::decoder_layer(Tensor<float> x, const Tensor<float>& mem,
                                          int layer) const {
    auto& st = const_cast<ParamStore&>(store_);
    std::string sa = "dec" + std::to_string(layer) + ".sa";
    std::string ca = "dec" + std::to_string(layer) + ".ca";
    std::string ff = "dec" + std::to_string(layer) + ".ff";
    Tensor<float> n1 = layer_norm(x, st.at(sa + ".ln.g").tensor, st.at(sa + ".ln.b").tensor);
    x = add(x, multi_head_attention(
                   qlinear(n1, st.at(sa + ".q.w").tensor, st.at(sa + ".q.b").tensor),
                   qlinear(n1, st.at(sa + ".k.w").tensor, st.at(sa + ".k.b").tensor),
                   qlinear(n1, st.at(sa + ".v.w").tensor, st.at(sa + ".v.b").tensor), cfg_.heads,
                   fake_quantize(st.at(sa + ".o.w").tensor), st.at(sa + ".o.b").tensor));
    Tensor<float> n2 = layer_norm(x, st.at(ca + ".ln.g").tensor, st.at(ca + ".ln.b").tensor);
    x = add(x, multi_head_attention(
                   qlinear(n2, st.at(ca + ".q.w").tensor, st.at(ca + ".q.b").tensor),
                   qlinear(mem, st.at(ca + ".k.w").tensor, st.at(ca + ".k.b").tensor),
                   qlinear(mem, st.at(ca + ".v.w").tensor, st.at(ca + ".v.b").tensor), cfg_.heads,
                   fake_quantize(st.at(ca + ".o.w").tensor), st.at(ca + ".o.b").tensor));
    Tensor<float> n3 = layer_norm(x, st.at(ff + ".ln.g").tensor, st.at(ff + ".ln.b").tensor);
    Tensor<float> h = qlinear(n3, st.at(ff + ".w1").tensor, st.at(ff + ".b1").tensor);
    h = qlinear(gelu(h), st.at(ff + ".w2").tensor, st.at(ff + ".b2").tensor);
    return add(x, h);
}

Tensor<float> Interpolator::forward(const Tensor<float>& fs, const Tensor<float>& fe,
                                    const Tensor<float>& z, double t) const {
    if (!(t > 0.0 && t < 1.0))
        throw ValidationError("interpolate: t must lie strictly inside (0,1)");
    if (fs.shape() != fe.shape())
        throw ValidationError("interpolate: start/end feature dims differ");
    const int V = cfg_.kprime * cfg_.kprime * cfg_.kprime;
    if (fs.numel() != static_cast<int64_t>(V) * cfg_.d)
        throw ValidationError("interpolate: feature dims do not match config");
    ++invocations;
    auto& st = const_cast<ParamStore&>(store_);
    const int L = cfg_.lambda_width;

    auto lift_project = [&](const Tensor<float>& f) {
        Tensor<float> x = gelu(qlinear(f, st.at("lift1.w").tensor, st.at("lift1.b").tensor));
        x = gelu(qlinear(x, st.at("lift2.w").tensor, st.at("lift2.b").tensor));
        x = gelu(qlinear(x, st.at("proj1.w").tensor, st.at("proj1.b").tensor));
        return qlinear(x, st.at("proj2.w").tensor, st.at("proj2.b").tensor);
    };
    auto time_vec = [&](double a) {
        Tensor<float> g = Tensor<float>::from({1, 2 * cfg_.time_bands},
                                              time_embedding(a, cfg_.time_bands));
        Tensor<float> tv = qlinear(g, st.at("time.w").tensor, st.at("time.b").tensor);
        return reshape(tv, {L});
    };

    Tensor<float>& coord = st.at("coord").tensor;
    Tensor<float> tok_s = add_broadcast(add(lift_project(fs), coord), time_vec(0.0));
    Tensor<float> tok_e = add_broadcast(add(lift_project(fe), coord), time_vec(1.0));
    Tensor<float> mem = reshape(concat(std::vector{tok_s, tok_e}, 0), {1, 2 * V, L});
    for (int l = 0; l < cfg_.enc_layers; ++l) mem = encoder_layer(mem, l);
    mem = layer_norm(mem, st.at("enc.ln.g").tensor, st.at("enc.ln.b").tensor);

    // Per-voxel coarse prior from (Fs, Fe, t).
    std::vector<float> gt = time_embedding(t, cfg_.time_bands);
    std::vector<float> gt_tiled(static_cast<size_t>(V) * gt.size());
    for (int vi = 0; vi < V; ++vi)
        std::copy(gt.begin(), gt.end(), gt_tiled.begin() + static_cast<size_t>(vi) * gt.size());
    Tensor<float> prior_in =
        concat(std::vector{fs, fe,
                           Tensor<float>::from({V, 2 * cfg_.time_bands}, std::move(gt_tiled))},
               1);
    Tensor<float> prior =
        qlinear(gelu(qlinear(prior_in, st.at("prior1.w").tensor, st.at("prior1.b").tensor)),
                st.at("prior2.w").tensor, st.at("prior2.b").tensor);

    // FiLM from [z, time embedding]: (1+gamma) * prior + beta.
    Tensor<float> film_in =
        concat(std::vector{reshape(z, {1, cfg_.latent_dim}),
                           Tensor<float>::from({1, 2 * cfg_.time_bands}, gt)},
               1);
    Tensor<float> film =
        qlinear(gelu(qlinear(film_in, st.at("film1.w").tensor, st.at("film1.b").tensor)),
                st.at("film2.w").tensor, st.at("film2.b").tensor);
    Tensor<float> gamma = reshape(slice_last(film, 0, L), {L});
    Tensor<float> beta = reshape(slice_last(film, L, L), {L});
    Tensor<float> queries = mul_broadcast(prior, add_scalar(gamma, 1.0f));
    queries = add_broadcast(queries, beta);
    queries = add_broadcast(add(queries, coord), time_vec(t));

    Tensor<float> x = reshape(queries, {1, V, L});
    for (int l = 0; l < cfg_.dec_layers; ++l) x = decoder_layer(x, mem, l);
    x = layer_norm(x, st.at("dec.ln.g").tensor, st.at("dec.ln.b").tensor);
    x = reshape(x, {V, L});

    Tensor<float> res = qlinear(gelu(qlinear(x, st.at("head1.w").tensor, st.at("head1.b").tensor)),
                                st.at("head2.w").tensor, st.at("head2.b").tensor);

    // Voxel-space prior: linear blend of the endpoint features.
    std::vector<float> base(fs.numel());
    const float tf = static_cast<float>(t);
    for (int64_t i = 0; i < fs.numel(); ++i)
        base[i] = (1.0f - tf) * fs.value()[i] + tf * fe.value()[i];
    return add(Tensor<float>::from({V, cfg_.d}, std::move(base)), res);
}

FeatureTensor Interpolator::interpolate(const FeatureTensor& fs, const FeatureTensor& fe,
                                        const std::vector<float>& z, double t) const {
    Tensor<float> zt = Tensor<float>::from({cfg_.latent_dim}, z);
    Tensor<float> out = forward(feature_to_tensor(fs), feature_to_tensor(fe), zt, t);
    return tensor_to_feature(out, cfg_.kprime, cfg_.d);
}

}  // namespace n4mc
