#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tslab/rng.hpp"
#include "tslab/tensor.hpp"

// Minimal dense network: affine encoder stack with ReLU between layers
// (none after the last, so representations are unbounded), plus a swappable
// head. The classifier head is a plain affine map to logits; the projection
// head is affine followed by row-wise L2 normalization. All weights and
// biases live in one flat buffer so optimizers and finite-difference checks
// can treat parameters uniformly.

namespace tslab {

enum class HeadKind { Classifier, Projection };

inline const char* to_string(HeadKind k) {
    return k == HeadKind::Classifier ? "classifier" : "projection";
}

inline HeadKind head_kind_from_string(const std::string& s) {
    if (s == "classifier") return HeadKind::Classifier;
    if (s == "projection") return HeadKind::Projection;
    throw std::invalid_argument("unknown head kind: '" + s + "'");
}

struct LayerShape {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t w_off = 0;  // offset of the in x out weight block in the flat buffer
    std::size_t b_off = 0;  // offset of the out-sized bias block
};

class Network {
public:
    Network() = default;

    static Network make(std::size_t input_dim, std::vector<std::size_t> encoder_dims,
                        HeadKind head_kind, std::size_t head_out, std::uint64_t seed) {
        if (input_dim == 0 || head_out == 0)
            throw std::invalid_argument("network: dimensions must be positive");
        for (std::size_t d : encoder_dims)
            if (d == 0) throw std::invalid_argument("network: dimensions must be positive");
        Network net;
        net.input_dim_ = input_dim;
        net.encoder_dims_ = std::move(encoder_dims);
        net.head_kind_ = head_kind;
        net.head_out_ = head_out;
        net.build_layout();
        net.init_params(seed);
        return net;
    }

    struct Cache {
        Tensor2 input;
        std::vector<Tensor2> pre;  // post-affine, pre-ReLU activations per encoder layer
        Tensor2 repr;
        Tensor2 head_pre;               // projection head only: pre-normalization outputs
        std::vector<double> row_norms;  // projection head only
        std::uint64_t version = 0;
    };

    struct Forward {
        Tensor2 representations;
        Tensor2 outputs;
        Cache cache;
    };

    Forward forward(const Tensor2& inputs) const {
        if (inputs.cols() != input_dim_)
            throw std::invalid_argument("forward: input has " + std::to_string(inputs.cols()) +
                                        " columns, network expects " +
                                        std::to_string(input_dim_));
        Cache cache;
        cache.version = version_;
        cache.input = inputs;
        const Tensor2* act = &cache.input;
        cache.pre.reserve(encoder_.size());
        std::vector<Tensor2> post(encoder_.size());
        for (std::size_t l = 0; l < encoder_.size(); ++l) {
            Tensor2 z = affine(*act, encoder_[l]);
            if (l + 1 < encoder_.size()) {
                post[l] = z;
                relu_inplace(post[l]);
                cache.pre.push_back(std::move(z));
                act = &post[l];
            } else {
                cache.pre.push_back(z);
                post[l] = std::move(z);
                act = &post[l];
            }
        }
        cache.repr = *act;  // == input when the encoder is empty

        Tensor2 head_pre = affine(cache.repr, head_);
        Tensor2 outputs;
        if (head_kind_ == HeadKind::Classifier) {
            outputs = head_pre;
        } else {
            cache.row_norms.resize(head_pre.rows());
            outputs = head_pre;
            for (std::size_t r = 0; r < outputs.rows(); ++r) {
                double n2 = 0.0;
                for (double v : head_pre.row(r)) n2 += v * v;
                const double n = std::sqrt(n2);
                cache.row_norms[r] = n;
                if (n > 0.0) {
                    for (double& v : outputs.row(r)) v /= n;
                }  // zero rows stay zero
            }
            cache.head_pre = std::move(head_pre);
        }
        Forward fwd;
        fwd.representations = cache.repr;
        fwd.outputs = std::move(outputs);
        fwd.cache = std::move(cache);
        return fwd;
    }

    // Accumulates dLoss/dparams into grads(). d_outputs is the cotangent of
    // the head outputs; for the projection head the normalization Jacobian
    // is applied here.
    void backward(const Cache& cache, const Tensor2& d_outputs) {
        if (cache.version != version_)
            throw std::logic_error(
                "backward: cache is stale (parameters changed since the matching forward)");
        require_shape(d_outputs, cache.repr.rows(), head_out_, "backward: d_outputs");

        Tensor2 d_head_pre;
        if (head_kind_ == HeadKind::Classifier) {
            d_head_pre = d_outputs;
        } else {
            // y = x/|x|:  dL/dx = (g - (g.y) y)/|x|, zero rows get zero grad.
            d_head_pre = Tensor2(d_outputs.rows(), d_outputs.cols());
            for (std::size_t r = 0; r < d_outputs.rows(); ++r) {
                const double n = cache.row_norms[r];
                if (n == 0.0) continue;
                double gy = 0.0;
                for (std::size_t c = 0; c < d_outputs.cols(); ++c) {
                    gy += d_outputs(r, c) * cache.head_pre(r, c) / n;
                }
                for (std::size_t c = 0; c < d_outputs.cols(); ++c) {
                    const double y = cache.head_pre(r, c) / n;
                    d_head_pre(r, c) = (d_outputs(r, c) - gy * y) / n;
                }
            }
        }

        Tensor2 d_act = backward_affine(cache.repr, head_, d_head_pre);

        for (std::size_t l = encoder_.size(); l-- > 0;) {
            if (l + 1 < encoder_.size()) {
                // ReLU was applied after this layer.
                const Tensor2& z = cache.pre[l];
                for (std::size_t i = 0; i < d_act.size(); ++i) {
                    if (z.data()[i] <= 0.0) d_act.data()[i] = 0.0;
                }
            }
            const Tensor2& layer_in = l == 0 ? cache.input : relu_of(cache.pre[l - 1]);
            d_act = backward_affine(layer_in, encoder_[l], d_act);
        }
    }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    std::span<double> grads() { return grads_; }
    std::span<const double> grads() const { return grads_; }
    const std::vector<std::uint8_t>& bias_mask() const { return bias_mask_; }

    void zero_grads() { grads_.assign(grads_.size(), 0.0); }

    // Must be called after any external parameter mutation; invalidates
    // outstanding forward caches.
    void note_params_changed() { ++version_; }
    std::uint64_t version() const { return version_; }

    std::size_t input_dim() const { return input_dim_; }
    const std::vector<std::size_t>& encoder_dims() const { return encoder_dims_; }
    std::size_t representation_dim() const {
        return encoder_dims_.empty() ? input_dim_ : encoder_dims_.back();
    }
    std::size_t output_dim() const { return head_out_; }
    HeadKind head_kind() const { return head_kind_; }
    std::size_t head_params_begin() const { return head_.w_off; }

    // Swaps the head for a freshly initialized one, keeping encoder
    // parameters; used when a projection-trained encoder gets its
    // evaluation classifier.
    void replace_head(HeadKind kind, std::size_t head_out, std::uint64_t seed) {
        if (head_out == 0) throw std::invalid_argument("network: dimensions must be positive");
        std::vector<double> encoder_params(params_.begin(),
                                           params_.begin() + static_cast<long>(head_.w_off));
        head_kind_ = kind;
        head_out_ = head_out;
        build_layout();
        params_.assign(params_.size(), 0.0);
        std::copy(encoder_params.begin(), encoder_params.end(), params_.begin());
        init_layer(head_, encoder_.size(), seed);
        grads_.assign(params_.size(), 0.0);
        note_params_changed();
    }

    // Copies encoder weights from another network with identical encoder
    // geometry (probe classifier attachment).
    void copy_encoder_from(const Network& other) {
        if (other.input_dim_ != input_dim_ || other.encoder_dims_ != encoder_dims_)
            throw std::invalid_argument("copy_encoder_from: encoder geometry differs");
        std::copy(other.params_.begin(), other.params_.begin() + static_cast<long>(head_.w_off),
                  params_.begin());
        note_params_changed();
    }

    void set_params(std::span<const double> p) {
        if (p.size() != params_.size())
            throw std::invalid_argument("set_params: size mismatch");
        std::copy(p.begin(), p.end(), params_.begin());
        note_params_changed();
    }

private:
    Tensor2 affine(const Tensor2& x, const LayerShape& l) const {
        Tensor2 out(x.rows(), l.out);
        const double* w = params_.data() + l.w_off;
        const double* b = params_.data() + l.b_off;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            double* orow = out.data() + r * l.out;
            for (std::size_t j = 0; j < l.out; ++j) orow[j] = b[j];
            const double* xrow = x.data() + r * l.in;
            for (std::size_t i = 0; i < l.in; ++i) {
                const double xi = xrow[i];
                const double* wrow = w + i * l.out;
                for (std::size_t j = 0; j < l.out; ++j) orow[j] += xi * wrow[j];
            }
        }
        return out;
    }

    // Accumulates weight/bias grads for one layer and returns the input cotangent.
    Tensor2 backward_affine(const Tensor2& layer_in, const LayerShape& l, const Tensor2& d_out) {
        double* gw = grads_.data() + l.w_off;
        double* gb = grads_.data() + l.b_off;
        for (std::size_t r = 0; r < layer_in.rows(); ++r) {
            const double* xrow = layer_in.data() + r * l.in;
            const double* drow = d_out.data() + r * l.out;
            for (std::size_t j = 0; j < l.out; ++j) gb[j] += drow[j];
            for (std::size_t i = 0; i < l.in; ++i) {
                const double xi = xrow[i];
                double* gwrow = gw + i * l.out;
                for (std::size_t j = 0; j < l.out; ++j) gwrow[j] += xi * drow[j];
            }
        }
        Tensor2 d_in(layer_in.rows(), l.in);
        const double* w = params_.data() + l.w_off;
        for (std::size_t r = 0; r < layer_in.rows(); ++r) {
            const double* drow = d_out.data() + r * l.out;
            double* dirow = d_in.data() + r * l.in;
            for (std::size_t i = 0; i < l.in; ++i) {
                const double* wrow = w + i * l.out;
                double s = 0.0;
                for (std::size_t j = 0; j < l.out; ++j) s += wrow[j] * drow[j];
                dirow[i] = s;
            }
        }
        return d_in;
    }

    static void relu_inplace(Tensor2& t) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t.data()[i] < 0.0) t.data()[i] = 0.0;
        }
    }

    // Recomputes ReLU(pre) for a hidden layer during backward; cheaper than
    // caching both pre and post activations.
    static Tensor2 relu_of(const Tensor2& pre) {
        Tensor2 out = pre;
        relu_inplace(out);
        return out;
    }

    void build_layout() {
        encoder_.clear();
        std::size_t off = 0;
        std::size_t in = input_dim_;
        bias_mask_.clear();
        auto add_layer = [&](std::size_t out) {
            LayerShape l;
            l.in = in;
            l.out = out;
            l.w_off = off;
            off += in * out;
            l.b_off = off;
            off += out;
            bias_mask_.resize(off, 0);
            for (std::size_t i = l.b_off; i < off; ++i) bias_mask_[i] = 1;
            in = out;
            return l;
        };
        for (std::size_t d : encoder_dims_) encoder_.push_back(add_layer(d));
        head_ = add_layer(head_out_);
        params_.assign(off, 0.0);
        grads_.assign(off, 0.0);
    }

    void init_layer(const LayerShape& l, std::size_t layer_index, std::uint64_t seed) {
        Rng rng(mix_key(seed, rng_tag::kWeightInit, layer_index));
        const double stddev = std::sqrt(2.0 / static_cast<double>(l.in));
        for (std::size_t i = 0; i < l.in * l.out; ++i)
            params_[l.w_off + i] = rng.gaussian(0.0, stddev);
        for (std::size_t i = 0; i < l.out; ++i) params_[l.b_off + i] = 0.0;
    }

    void init_params(std::uint64_t seed) {
        for (std::size_t l = 0; l < encoder_.size(); ++l) init_layer(encoder_[l], l, seed);
        init_layer(head_, encoder_.size(), seed);
        note_params_changed();
    }

    std::size_t input_dim_ = 0;
    std::vector<std::size_t> encoder_dims_;
    HeadKind head_kind_ = HeadKind::Classifier;
    std::size_t head_out_ = 0;
    std::vector<LayerShape> encoder_;
    LayerShape head_;
    std::vector<double> params_;
    std::vector<double> grads_;
    std::vector<std::uint8_t> bias_mask_;
    std::uint64_t version_ = 0;
};

}  // namespace tslab
