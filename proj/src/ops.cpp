#include "segcrowd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace segcrowd {

namespace {

std::shared_ptr<TensorNode> new_node(std::vector<std::size_t> dims,
                                     std::initializer_list<Tensor> parents) {
    auto n = std::make_shared<TensorNode>();
    n->dims = std::move(dims);
    std::size_t sz = 1;
    for (auto d : n->dims) sz *= d;
    n->values.assign(sz, 0.0);
    n->is_leaf = false;
    for (const auto& p : parents) {
        n->parents.push_back(p.node());
        if (p.node()->requires_grad) n->requires_grad = true;
    }
    return n;
}

void require_rank(const Tensor& t, std::size_t r, const char* what) {
    if (t.rank() != r)
        throw std::invalid_argument(std::string(what) + ": expected rank " +
                                    std::to_string(r) + ", got dims " +
                                    dims_to_string(t.dims()));
}

}  // namespace

std::size_t ConvSpec::out_extent(std::size_t in, std::size_t kernel) const {
    const long long eff = static_cast<long long>(dilation) * (kernel - 1) + 1;
    const long long num = static_cast<long long>(in) + 2 * static_cast<long long>(padding) - eff;
    if (num < 0)
        throw std::invalid_argument("conv2d: effective kernel " + std::to_string(eff) +
                                    " exceeds padded input extent " +
                                    std::to_string(in + 2 * padding));
    return static_cast<std::size_t>(num / static_cast<long long>(stride)) + 1;
}

Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias) {
    require_rank(input, 3, "conv2d input");
    require_rank(weights, 4, "conv2d weights");
    if (input.dims()[0] != spec.in_channels)
        throw std::invalid_argument("conv2d: input has " + std::to_string(input.dims()[0]) +
                                    " channels, spec expects " + std::to_string(spec.in_channels));
    const std::vector<std::size_t> wdims{spec.out_channels, spec.in_channels,
                                         spec.kernel_h, spec.kernel_w};
    if (weights.dims() != wdims)
        throw std::invalid_argument("conv2d: weight dims " + dims_to_string(weights.dims()) +
                                    " do not match spec " + dims_to_string(wdims));
    if (bias.size() != spec.out_channels)
        throw std::invalid_argument("conv2d: bias length " + std::to_string(bias.size()) +
                                    " != out_channels " + std::to_string(spec.out_channels));

    const std::size_t C = spec.in_channels, O = spec.out_channels;
    const std::size_t H = input.dims()[1], W = input.dims()[2];
    const std::size_t KH = spec.kernel_h, KW = spec.kernel_w;
    const std::size_t Ho = spec.out_extent(H, KH), Wo = spec.out_extent(W, KW);

    auto n = new_node({O, Ho, Wo}, {input, weights, bias});
    const auto& x = input.values();
    const auto& w = weights.values();
    const auto& b = bias.values();

    for (std::size_t o = 0; o < O; ++o) {
        for (std::size_t oh = 0; oh < Ho; ++oh) {
            for (std::size_t ow = 0; ow < Wo; ++ow) {
                double acc = b[o];
                const long long base_h = static_cast<long long>(oh * spec.stride) - spec.padding;
                const long long base_w = static_cast<long long>(ow * spec.stride) - spec.padding;
                for (std::size_t c = 0; c < C; ++c) {
                    for (std::size_t kh = 0; kh < KH; ++kh) {
                        const long long ih = base_h + static_cast<long long>(kh * spec.dilation);
                        if (ih < 0 || ih >= static_cast<long long>(H)) continue;
                        const double* xrow = &x[(c * H + ih) * W];
                        const double* wrow = &w[((o * C + c) * KH + kh) * KW];
                        for (std::size_t kw = 0; kw < KW; ++kw) {
                            const long long iw = base_w + static_cast<long long>(kw * spec.dilation);
                            if (iw < 0 || iw >= static_cast<long long>(W)) continue;
                            acc += xrow[iw] * wrow[kw];
                        }
                    }
                }
                n->values[(o * Ho + oh) * Wo + ow] = acc;
            }
        }
    }

    n->backward_fn = [spec, C, O, H, W, KH, KW, Ho, Wo](TensorNode& self) {
        auto& xin = *self.parents[0];
        auto& win = *self.parents[1];
        auto& bin = *self.parents[2];
        const bool gx = xin.requires_grad, gw = win.requires_grad, gb = bin.requires_grad;
        if (gx) xin.ensure_grad();
        if (gw) win.ensure_grad();
        if (gb) bin.ensure_grad();
        for (std::size_t o = 0; o < O; ++o) {
            for (std::size_t oh = 0; oh < Ho; ++oh) {
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    const double g = self.grad[(o * Ho + oh) * Wo + ow];
                    if (g == 0.0) continue;
                    if (gb) bin.grad[o] += g;
                    const long long base_h = static_cast<long long>(oh * spec.stride) - spec.padding;
                    const long long base_w = static_cast<long long>(ow * spec.stride) - spec.padding;
                    for (std::size_t c = 0; c < C; ++c) {
                        for (std::size_t kh = 0; kh < KH; ++kh) {
                            const long long ih = base_h + static_cast<long long>(kh * spec.dilation);
                            if (ih < 0 || ih >= static_cast<long long>(H)) continue;
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                const long long iw = base_w + static_cast<long long>(kw * spec.dilation);
                                if (iw < 0 || iw >= static_cast<long long>(W)) continue;
                                const std::size_t xi = (c * H + ih) * W + iw;
                                const std::size_t wi = ((o * C + c) * KH + kh) * KW + kw;
                                if (gx) xin.grad[xi] += g * win.values[wi];
                                if (gw) win.grad[wi] += g * xin.values[xi];
                            }
                        }
                    }
                }
            }
        }
    };
    return Tensor::wrap(n);
}

Tensor max_pool2d(const Tensor& input) {
    require_rank(input, 3, "max_pool2d input");
    const std::size_t C = input.dims()[0], H = input.dims()[1], W = input.dims()[2];
    if (H < 2 || W < 2)
        throw std::invalid_argument("max_pool2d: spatial dims " + dims_to_string(input.dims()) +
                                    " below 2x2 window");
    const std::size_t Ho = H / 2, Wo = W / 2;
    auto n = new_node({C, Ho, Wo}, {input});
    auto argmax = std::make_shared<std::vector<std::size_t>>(C * Ho * Wo);
    const auto& x = input.values();
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t oh = 0; oh < Ho; ++oh) {
            for (std::size_t ow = 0; ow < Wo; ++ow) {
                std::size_t best = (c * H + 2 * oh) * W + 2 * ow;
                double bv = x[best];
                // first-in-scan-order tie break: strict >
                for (std::size_t dh = 0; dh < 2; ++dh)
                    for (std::size_t dw = 0; dw < 2; ++dw) {
                        const std::size_t i = (c * H + 2 * oh + dh) * W + 2 * ow + dw;
                        if (x[i] > bv) { bv = x[i]; best = i; }
                    }
                const std::size_t oi = (c * Ho + oh) * Wo + ow;
                n->values[oi] = bv;
                (*argmax)[oi] = best;
            }
        }
    }
    n->backward_fn = [argmax](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            p.grad[(*argmax)[i]] += self.grad[i];
    };
    return Tensor::wrap(n);
}

Tensor relu(const Tensor& input) {
    auto n = new_node(input.dims(), {input});
    for (std::size_t i = 0; i < input.size(); ++i)
        n->values[i] = std::max(0.0, input.value(i));
    n->backward_fn = [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (p.values[i] > 0.0) p.grad[i] += self.grad[i];
    };
    return Tensor::wrap(n);
}

Tensor prelu(const Tensor& input, const Tensor& slope) {
    const std::size_t nslope = slope.size();
    if (nslope != 1 && (input.rank() == 0 || input.dims()[0] != nslope))
        throw std::invalid_argument("prelu: slope length " + std::to_string(nslope) +
                                    " matches neither 1 nor leading dim of " +
                                    dims_to_string(input.dims()));
    const std::size_t per = input.size() / nslope;
    auto n = new_node(input.dims(), {input, slope});
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double a = slope.value(nslope == 1 ? 0 : i / per);
        const double x = input.value(i);
        n->values[i] = x >= 0.0 ? x : a * x;
    }
    n->backward_fn = [nslope, per](TensorNode& self) {
        auto& x = *self.parents[0];
        auto& a = *self.parents[1];
        const bool gx = x.requires_grad, ga = a.requires_grad;
        if (gx) x.ensure_grad();
        if (ga) a.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const std::size_t si = nslope == 1 ? 0 : i / per;
            if (x.values[i] >= 0.0) {
                if (gx) x.grad[i] += self.grad[i];
            } else {
                if (gx) x.grad[i] += self.grad[i] * a.values[si];
                if (ga) a.grad[si] += self.grad[i] * x.values[i];
            }
        }
    };
    return Tensor::wrap(n);
}

Tensor sigmoid(const Tensor& input) {
    auto n = new_node(input.dims(), {input});
    for (std::size_t i = 0; i < input.size(); ++i)
        n->values[i] = 1.0 / (1.0 + std::exp(-input.value(i)));
    n->backward_fn = [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double s = self.values[i];
            p.grad[i] += self.grad[i] * s * (1.0 - s);
        }
    };
    return Tensor::wrap(n);
}

Tensor softmax(const Tensor& input) {
    require_rank(input, 1, "softmax input");
    auto n = new_node(input.dims(), {input});
    const double m = *std::max_element(input.values().begin(), input.values().end());
    double z = 0.0;
    for (std::size_t i = 0; i < input.size(); ++i)
        z += (n->values[i] = std::exp(input.value(i) - m));
    for (auto& v : n->values) v /= z;
    n->backward_fn = [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        double dot = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            dot += self.grad[i] * self.values[i];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            p.grad[i] += self.values[i] * (self.grad[i] - dot);
    };
    return Tensor::wrap(n);
}

Tensor spp(const Tensor& input, const std::vector<std::size_t>& levels) {
    require_rank(input, 3, "spp input");
    const std::size_t C = input.dims()[0], H = input.dims()[1], W = input.dims()[2];
    std::size_t bins = 0;
    for (auto n : levels) {
        if (n == 0 || n > H || n > W)
            throw std::invalid_argument("spp: level " + std::to_string(n) +
                                        " invalid for spatial dims " +
                                        std::to_string(H) + "x" + std::to_string(W));
        bins += n * n;
    }
    auto node = new_node({C * bins}, {input});
    auto argmax = std::make_shared<std::vector<std::size_t>>(C * bins);
    const auto& x = input.values();
    std::size_t out = 0;
    for (auto lv : levels) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t i = 0; i < lv; ++i) {
                const std::size_t h0 = i * H / lv, h1 = (i + 1) * H / lv;
                for (std::size_t j = 0; j < lv; ++j) {
                    const std::size_t w0 = j * W / lv, w1 = (j + 1) * W / lv;
                    std::size_t best = (c * H + h0) * W + w0;
                    double bv = x[best];
                    for (std::size_t h = h0; h < h1; ++h)
                        for (std::size_t w = w0; w < w1; ++w) {
                            const std::size_t idx = (c * H + h) * W + w;
                            if (x[idx] > bv) { bv = x[idx]; best = idx; }
                        }
                    node->values[out] = bv;
                    (*argmax)[out++] = best;
                }
            }
        }
    }
    node->backward_fn = [argmax](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            p.grad[(*argmax)[i]] += self.grad[i];
    };
    return Tensor::wrap(node);
}

Tensor fully_connected(const Tensor& input, const Tensor& weights,
                       const Tensor& bias) {
    require_rank(weights, 2, "fully_connected weights");
    const std::size_t out = weights.dims()[0], in = weights.dims()[1];
    if (input.size() != in)
        throw std::invalid_argument("fully_connected: input length " +
                                    std::to_string(input.size()) + " != weight in-dim " +
                                    std::to_string(in));
    if (bias.size() != out)
        throw std::invalid_argument("fully_connected: bias length " +
                                    std::to_string(bias.size()) + " != out-dim " +
                                    std::to_string(out));
    auto n = new_node({out}, {input, weights, bias});
    for (std::size_t o = 0; o < out; ++o) {
        double acc = bias.value(o);
        for (std::size_t i = 0; i < in; ++i)
            acc += weights.value(o * in + i) * input.value(i);
        n->values[o] = acc;
    }
    n->backward_fn = [out, in](TensorNode& self) {
        auto& x = *self.parents[0];
        auto& w = *self.parents[1];
        auto& b = *self.parents[2];
        const bool gx = x.requires_grad, gw = w.requires_grad, gb = b.requires_grad;
        if (gx) x.ensure_grad();
        if (gw) w.ensure_grad();
        if (gb) b.ensure_grad();
        for (std::size_t o = 0; o < out; ++o) {
            const double g = self.grad[o];
            if (g == 0.0) continue;
            if (gb) b.grad[o] += g;
            for (std::size_t i = 0; i < in; ++i) {
                if (gx) x.grad[i] += g * w.values[o * in + i];
                if (gw) w.grad[o * in + i] += g * x.values[i];
            }
        }
    };
    return Tensor::wrap(n);
}

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          double (*fwd)(double, double),
                          void (*bwd)(TensorNode&, std::size_t)) {
    if (a.dims() != b.dims())
        throw std::invalid_argument(std::string(name) + ": dims mismatch " +
                                    dims_to_string(a.dims()) + " vs " +
                                    dims_to_string(b.dims()));
    auto n = new_node(a.dims(), {a, b});
    for (std::size_t i = 0; i < a.size(); ++i)
        n->values[i] = fwd(a.value(i), b.value(i));
    n->backward_fn = [bwd](TensorNode& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (self.grad[i] != 0.0) bwd(self, i);
    };
    return Tensor::wrap(n);
}

}  // namespace

Tensor add_elementwise(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "add_elementwise", [](double x, double y) { return x + y; },
        [](TensorNode& self, std::size_t i) {
            if (self.parents[0]->requires_grad) self.parents[0]->accumulate(i, self.grad[i]);
            if (self.parents[1]->requires_grad) self.parents[1]->accumulate(i, self.grad[i]);
        });
}

Tensor sub_elementwise(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "sub_elementwise", [](double x, double y) { return x - y; },
        [](TensorNode& self, std::size_t i) {
            if (self.parents[0]->requires_grad) self.parents[0]->accumulate(i, self.grad[i]);
            if (self.parents[1]->requires_grad) self.parents[1]->accumulate(i, -self.grad[i]);
        });
}

Tensor mul_elementwise(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "mul_elementwise", [](double x, double y) { return x * y; },
        [](TensorNode& self, std::size_t i) {
            if (self.parents[0]->requires_grad)
                self.parents[0]->accumulate(i, self.grad[i] * self.parents[1]->values[i]);
            if (self.parents[1]->requires_grad)
                self.parents[1]->accumulate(i, self.grad[i] * self.parents[0]->values[i]);
        });
}

Tensor scale(const Tensor& a, double c) {
    auto n = new_node(a.dims(), {a});
    for (std::size_t i = 0; i < a.size(); ++i) n->values[i] = a.value(i) * c;
    n->backward_fn = [c](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            p.grad[i] += self.grad[i] * c;
    };
    return Tensor::wrap(n);
}

Tensor sum_all(const Tensor& a) {
    auto n = new_node({1}, {a});
    double s = 0.0;
    for (double v : a.values()) s += v;
    n->values[0] = s;
    n->backward_fn = [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (auto& g : p.grad) g += self.grad[0];
    };
    return Tensor::wrap(n);
}

Tensor div_scalar(const Tensor& a, const Tensor& b) {
    if (a.size() != 1 || b.size() != 1)
        throw std::invalid_argument("div_scalar: both operands must be scalar");
    auto n = new_node({1}, {a, b});
    n->values[0] = a.value() / b.value();
    n->backward_fn = [](TensorNode& self) {
        const double av = self.parents[0]->values[0];
        const double bv = self.parents[1]->values[0];
        if (self.parents[0]->requires_grad)
            self.parents[0]->accumulate(0, self.grad[0] / bv);
        if (self.parents[1]->requires_grad)
            self.parents[1]->accumulate(0, -self.grad[0] * av / (bv * bv));
    };
    return Tensor::wrap(n);
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty())
        throw std::invalid_argument("concat_channels: no inputs");
    const std::size_t H = parts[0].dims()[1], W = parts[0].dims()[2];
    std::size_t C = 0;
    for (const auto& p : parts) {
        require_rank(p, 3, "concat_channels input");
        if (p.dims()[1] != H || p.dims()[2] != W)
            throw std::invalid_argument("concat_channels: spatial dims mismatch " +
                                        dims_to_string(p.dims()));
        C += p.dims()[0];
    }
    auto n = std::make_shared<TensorNode>();
    n->dims = {C, H, W};
    n->values.reserve(C * H * W);
    n->is_leaf = false;
    for (const auto& p : parts) {
        n->parents.push_back(p.node());
        if (p.node()->requires_grad) n->requires_grad = true;
        n->values.insert(n->values.end(), p.values().begin(), p.values().end());
    }
    n->backward_fn = [](TensorNode& self) {
        std::size_t off = 0;
        for (auto& pp : self.parents) {
            if (pp->requires_grad) {
                pp->ensure_grad();
                for (std::size_t i = 0; i < pp->values.size(); ++i)
                    pp->grad[i] += self.grad[off + i];
            }
            off += pp->values.size();
        }
    };
    return Tensor::wrap(n);
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> dims) {
    std::size_t sz = 1;
    for (auto d : dims) sz *= d;
    if (sz != a.size())
        throw std::invalid_argument("reshape: cannot view " + dims_to_string(a.dims()) +
                                    " as " + dims_to_string(dims));
    auto n = new_node(std::move(dims), {a});
    n->values = a.values();
    n->backward_fn = [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            p.grad[i] += self.grad[i];
    };
    return Tensor::wrap(n);
}

}  // namespace segcrowd
