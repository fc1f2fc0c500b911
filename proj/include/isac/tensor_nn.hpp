// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense neural substrate: forward with cached activations, exact
// reverse-mode gradients, Adam updates, and the truncated-Gaussian policy
// head. Sized for the two tiny networks used here; no autodiff graph.
#ifndef ISAC_TENSOR_NN_HPP
#define ISAC_TENSOR_NN_HPP

#include "isac/common.hpp"

namespace isac {

enum class Activation { Identity, ReLU, Tanh, Softplus };

inline double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::ReLU: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Softplus: return x > 30.0 ? x : std::log1p(std::exp(x));
    }
    return x;
}

// Derivative as a function of the preactivation.
inline double activation_grad(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::ReLU: return x > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::Softplus: return 1.0 / (1.0 + std::exp(-x));
    }
    return 1.0;
}

struct DenseLayer {
    Mat W;  // out x in
    Vec b;
    Activation act = Activation::Identity;
};

struct NetGrads {
    std::vector<Mat> dW;
    std::vector<Vec> db;
    Mat dX;  // gradient w.r.t. the input batch
};

// Cached forward pass; owned by the caller so evaluation stays pure.
struct ForwardCache {
    std::vector<Mat> inputs;   // input to each layer, in x B
    std::vector<Mat> preacts;  // W x + b
    Mat output;
};

class DenseNet {
public:
    DenseNet() = default;

    // dims = {in, h1, ..., out}; hidden layers use `hidden`, the last `last`.
    DenseNet(const std::vector<int>& dims, Activation hidden, Activation last, Rng& rng) {
        require(dims.size() >= 2, "DenseNet: need at least input and output dims");
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            DenseLayer layer;
            layer.W.resize(dims[i + 1], dims[i]);
            layer.b = Vec::Zero(dims[i + 1]);
            const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
            for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
                for (Eigen::Index c = 0; c < layer.W.cols(); ++c)
                    layer.W(r, c) = rng.uniform(-bound, bound);
            layer.act = (i + 2 == dims.size()) ? last : hidden;
            layers.push_back(std::move(layer));
        }
    }

    std::vector<DenseLayer> layers;

    int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().W.rows()); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
        return n;
    }

    // Columns are samples.
    ForwardCache forward_batch(const Mat& X) const {
        if (X.rows() != layers.front().W.cols())
            throw DimensionError("DenseNet: input dimension mismatch");
        ForwardCache cache;
        Mat cur = X;
        for (const auto& layer : layers) {
            cache.inputs.push_back(cur);
            Mat z = (layer.W * cur).colwise() + layer.b;
            cache.preacts.push_back(z);
            cur = z.unaryExpr([&layer](double v) { return apply_activation(layer.act, v); });
        }
        cache.output = cur;
        return cache;
    }

    Vec forward(const Vec& x) const { return forward_batch(x).output.col(0); }

    // Exact reverse-mode gradients for the batch that produced `cache`.
    NetGrads backward(const ForwardCache& cache, const Mat& upstream) const {
        if (cache.preacts.size() != layers.size())
            throw ContractViolation("DenseNet: stale or missing forward cache");
        if (upstream.rows() != layers.back().W.rows() ||
            upstream.cols() != cache.output.cols())
            throw DimensionError("DenseNet: upstream gradient shape mismatch");
        NetGrads g;
        g.dW.resize(layers.size());
        g.db.resize(layers.size());
        Mat delta = upstream;
        for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
            const auto& layer = layers[static_cast<std::size_t>(i)];
            const Mat& z = cache.preacts[static_cast<std::size_t>(i)];
            Mat dz = delta.cwiseProduct(
                z.unaryExpr([&layer](double v) { return activation_grad(layer.act, v); }));
            g.dW[static_cast<std::size_t>(i)] = dz * cache.inputs[static_cast<std::size_t>(i)].transpose();
            g.db[static_cast<std::size_t>(i)] = dz.rowwise().sum();
            delta = layer.W.transpose() * dz;
        }
        g.dX = delta;
        return g;
    }

    // Flat parameter vector, layer by layer, weights column-major then biases.
    Vec flatten() const {
        Vec out(static_cast<Eigen::Index>(param_count()));
        Eigen::Index at = 0;
        for (const auto& l : layers) {
            out.segment(at, l.W.size()) = Eigen::Map<const Vec>(l.W.data(), l.W.size());
            at += l.W.size();
            out.segment(at, l.b.size()) = l.b;
            at += l.b.size();
        }
        return out;
    }

    void unflatten(const Vec& params) {
        require(params.size() == static_cast<Eigen::Index>(param_count()),
                "DenseNet: flat parameter size mismatch");
        Eigen::Index at = 0;
        for (auto& l : layers) {
            Eigen::Map<Vec>(l.W.data(), l.W.size()) = params.segment(at, l.W.size());
            at += l.W.size();
            l.b = params.segment(at, l.b.size());
            at += l.b.size();
        }
    }

    void add_scaled(const Vec& direction, double scale) {
        unflatten(flatten() + scale * direction);
    }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const DenseNet& net) { reset(net); }

    void reset(const DenseNet& net) {
        mW.clear(); vW.clear(); mb.clear(); vb.clear();
        for (const auto& l : net.layers) {
            mW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
            vW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
            mb.push_back(Vec::Zero(l.b.size()));
            vb.push_back(Vec::Zero(l.b.size()));
        }
        t = 0;
    }

    // Standard first/second-moment update with bias correction.
    void step(DenseNet& net, const NetGrads& grads, const AdamConfig& cfg) {
        require(grads.dW.size() == net.layers.size(), "adam_step: gradient layer count mismatch");
        ++t;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            auto& l = net.layers[i];
            mW[i] = cfg.beta1 * mW[i] + (1.0 - cfg.beta1) * grads.dW[i];
            vW[i] = cfg.beta2 * vW[i] + (1.0 - cfg.beta2) * grads.dW[i].cwiseProduct(grads.dW[i]);
            l.W -= (cfg.lr * (mW[i] / c1).array() / ((vW[i] / c2).array().sqrt() + cfg.eps)).matrix();
            mb[i] = cfg.beta1 * mb[i] + (1.0 - cfg.beta1) * grads.db[i];
            vb[i] = cfg.beta2 * vb[i] + (1.0 - cfg.beta2) * grads.db[i].cwiseProduct(grads.db[i]);
            l.b -= (cfg.lr * (mb[i] / c1).array() / ((vb[i] / c2).array().sqrt() + cfg.eps)).matrix();
        }
    }

    long steps() const { return t; }

private:
    std::vector<Mat> mW, vW;
    std::vector<Vec> mb, vb;
    long t = 0;
};

inline void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state,
                      const AdamConfig& cfg) {
    state.step(net, grads, cfg);
}

// ---------------------------------------------------------------------------
// Normal distribution helpers
// ---------------------------------------------------------------------------

inline double norm_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
}

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Acklam's rational approximation with one Halley refinement.
inline double norm_cdf_inv(double p) {
    require(p > 0.0 && p < 1.0, "norm_cdf_inv: p must lie in (0, 1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = norm_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

// ---------------------------------------------------------------------------
// Truncated-Gaussian policy head
// ---------------------------------------------------------------------------

struct TruncGaussHead {
    Vec mean;  // tanh-scaled to the action range
    Vec std;   // softplus output, strictly positive
    double low = 0.0;
    double high = 1.0;
};

struct SampleResult {
    Vec action;
    double logprob = 0.0;
};

namespace detail {

inline double trunc_z(double mean, double std, double low, double high) {
    const double za = (low - mean) / std;
    const double zb = (high - mean) / std;
    return std::max(norm_cdf(zb) - norm_cdf(za), 1e-300);
}

}  // namespace detail

// Log-density of one coordinate, including the truncation normalizer.
inline double trunc_gauss_logprob1(double x, double mean, double std, double low, double high) {
    const double z = (x - mean) / std;
    return -0.5 * z * z - std::log(std) - 0.5 * std::log(2.0 * kPi) -
           std::log(detail::trunc_z(mean, std, low, high));
}

// Inverse-CDF sample of one coordinate.
inline double trunc_gauss_sample1(double mean, double std, double low, double high, Rng& rng) {
    const double fa = norm_cdf((low - mean) / std);
    const double fb = norm_cdf((high - mean) / std);
    const double u = fa + (fb - fa) * rng.uniform();
    const double z = norm_cdf_inv(std::min(std::max(u, 1e-15), 1.0 - 1e-15));
    return std::min(std::max(mean + std * z, low), high);
}

inline SampleResult sample_and_logprob(const TruncGaussHead& head, Rng& rng) {
    require(head.mean.size() == head.std.size(), "sample_and_logprob: mean/std size mismatch");
    SampleResult out;
    out.action.resize(head.mean.size());
    if (head.low == head.high) {  // degenerate bounds: point mass
        out.action.setConstant(head.low);
        out.logprob = 0.0;
        return out;
    }
    for (Eigen::Index i = 0; i < head.mean.size(); ++i) {
        require(head.std[i] > 0.0, "sample_and_logprob: std must be positive");
        out.action[i] = trunc_gauss_sample1(head.mean[i], head.std[i], head.low, head.high, rng);
        out.logprob += trunc_gauss_logprob1(out.action[i], head.mean[i], head.std[i],
                                            head.low, head.high);
    }
    return out;
}

inline double logprob(const TruncGaussHead& head, const Vec& action) {
    require(action.size() == head.mean.size(), "logprob: action size mismatch");
    if (head.low == head.high) return 0.0;
    double lp = 0.0;
    for (Eigen::Index i = 0; i < head.mean.size(); ++i)
        lp += trunc_gauss_logprob1(action[i], head.mean[i], head.std[i], head.low, head.high);
    return lp;
}

// Analytic d(logprob)/d(mean) and d(logprob)/d(std) per coordinate; the policy
// update chains these through the tanh / softplus head layers.
struct LogprobGrads {
    Vec dmean;
    Vec dstd;
};

inline LogprobGrads logprob_grads(const TruncGaussHead& head, const Vec& action) {
    LogprobGrads g;
    g.dmean.resize(head.mean.size());
    g.dstd.resize(head.mean.size());
    if (head.low == head.high) {
        g.dmean.setZero();
        g.dstd.setZero();
        return g;
    }
    for (Eigen::Index i = 0; i < head.mean.size(); ++i) {
        const double s = head.std[i];
        const double z = (action[i] - head.mean[i]) / s;
        const double za = (head.low - head.mean[i]) / s;
        const double zb = (head.high - head.mean[i]) / s;
        const double Z = detail::trunc_z(head.mean[i], s, head.low, head.high);
        g.dmean[i] = z / s + (norm_pdf(zb) - norm_pdf(za)) / (Z * s);
        g.dstd[i] = (z * z - 1.0) / s + (zb * norm_pdf(zb) - za * norm_pdf(za)) / (Z * s);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Parameter checkpoints: CSV of (layer, kind, index, value), bit-exact
// ---------------------------------------------------------------------------

inline void save_checkpoint(const DenseNet& net, std::ostream& out) {
    out << "layer,kind,index,value\n";
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        for (Eigen::Index j = 0; j < l.W.size(); ++j)
            out << i << ",W," << j << ',' << format_double_hex(l.W.data()[j]) << '\n';
        for (Eigen::Index j = 0; j < l.b.size(); ++j)
            out << i << ",b," << j << ',' << format_double_hex(l.b[j]) << '\n';
    }
}

inline void save_checkpoint(const DenseNet& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open checkpoint for writing: " + path);
    save_checkpoint(net, f);
}

inline void load_checkpoint(DenseNet& net, std::istream& in) {
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string layer_s, kind, index_s, value_s;
        std::getline(ss, layer_s, ',');
        std::getline(ss, kind, ',');
        std::getline(ss, index_s, ',');
        std::getline(ss, value_s, ',');
        const std::size_t li = std::stoul(layer_s);
        const Eigen::Index j = static_cast<Eigen::Index>(std::stol(index_s));
        const double v = std::strtod(value_s.c_str(), nullptr);
        if (li >= net.layers.size()) throw ConfigError("checkpoint: layer out of range");
        if (kind == "W") {
            if (j >= net.layers[li].W.size()) throw ConfigError("checkpoint: W index out of range");
            net.layers[li].W.data()[j] = v;
        } else if (kind == "b") {
            if (j >= net.layers[li].b.size()) throw ConfigError("checkpoint: b index out of range");
            net.layers[li].b[j] = v;
        } else {
            throw ConfigError("checkpoint: unknown kind " + kind);
        }
    }
}

inline void load_checkpoint(DenseNet& net, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open checkpoint for reading: " + path);
    load_checkpoint(net, f);
}

}  // namespace isac

#endif  // ISAC_TENSOR_NN_HPP
