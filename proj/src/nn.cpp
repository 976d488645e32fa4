#include "bpr/nn.hpp"

#include <cmath>
#include <numbers>

namespace bpr::nn {

namespace {

void xavier_normal(Matrix& w, Rng& rng) {
    const double sd = std::sqrt(2.0 / static_cast<double>(w.rows() + w.cols()));
    std::normal_distribution<double> normal(0.0, sd);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
}

Matrix softmax_rows(const Matrix& scores) {
    Matrix out(scores.rows(), scores.cols());
    for (Index r = 0; r < scores.rows(); ++r) {
        const double mx = scores.row(r).maxCoeff();
        out.row(r) = (scores.row(r).array() - mx).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * pdf;
}

}  // namespace

Matrix dropout_mask(Index rows, Index cols, const Mode& mode) {
    if (!mode.dropout_active()) return Matrix::Ones(rows, cols);
    if (!mode.rng) throw std::logic_error("dropout requested without a random stream");
    std::bernoulli_distribution keep(1.0 - mode.dropout);
    const double scale = 1.0 / (1.0 - mode.dropout);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = keep(*mode.rng) ? scale : 0.0;
    return m;
}

// ---------------------------------------------------------------- Linear

void Linear::init(Rng& rng) {
    xavier_normal(weight, rng);
    bias.setZero();
}

Matrix Linear::forward(const Matrix& x) const {
    Matrix y = x * weight;
    y.rowwise() += bias.row(0);
    return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy, Linear& grad) const {
    grad.weight.noalias() += x.transpose() * dy;
    grad.bias += dy.colwise().sum();
    return dy * weight.transpose();
}

void Linear::collect(const std::string& prefix, TensorList& out) {
    out.push_back({prefix + "weight", &weight, true});
    out.push_back({prefix + "bias", &bias, false});
}

// ---------------------------------------------------------------- LayerNorm

Matrix LayerNorm::forward(const Matrix& x, Cache& cache) const {
    const double n = static_cast<double>(x.cols());
    cache.xhat.resize(x.rows(), x.cols());
    cache.inv_std.resize(x.rows());
    for (Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).sum() / n;
        const RowVector centered = x.row(r).array() - mean;
        const double var = centered.squaredNorm() / n;
        cache.inv_std(r) = 1.0 / std::sqrt(var + kEps);
        cache.xhat.row(r) = centered * cache.inv_std(r);
    }
    Matrix y = cache.xhat.array().rowwise() * gain.row(0).array();
    y.rowwise() += bias.row(0);
    return y;
}

Matrix LayerNorm::backward(const Cache& cache, const Matrix& dy, LayerNorm& grad) const {
    const double n = static_cast<double>(dy.cols());
    grad.gain += (dy.array() * cache.xhat.array()).matrix().colwise().sum();
    grad.bias += dy.colwise().sum();
    const Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
    Matrix dx(dy.rows(), dy.cols());
    for (Index r = 0; r < dy.rows(); ++r) {
        const double sum = dxhat.row(r).sum();
        const double dot = dxhat.row(r).dot(cache.xhat.row(r));
        dx.row(r) = (cache.inv_std(r) / n) *
                    (n * dxhat.row(r).array() - sum - cache.xhat.row(r).array() * dot).matrix();
    }
    return dx;
}

void LayerNorm::collect(const std::string& prefix, TensorList& out) {
    out.push_back({prefix + "gain", &gain, false});
    out.push_back({prefix + "bias", &bias, false});
}

// ---------------------------------------------------------------- attention

MultiHeadAttention::MultiHeadAttention(Index width, Index heads_)
    : query(width, width), key(width, width), value(width, width), output(width, width), heads(heads_) {
    if (heads_ <= 0 || width % heads_ != 0) {
        throw ValidationError("attention width " + std::to_string(width) + " is not divisible by " +
                              std::to_string(heads_) + " heads");
    }
}

void MultiHeadAttention::init(Rng& rng) {
    query.init(rng);
    key.init(rng);
    value.init(rng);
    output.init(rng);
}

Matrix MultiHeadAttention::forward(const Matrix& x, const Mode& mode, Cache& cache) const {
    const Index n = x.rows();
    const Index width = query.weight.cols();
    const Index dk = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    cache.x = x;
    cache.q = query.forward(x);
    cache.k = key.forward(x);
    cache.v = value.forward(x);
    cache.concat.resize(n, width);
    cache.probs.resize(static_cast<std::size_t>(heads));
    cache.masks.resize(static_cast<std::size_t>(heads));
    for (Index h = 0; h < heads; ++h) {
        const auto hs = static_cast<std::size_t>(h);
        const Matrix scores = cache.q.middleCols(h * dk, dk) * cache.k.middleCols(h * dk, dk).transpose() * scale;
        cache.probs[hs] = softmax_rows(scores);
        cache.masks[hs] = dropout_mask(n, n, mode);
        const Matrix dropped = cache.probs[hs].cwiseProduct(cache.masks[hs]);
        cache.concat.middleCols(h * dk, dk) = dropped * cache.v.middleCols(h * dk, dk);
    }
    return output.forward(cache.concat);
}

Matrix MultiHeadAttention::backward(const Cache& cache, const Matrix& dy, MultiHeadAttention& grad) const {
    const Index width = query.weight.cols();
    const Index dk = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    const Matrix dconcat = output.backward(cache.concat, dy, grad.output);
    Matrix dq(cache.q.rows(), width), dk_all(cache.k.rows(), width), dv(cache.v.rows(), width);
    for (Index h = 0; h < heads; ++h) {
        const auto hs = static_cast<std::size_t>(h);
        const auto& probs = cache.probs[hs];
        const Matrix dropped = probs.cwiseProduct(cache.masks[hs]);
        const auto dout = dconcat.middleCols(h * dk, dk);
        dv.middleCols(h * dk, dk) = dropped.transpose() * dout;
        const Matrix dprobs = (dout * cache.v.middleCols(h * dk, dk).transpose()).cwiseProduct(cache.masks[hs]);
        const Eigen::VectorXd row_dot = dprobs.cwiseProduct(probs).rowwise().sum();
        const Matrix dscores = (probs.array() * (dprobs.colwise() - row_dot).array()).matrix() * scale;
        dq.middleCols(h * dk, dk) = dscores * cache.k.middleCols(h * dk, dk);
        dk_all.middleCols(h * dk, dk) = dscores.transpose() * cache.q.middleCols(h * dk, dk);
    }
    Matrix dx = query.backward(cache.x, dq, grad.query);
    dx += key.backward(cache.x, dk_all, grad.key);
    dx += value.backward(cache.x, dv, grad.value);
    return dx;
}

void MultiHeadAttention::collect(const std::string& prefix, TensorList& out) {
    query.collect(prefix + "query.", out);
    key.collect(prefix + "key.", out);
    value.collect(prefix + "value.", out);
    output.collect(prefix + "output.", out);
}

// ---------------------------------------------------------------- feed-forward

void FeedForward::init(Rng& rng) {
    expand.init(rng);
    contract.init(rng);
}

Matrix FeedForward::forward(const Matrix& x, const Mode& mode, Cache& cache) const {
    cache.x = x;
    cache.pre = expand.forward(x);
    cache.act = cache.pre.unaryExpr([](double v) { return gelu(v); });
    const Matrix y = contract.forward(cache.act);
    cache.mask = dropout_mask(y.rows(), y.cols(), mode);
    return y.cwiseProduct(cache.mask);
}

Matrix FeedForward::backward(const Cache& cache, const Matrix& dy, FeedForward& grad) const {
    const Matrix dcontract = dy.cwiseProduct(cache.mask);
    const Matrix dact = contract.backward(cache.act, dcontract, grad.contract);
    const Matrix dpre = dact.cwiseProduct(cache.pre.unaryExpr([](double v) { return gelu_grad(v); }));
    return expand.backward(cache.x, dpre, grad.expand);
}

void FeedForward::collect(const std::string& prefix, TensorList& out) {
    expand.collect(prefix + "expand.", out);
    contract.collect(prefix + "contract.", out);
}

// ---------------------------------------------------------------- block

TransformerLayer::TransformerLayer(Index width, Index heads, bool skip)
    : norm1(width), attention(width, heads), norm2(width), ffn(width), identity_skip(skip) {}

void TransformerLayer::init(Rng& rng) {
    attention.init(rng);
    ffn.init(rng);
}

Matrix TransformerLayer::forward(const Matrix& x, const Mode& mode, Cache& cache) const {
    const Matrix attn = attention.forward(norm1.forward(x, cache.norm1), mode, cache.attention);
    const Matrix r = x + attn;
    const Matrix f = ffn.forward(norm2.forward(r, cache.norm2), mode, cache.ffn);
    return identity_skip ? Matrix(r + f) : Matrix(attn + f);
}

Matrix TransformerLayer::backward(const Cache& cache, const Matrix& dy, TransformerLayer& grad) const {
    const Matrix dr = norm2.backward(cache.norm2, ffn.backward(cache.ffn, dy, grad.ffn), grad.norm2);
    const Matrix dattn = dy + dr;
    Matrix dx = norm1.backward(cache.norm1, attention.backward(cache.attention, dattn, grad.attention), grad.norm1);
    dx += dr;
    if (identity_skip) dx += dy;
    return dx;
}

void TransformerLayer::collect(const std::string& prefix, TensorList& out) {
    norm1.collect(prefix + "norm1.", out);
    attention.collect(prefix + "attn.", out);
    norm2.collect(prefix + "norm2.", out);
    ffn.collect(prefix + "ffn.", out);
}

// ---------------------------------------------------------------- helpers

Matrix sinusoidal_positions(Index rows, Index width) {
    Matrix pe(rows, width);
    for (Index pos = 0; pos < rows; ++pos) {
        for (Index i = 0; i < width; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
            const double angle = static_cast<double>(pos) * freq;
            pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

Pooling parse_pooling(std::string_view s) {
    if (s == "cls") return Pooling::Cls;
    if (s == "mean") return Pooling::Mean;
    if (s == "max") return Pooling::Max;
    throw ValidationError("unknown pooling strategy: " + std::string(s));
}

std::string to_string(Pooling p) {
    switch (p) {
        case Pooling::Cls: return "cls";
        case Pooling::Mean: return "mean";
        case Pooling::Max: return "max";
    }
    return "?";
}

RowVector pool_sequence(const Matrix& m, Pooling strategy) {
    if (m.rows() == 0) throw ValidationError("cannot pool an empty sequence");
    if (strategy == Pooling::Cls || m.rows() == 1) return m.row(0);
    const auto body = m.bottomRows(m.rows() - 1);
    if (strategy == Pooling::Mean) return body.colwise().mean();
    return body.colwise().maxCoeff();
}

Matrix pool_backward(const Matrix& m, Pooling strategy, const RowVector& dpooled) {
    Matrix dm = Matrix::Zero(m.rows(), m.cols());
    if (strategy == Pooling::Cls || m.rows() == 1) {
        dm.row(0) = dpooled;
    } else if (strategy == Pooling::Mean) {
        const double inv = 1.0 / static_cast<double>(m.rows() - 1);
        for (Index r = 1; r < m.rows(); ++r) dm.row(r) = dpooled * inv;
    } else {
        for (Index c = 0; c < m.cols(); ++c) {
            Index best = 1;
            for (Index r = 2; r < m.rows(); ++r)
                if (m(r, c) > m(best, c)) best = r;
            dm(best, c) = dpooled(c);
        }
    }
    return dm;
}

RowVector l2_normalize(const RowVector& v, double& norm) {
    norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericError("cannot normalize a zero or non-finite vector");
    return v / norm;
}

RowVector l2_normalize_backward(const RowVector& unit, double norm, const RowVector& dunit) {
    return (dunit - unit * unit.dot(dunit)) / norm;
}

}  // namespace bpr::nn
