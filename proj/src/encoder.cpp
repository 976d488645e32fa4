#include "bpr/encoder.hpp"

#include "bpr/binary_io.hpp"

#include <cmath>

namespace bpr::encoder {

void EncoderDims::validate() const {
    if (feature_dim <= 0 || model_dim <= 0 || out_dim <= 0 || layers <= 0 || heads <= 0) {
        throw ValidationError("encoder dimensions must be positive");
    }
    if (model_dim % heads != 0 || out_dim % heads != 0) {
        throw ValidationError("model_dim and out_dim must be divisible by heads");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

// ---------------------------------------------------------------- signal side

SignalEncoder::SignalEncoder(const EncoderDims& dims)
    : input(dims.feature_dim, dims.model_dim),
      cls(Matrix::Zero(1, dims.model_dim)),
      output(dims.model_dim, dims.out_dim),
      positions_(nn::sinusoidal_positions(kMaxSequenceLength + 1, dims.model_dim)) {
    dims.validate();
    for (Index l = 0; l < dims.layers; ++l) layers.emplace_back(dims.model_dim, dims.heads);
}

void SignalEncoder::init(Rng& rng) {
    input.init(rng);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (Index i = 0; i < cls.size(); ++i) cls.data()[i] = normal(rng);
    for (auto& layer : layers) layer.init(rng);
    output.init(rng);
}

RowVector SignalEncoder::forward(const Matrix& x, Pooling pooling, const nn::Mode& mode, Cache& cache) const {
    if (x.cols() != feature_dim()) {
        throw ValidationError("signal query width " + std::to_string(x.cols()) + " does not match encoder input " +
                              std::to_string(feature_dim()));
    }
    if (x.rows() < 1 || x.rows() > kMaxSequenceLength) throw ValidationError("signal query length out of range");
    const Index n = x.rows();
    cache.x = x;
    Matrix h(n + 1, model_dim());
    h.row(0) = cls.row(0);
    h.bottomRows(n) = input.forward(x);
    h += positions_.topRows(n + 1);
    cache.layers.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) h = layers[l].forward(h, mode, cache.layers[l]);
    cache.final_states = h;
    cache.pooling = pooling;
    cache.pooled = nn::pool_sequence(h, pooling);
    const RowVector z = output.forward(cache.pooled);
    cache.unit = nn::l2_normalize(z, cache.norm);
    if (!cache.unit.allFinite()) throw NumericError("signal encoder produced non-finite output");
    return cache.unit;
}

void SignalEncoder::backward(const Cache& cache, const RowVector& dembedding, SignalEncoder& grad) const {
    const RowVector dz = nn::l2_normalize_backward(cache.unit, cache.norm, dembedding);
    const RowVector dpooled = output.backward(cache.pooled, dz, grad.output);
    Matrix dh = nn::pool_backward(cache.final_states, cache.pooling, dpooled);
    for (std::size_t l = layers.size(); l-- > 0;) dh = layers[l].backward(cache.layers[l], dh, grad.layers[l]);
    grad.cls += dh.row(0);
    input.backward(cache.x, dh.bottomRows(dh.rows() - 1), grad.input);
}

Embedding SignalEncoder::encode(const Matrix& x, Pooling pooling, const nn::Mode& mode) const {
    Cache cache;
    return {forward(x, pooling, mode, cache), Modality::Signal};
}

void SignalEncoder::collect(const std::string& prefix, nn::TensorList& out) {
    input.collect(prefix + "input.", out);
    out.push_back({prefix + "cls", &cls, false});
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(prefix + "layers." + std::to_string(l) + ".", out);
    output.collect(prefix + "output.", out);
}

Index SignalEncoder::parameter_count(const EncoderDims& d) {
    return d.feature_dim * d.model_dim + d.model_dim       // input projection
           + d.model_dim                                   // cls
           + d.layers * nn::TransformerLayer::parameter_count(d.model_dim)
           + d.model_dim * d.out_dim + d.out_dim;          // output projection
}

// ---------------------------------------------------------------- hashed provider

HashedTextProvider::HashedTextProvider(Index width, Index heads, std::uint64_t seed, int hash_bits)
    : width_(width),
      seed_(seed),
      hash_bits_(hash_bits),
      mixing_(width, heads, true),
      positions_(nn::sinusoidal_positions(kMaxSequenceLength + 1, width) / std::sqrt(static_cast<double>(width))) {
    if (hash_bits < 1 || hash_bits > 64) throw ValidationError("hash width must be in [1, 64] bits");
    Rng cls_rng = SeedBuilder(seed).mix(stream::kProvider).mix("cls").rng();
    std::normal_distribution<double> normal(0.0, 1.0);
    cls_.resize(width);
    for (Index i = 0; i < width; ++i) cls_(i) = normal(cls_rng);
    cls_.normalize();
    Rng mix_rng = SeedBuilder(seed).mix(stream::kProvider).mix("mixing").rng();
    mixing_.init(mix_rng);
}

std::uint64_t HashedTextProvider::token_hash(std::string_view token) const {
    const std::uint64_t h = fnv1a64(token);
    return hash_bits_ == 64 ? h : (h & ((std::uint64_t{1} << hash_bits_) - 1));
}

RowVector HashedTextProvider::word_vector(std::string_view token) const {
    Rng rng = SeedBuilder(seed_).mix(stream::kProvider).mix(token_hash(token)).rng();
    std::normal_distribution<double> normal(0.0, 1.0);
    RowVector v(width_);
    for (Index i = 0; i < width_; ++i) v(i) = normal(rng);
    return v.normalized();
}

Matrix HashedTextProvider::token_vectors(const TextInput& input) const {
    Matrix m(static_cast<Index>(input.tokens.size()), width_);
    for (std::size_t i = 0; i < input.tokens.size(); ++i) m.row(static_cast<Index>(i)) = word_vector(input.tokens[i]);
    return m;
}

Matrix HashedTextProvider::embed(const TextInput& input) const {
    const auto n = static_cast<Index>(input.tokens.size());
    if (n == 0) throw ValidationError("cannot embed an empty token list");
    if (n > kMaxSequenceLength) throw ValidationError("token sequence longer than 512");
    Matrix x(n + 1, width_);
    x.row(0) = cls_;
    x.bottomRows(n) = token_vectors(input);
    x += positions_.topRows(n + 1);
    nn::TransformerLayer::Cache cache;
    return mixing_.forward(x, nn::eval_mode(), cache);
}

// ---------------------------------------------------------------- file provider

namespace {
constexpr char kEmbeddingMagic[] = {'B', 'P', 'R', 'E'};
}

std::vector<char> encode_embedding_file(const std::map<std::string, FloatMatrix>& entries) {
    io::ByteWriter w;
    w.raw(std::string_view(kEmbeddingMagic, 4));
    w.u32(1);
    w.u64(entries.size());
    for (const auto& [pid, m] : entries) {
        w.short_string(pid);
        w.u32(static_cast<std::uint32_t>(m.rows()));
        w.u32(static_cast<std::uint32_t>(m.cols()));
        for (Index i = 0; i < m.size(); ++i) w.f32(m.data()[i]);
    }
    return w.bytes();
}

std::map<std::string, FloatMatrix> decode_embedding_file(std::vector<char> bytes) {
    io::ByteReader r(std::move(bytes));
    if (r.remaining() < 4 || r.raw(4, "magic") != std::string_view(kEmbeddingMagic, 4)) {
        throw FormatError("embedding file: bad magic (expected BPRE)");
    }
    if (const auto v = r.u32(); v != 1) throw FormatError("embedding file: unsupported version " + std::to_string(v));
    const std::uint64_t count = r.u64();
    std::map<std::string, FloatMatrix> entries;
    for (std::uint64_t e = 0; e < count; ++e) {
        std::string pid = r.short_string("passage_id");
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        r.require(static_cast<std::size_t>(rows) * cols * 4, "embedding values");
        FloatMatrix m(rows, cols);
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = r.f32();
        if (!entries.emplace(pid, std::move(m)).second) throw FormatError("embedding file: duplicate entry " + pid);
    }
    if (!r.at_end()) throw FormatError("embedding file: trailing bytes at offset " + std::to_string(r.offset()));
    return entries;
}

FileTextProvider::FileTextProvider(std::map<std::string, FloatMatrix> entries) {
    for (auto& [pid, m] : entries) {
        if (m.rows() < 2) throw ValidationError("embedding entry " + pid + " needs a cls row and at least one token");
        if (width_ == 0) width_ = m.cols();
        if (m.cols() != width_) throw ValidationError("embedding entry " + pid + " has inconsistent width");
        entries_.emplace(pid, std::move(m));
    }
    if (entries_.empty()) throw ValidationError("embedding file has no entries");
}

FileTextProvider FileTextProvider::load(const std::string& path) {
    return FileTextProvider(decode_embedding_file(io::read_file(path)));
}

const FloatMatrix& FileTextProvider::entry(std::string_view passage_id) const {
    auto it = entries_.find(passage_id);
    if (it == entries_.end()) throw ValidationError("embedding file has no entry for passage " + std::string(passage_id));
    return it->second;
}

Matrix FileTextProvider::token_vectors(const TextInput& input) const {
    const FloatMatrix& m = entry(input.passage_id);
    const auto n = static_cast<Index>(input.tokens.size());
    Matrix out(n, width_);
    for (Index i = 0; i < n; ++i) {
        const Index source = input.positions.empty() ? i : static_cast<Index>(input.positions[static_cast<std::size_t>(i)]);
        if (source + 1 >= m.rows()) throw ValidationError("token position outside embedding entry " + std::string(input.passage_id));
        out.row(i) = m.row(source + 1).cast<double>();
    }
    return out;
}

Matrix FileTextProvider::embed(const TextInput& input) const {
    if (input.tokens.empty()) throw ValidationError("cannot embed an empty token list");
    const FloatMatrix& m = entry(input.passage_id);
    Matrix out(static_cast<Index>(input.tokens.size()) + 1, width_);
    out.row(0) = m.row(0).cast<double>();
    out.bottomRows(out.rows() - 1) = token_vectors(input);
    return out;
}

// ---------------------------------------------------------------- adapter

PassageAdapter::PassageAdapter(Index width, Index heads) : layer(width, heads, false), residual_norm(width) {}

void PassageAdapter::init(Rng& rng) { layer.init(rng); }

RowVector PassageAdapter::forward(const Matrix& p0, Pooling pooling, const nn::Mode& mode, Cache& cache) const {
    cache.states = layer.forward(p0, mode, cache.layer) + residual_norm.forward(p0, cache.norm);
    cache.pooling = pooling;
    cache.unit = nn::l2_normalize(nn::pool_sequence(cache.states, pooling), cache.norm_value);
    if (!cache.unit.allFinite()) throw NumericError("passage encoder produced non-finite output");
    return cache.unit;
}

void PassageAdapter::backward(const Cache& cache, const RowVector& dembedding, PassageAdapter& grad) const {
    const RowVector dpooled = nn::l2_normalize_backward(cache.unit, cache.norm_value, dembedding);
    const Matrix dstates = nn::pool_backward(cache.states, cache.pooling, dpooled);
    // P0 is frozen; input gradients are discarded
    layer.backward(cache.layer, dstates, grad.layer);
    residual_norm.backward(cache.norm, dstates, grad.residual_norm);
}

void PassageAdapter::collect(const std::string& prefix, nn::TensorList& out) {
    layer.collect(prefix + "layer.", out);
    residual_norm.collect(prefix + "residual_norm.", out);
}

Embedding encode_text_passage(const TextInput& input, const TextProvider& provider, const PassageAdapter& adapter,
                              Pooling pooling, const nn::Mode& mode) {
    PassageAdapter::Cache cache;
    return {adapter.forward(provider.embed(input), pooling, mode, cache), Modality::Text};
}

}  // namespace bpr::encoder
